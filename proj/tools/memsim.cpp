// memsim command-line front end.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "memsim/errors.hpp"
#include "memsim/harness.hpp"

namespace fs = std::filesystem;
using memsim::harness::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "random seed (default: the config's, else 1)");
  cmd->add_option("--out", c.out, "output directory, or a .json report / .csv metrics path");
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  // full validation, including line information, happens in parse_config
  memsim::harness::parse_config(ss.str());
  return json::parse(ss.str());
}

struct Target {
  fs::path dir;
  std::string report = "report.json";
  std::string metrics_csv;  ///< rename of metrics.csv, if requested
};

Target resolve_out(const std::string& out, const std::string& config_dir) {
  Target t;
  if (out.empty()) {
    t.dir = config_dir;
    return t;
  }
  const fs::path p(out);
  const std::string ext = p.extension().string();
  if (ext == ".json" || ext == ".csv") {
    t.dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
    if (ext == ".json") {
      t.report = p.filename().string();
    } else {
      t.metrics_csv = p.filename().string();
    }
  } else {
    t.dir = p;
  }
  return t;
}

void print_metrics(const memsim::harness::ExperimentResult& r) {
  for (const auto& rec : r.records) {
    std::cout << rec.experiment() << " (seed " << rec.seed() << ")\n";
    for (const auto& [k, v] : rec.metrics())
      std::cout << "  " << k << " = " << memsim::harness::format_number(v) << '\n';
  }
}

int run(const std::string& experiment, const Common& c, json overrides) {
  std::uint64_t seed = 1;
  if (!c.config.empty()) {
    json file = read_json_file(c.config);
    if (file.contains("experiment") && file["experiment"] != experiment)
      std::cerr << "note: config names experiment " << file["experiment"] << ", running " << experiment
                << '\n';
    if (file.contains("seed")) seed = file["seed"].get<std::uint64_t>();
    file.erase("experiment");
    file.erase("seed");
    file.merge_patch(overrides);
    overrides = std::move(file);
  }
  if (c.seed) seed = *c.seed;
  auto cfg = memsim::harness::default_config(experiment, seed, overrides);
  for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << '\n';
  const Target t = resolve_out(c.out, cfg.output_dir);
  cfg.output_dir = t.dir.string();
  auto result = memsim::harness::run_experiment(cfg, t.report);
  if (!t.metrics_csv.empty() && t.metrics_csv != "metrics.csv")
    fs::rename(t.dir / "metrics.csv", t.dir / t.metrics_csv);
  print_metrics(result);
  std::cout << "wrote " << (t.dir / t.report).string() << '\n';
  return 0;
}

int list_experiments() {
  std::size_t wn = 0, wm = 0, wf = 0;
  for (const auto& e : memsim::harness::registry()) {
    wn = std::max(wn, e.name.size());
    wm = std::max(wm, e.module.size());
    wf = std::max(wf, e.figure.size());
  }
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w + 2 - s.size(), ' '); };
  for (const auto& e : memsim::harness::registry())
    std::cout << pad(e.name, wn) << pad(e.module, wm) << pad(e.figure, wf) << e.description << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memristive in-memory computing simulator"};
  app.require_subcommand(1);

  auto* list = app.add_subcommand("list", "list registered experiments");

  Common run_opts;
  std::string run_experiment_name;
  auto* run_cmd = app.add_subcommand("run", "run an experiment from a config file");
  add_common(run_cmd, run_opts);
  run_cmd->add_option("--experiment", run_experiment_name, "experiment name (when no config is given)");

  Common xbar_opts;
  auto* xbar = app.add_subcommand("crossbar", "crossbar experiments");
  auto* xbar_mvm = xbar->add_subcommand("mvm", "analog MVM against float products");
  add_common(xbar_mvm, xbar_opts);
  xbar->require_subcommand(1);

  Common cs_opts;
  std::optional<int> cs_n, cs_m, cs_k, cs_iters, cs_trials;
  std::optional<double> cs_lambda;
  std::string cs_profile, cs_image;
  auto* cs = app.add_subcommand("cs", "compressed sensing with AMP recovery");
  add_common(cs, cs_opts);
  cs->add_option("--n", cs_n, "signal length");
  cs->add_option("--m", cs_m, "measurements");
  cs->add_option("--k", cs_k, "nonzeros");
  cs->add_option("--iters", cs_iters, "AMP iterations");
  cs->add_option("--lambda", cs_lambda, "threshold multiplier");
  cs->add_option("--trials", cs_trials, "independent problems; > 1 runs the ideal vs noisy comparison");
  cs->add_option("--noise-profile", cs_profile, "device profile")->check(CLI::IsMember({"ideal", "pcm"}));
  cs->add_option("--image", cs_image, "8-bit PGM to compress block by block")->check(CLI::ExistingFile);

  Common dnn_opts;
  std::string dnn_data;
  std::optional<int> dnn_epochs;
  auto* dnn = app.add_subcommand("dnn", "mixed-precision training and drift inference");
  auto* dnn_train = dnn->add_subcommand("train", "train float, ideal and device networks");
  auto* dnn_infer = dnn->add_subcommand("infer", "accuracy of a programmed network under drift");
  for (auto* c : {dnn_train, dnn_infer}) {
    add_common(c, dnn_opts);
    c->add_option("--data", dnn_data, "MNIST directory (IDX files); bundled digits when absent");
    c->add_option("--epochs", dnn_epochs, "training epochs");
  }
  dnn->require_subcommand(1);

  Common snn_opts;
  std::optional<int> snn_n, snn_steps;
  std::optional<double> eff_p, eff_ratio, eff_add, eff_mul;
  auto* snn = app.add_subcommand("snn", "spiking networks");
  auto* snn_corr = snn->add_subcommand("correlation", "STDP correlation detection");
  add_common(snn_corr, snn_opts);
  snn_corr->add_option("--n-per-synapse", snn_n, "devices per synapse (default: runs 1 and 7)");
  snn_corr->add_option("--steps", snn_steps, "simulation steps");
  auto* snn_eff = snn->add_subcommand("efficiency", "event-driven cost inequality");
  add_common(snn_eff, snn_opts);
  snn_eff->add_option("--p", eff_p, "spike probability per step");
  snn_eff->add_option("--ratio", eff_ratio, "T / dt");
  snn_eff->add_option("--c-add", eff_add, "cost of an addition");
  snn_eff->add_option("--c-mul", eff_mul, "cost of a multiplication");
  snn->require_subcommand(1);

  Common psnn_opts;
  std::string psnn_task = "classify", psnn_encoder;
  std::optional<int> psnn_epochs, psnn_seeds;
  auto* psnn = app.add_subcommand("psnn", "probabilistic spiking networks");
  auto* psnn_train = psnn->add_subcommand("train", "REINFORCE training");
  add_common(psnn_train, psnn_opts);
  psnn_train->add_option("--task", psnn_task, "task")->check(CLI::IsMember({"target-raster", "classify"}));
  psnn_train->add_option("--encoder", psnn_encoder, "input encoding for classify")
      ->check(CLI::IsMember({"rate", "grf", "both"}));
  psnn_train->add_option("--epochs", psnn_epochs, "epochs");
  psnn_train->add_option("--seeds", psnn_seeds, "independent repetitions");
  psnn->require_subcommand(1);

  Common res_opts;
  std::string res_task = "narma10", res_kind;
  std::optional<int> res_nodes;
  std::optional<double> res_rho, res_leak;
  auto* res = app.add_subcommand("reservoir", "echo-state network on NARMA-10");
  add_common(res, res_opts);
  res->add_option("--task", res_task, "task")->check(CLI::IsMember({"narma10"}));
  res->add_option("--nodes", res_nodes, "reservoir size");
  res->add_option("--rho", res_rho, "spectral radius");
  res->add_option("--leak", res_leak, "leak rate");
  res->add_option("--node-kind", res_kind, "node type")->check(CLI::IsMember({"tanh", "volatile"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (list->parsed()) return list_experiments();

    if (run_cmd->parsed()) {
      if (run_opts.config.empty()) {
        if (run_experiment_name.empty()) {
          std::cerr << "run: --config or --experiment is required\n";
          return 2;
        }
        return run(run_experiment_name, run_opts, json::object());
      }
      json file = read_json_file(run_opts.config);
      return run(file["experiment"].get<std::string>(), run_opts, json::object());
    }

    if (xbar_mvm->parsed()) return run("crossbar_mvm", xbar_opts, json::object());

    if (cs->parsed()) {
      json o = json::object();
      if (cs_n) o["cs"]["n"] = *cs_n;
      if (cs_m) o["cs"]["m"] = *cs_m;
      if (cs_k) o["cs"]["k"] = *cs_k;
      if (cs_iters) o["cs"]["iters"] = *cs_iters;
      if (cs_lambda) o["cs"]["lambda"] = *cs_lambda;
      if (cs_trials) o["cs"]["trials"] = *cs_trials;
      if (!cs_image.empty()) o["cs"]["image"] = cs_image;
      if (!cs_profile.empty()) o["device"]["profile"] = cs_profile;
      return run(cs_trials && *cs_trials > 1 ? "fig4_cs_recovery" : "cs_basic", cs_opts, o);
    }

    if (dnn_train->parsed() || dnn_infer->parsed()) {
      json o = json::object();
      if (!dnn_data.empty()) o["dnn"]["data"] = dnn_data;
      if (dnn_epochs) o["dnn"]["epochs"] = *dnn_epochs;
      return run(dnn_train->parsed() ? "fig7_mnist_mixed_precision" : "fig6_drift_inference", dnn_opts, o);
    }

    if (snn_corr->parsed()) {
      json o = json::object();
      if (snn_n) o["snn"]["n_per_synapse"] = json::array({*snn_n});
      if (snn_steps) o["snn"]["steps"] = *snn_steps;
      return run("fig9_correlation", snn_opts, o);
    }
    if (snn_eff->parsed()) {
      json o = json::object();
      if (eff_p) o["snn"]["efficiency"]["p"] = *eff_p;
      if (eff_ratio) o["snn"]["efficiency"]["ratio_t_dt"] = *eff_ratio;
      if (eff_add) o["snn"]["efficiency"]["c_add"] = *eff_add;
      if (eff_mul) o["snn"]["efficiency"]["c_mul"] = *eff_mul;
      return run("snn_efficiency", snn_opts, o);
    }

    if (psnn_train->parsed()) {
      json o = json::object();
      if (!psnn_encoder.empty()) o["psnn"]["encoder"] = psnn_encoder;
      if (psnn_epochs) o["psnn"]["epochs"] = *psnn_epochs;
      if (psnn_seeds) o["psnn"]["seeds"] = *psnn_seeds;
      return run(psnn_task == "classify" ? "fig11_encoding" : "psnn_target", psnn_opts, o);
    }

    if (res->parsed()) {
      json o = json::object();
      o["reservoir"]["task"] = res_task;
      if (res_nodes) o["reservoir"]["nodes"] = *res_nodes;
      if (res_rho) o["reservoir"]["rho"] = *res_rho;
      if (res_leak) o["reservoir"]["leak"] = *res_leak;
      if (!res_kind.empty()) o["reservoir"]["node_kind"] = res_kind;
      return run("fig14_reservoir", res_opts, o);
    }
  } catch (const std::exception& e) {
    const json err = memsim::harness::error_json(e);
    std::cerr << err.dump() << '\n';
    return memsim::harness::exit_code_for(e);
  }
  return 2;
}
