#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "doctest.h"
#include "memsim/errors.hpp"
#include "memsim/harness.hpp"

using namespace memsim;
using namespace memsim::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("memsim_test_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Smallest settings that still exercise every code path of an experiment.
json tiny(const std::string& name) {
  if (name == "crossbar_mvm") return {{"crossbar", {{"n_matrices", 3}, {"max_dim", 20}}}};
  if (name == "fig4_cs_recovery") return {{"cs", {{"trials", 2}, {"image_size", 32}}}};
  if (name == "fig6_drift_inference")
    return {{"dnn", {{"layers", json::array({8})}, {"epochs", 1}, {"drift_seeds", 1}}}};
  if (name == "fig7_mnist_mixed_precision") return {{"dnn", {{"layers", json::array({8})}, {"epochs", 1}}}};
  if (name == "fig9_correlation") return {{"snn", {{"n_synapses", 100}, {"steps", 300}}}};
  if (name == "fig11_encoding")
    return {{"psnn", {{"epochs", 3}, {"seeds", 1}, {"lr", json::array({0.02})}, {"test_samples", 4}}}};
  if (name == "psnn_target") return {{"psnn", {{"epochs", 5}, {"seeds", 1}, {"eval_reps", 4}}}};
  if (name == "fig14_reservoir")
    return {{"reservoir",
             {{"nodes", 20}, {"train_length", 300}, {"test_length", 100}, {"echo_steps", 50}}}};
  return json::object();
}

}  // namespace

TEST_CASE("minimal config is filled with documented defaults") {
  auto c = parse_config(R"({"experiment":"cs_basic","seed":1})");
  CHECK(c.experiment == "cs_basic");
  CHECK(c.seed == 1);
  CHECK(c.warnings.empty());
  CHECK(c.cs.at("n") == 256);
  CHECK(c.cs.at("m") == 128);
  CHECK(c.cs.at("k") == 10);
  CHECK(c.crossbar.at("programming").at("tol").get<double>() == 1e-6);
  CHECK(c.device_profile == "ideal");
  CHECK(c.device.prog_noise_rel == 0.0);
  const json full = c.to_json();
  for (const char* k : {"experiment", "seed", "device", "crossbar", "cs", "dnn", "snn", "psnn", "reservoir",
                        "output_dir"})
    CHECK(full.contains(k));
  CHECK(full["device"]["g_max"].get<double>() == 25.0);
}

TEST_CASE("file values override defaults, nested blocks merge key by key") {
  auto c = parse_config(R"({"experiment":"fig14_reservoir","seed":7,
    "reservoir":{"rho":0.5},"crossbar":{"programming":{"max_iter":3}},
    "device":{"profile":"pcm","drift_nu":0.01},"output_dir":"somewhere"})");
  CHECK(c.reservoir.at("rho").get<double>() == 0.5);
  CHECK(c.reservoir.at("leak").get<double>() == 1.0);  // experiment default
  CHECK(c.reservoir.at("nodes") == 200);
  CHECK(c.crossbar.at("programming").at("max_iter") == 3);
  CHECK(c.crossbar.at("programming").at("mode") == "iterative");
  CHECK(c.device_profile == "pcm");
  CHECK(c.device.drift_nu == 0.01);
  CHECK(c.device.prog_noise_rel == 0.1);
  CHECK(c.output_dir == "somewhere");
}

TEST_CASE("unknown keys produce warnings listing the valid keys") {
  auto c = parse_config(R"({"experiment":"cs_basic","seed":1,"cs":{"nn":4},"colour":"red","device":{"gmax":3}})");
  REQUIRE(c.warnings.size() == 3);
  CHECK(c.warnings[0].find("device.gmax") != std::string::npos);
  CHECK(c.warnings[0].find("g_max") != std::string::npos);
  bool cs_seen = false;
  for (const auto& w : c.warnings)
    if (w.find("cs.nn") != std::string::npos) {
      cs_seen = true;
      CHECK(w.find("iters") != std::string::npos);
    }
  CHECK(cs_seen);
  CHECK(c.cs.at("n") == 256);
}

TEST_CASE("configuration errors") {
  SUBCASE("malformed JSON names the offset and line") {
    try {
      parse_config("{\"experiment\": \"cs_basic\",\n \"seed\": 1,, }");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string m = e.what();
      CHECK(m.find("offset") != std::string::npos);
      CHECK(m.find("line 2") != std::string::npos);
    }
  }
  CHECK_THROWS_AS(parse_config(R"({"experiment":"no_such_thing","seed":1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"experiment":"cs_basic"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"seed":1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"experiment":"cs_basic","seed":-3})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"experiment":"cs_basic","seed":1.5})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"experiment":"cs_basic","seed":1,"cs":{"n":"big"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"experiment":"cs_basic","seed":1,"cs":{"n":2.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"experiment":"cs_basic","seed":1,"device":{"profile":"rram"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"experiment":"cs_basic","seed":1,"device":{"g_min":-1}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config("[1,2]"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("device JSON round trip") {
  DeviceParams p;
  p.drift_nu_cv = 0.25;
  p.g_max = 30.0;
  json j;
  device_to_json(p, j);
  DeviceParams q = DeviceParams::ideal();
  device_from_json(j, q);
  CHECK(q.g_max == 30.0);
  CHECK(q.drift_nu_cv == 0.25);
  CHECK(q.prog_noise_rel == p.prog_noise_rel);
  CHECK(q.kappa_reset == p.kappa_reset);
}

TEST_CASE("metrics records reject non-finite values and repeated keys") {
  MetricsRecord r("cs_basic", 3);
  r.add("a", 1.5);
  CHECK_THROWS_AS(r.add("b", std::numeric_limits<double>::quiet_NaN()), DomainError);
  CHECK_THROWS_AS(r.add("c", std::numeric_limits<double>::infinity()), DomainError);
  CHECK_THROWS_AS(r.add("a", 2.0), DomainError);
  CHECK(r.metrics().size() == 1);
  CHECK(r.at("a") == 1.5);
  CHECK(r.software_version() == version());
  CHECK(r.timestamp().size() == 20);
}

TEST_CASE("emit_metrics: header-only, one row, stable columns, overwrite") {
  const fs::path dir = scratch("emit");
  emit_metrics({}, dir);
  CHECK(slurp(dir / "metrics.csv") == "experiment,seed,timestamp,version\n");
  CHECK(json::parse(slurp(dir / "metrics.json"))["records"].empty());

  MetricsRecord a("x", 1), b("x", 2);
  a.add("loss", 0.25).add("acc", 0.5);
  b.add("acc", 0.75).add("extra", 3);
  emit_metrics({a}, dir);
  std::istringstream one(slurp(dir / "metrics.csv"));
  std::string header, row, rest;
  std::getline(one, header);
  std::getline(one, row);
  CHECK(header == "experiment,seed,timestamp,version,loss,acc");
  CHECK(row.rfind("x,1,", 0) == 0);
  CHECK(row.substr(row.size() - 9) == ",0.25,0.5");
  CHECK(!std::getline(one, rest));

  emit_metrics({a, b}, dir);
  std::istringstream two(slurp(dir / "metrics.csv"));
  std::getline(two, header);
  CHECK(header == "experiment,seed,timestamp,version,loss,acc,extra");
  std::getline(two, row);
  std::getline(two, row);
  CHECK(row.substr(row.size() - 8) == ",,0.75,3");
  const json j = json::parse(slurp(dir / "metrics.json"));
  CHECK(j["records"].size() == 2);
  CHECK(j["records"][1]["metrics"]["extra"].get<double>() == 3.0);
  fs::remove_all(dir);
}

TEST_CASE("format_number round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.0, 0.0, 1e22}) {
    const std::string s = format_number(v);
    CHECK(std::stod(s) == v);
  }
  CHECK(format_number(3.0) == "3");
}

TEST_CASE("PGM write/read round trip and P2 input") {
  const fs::path dir = scratch("pgm");
  fs::create_directories(dir);
  GrayImage img{3, 2, {0, 10, 20, 255, 128, 7}};
  write_pgm(dir / "a.pgm", img);
  const std::string bytes = slurp(dir / "a.pgm");
  CHECK(bytes.rfind("P5\n3 2\n255\n", 0) == 0);
  CHECK(bytes.size() == 11 + 6);
  GrayImage back = read_pgm(dir / "a.pgm");
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  CHECK(back.pixels == img.pixels);

  std::ofstream(dir / "b.pgm") << "P2\n# comment\n2 1\n15\n0 15\n";
  GrayImage p2 = read_pgm(dir / "b.pgm");
  CHECK(p2.pixels == std::vector<std::uint8_t>{0, 255});

  std::ofstream(dir / "c.pgm") << "P5\n4 4\n255\nab";
  CHECK_THROWS_AS(read_pgm(dir / "c.pgm"), Error);
  std::ofstream(dir / "d.pgm") << "P6\n1 1\n255\nabc";
  CHECK_THROWS_AS(read_pgm(dir / "d.pgm"), Error);
  CHECK_THROWS_AS(write_pgm(dir / "e.pgm", GrayImage{2, 2, {1, 2}}), DimensionError);
  fs::remove_all(dir);
}

TEST_CASE("registry: unique names, figure annotations, every entry runs") {
  std::set<std::string> names;
  for (const auto& e : registry()) {
    CHECK(names.insert(e.name).second);
    CHECK(!e.description.empty());
    if (e.name.rfind("fig", 0) == 0) CHECK(e.figure.rfind("Fig ", 0) == 0);
    CHECK(find_experiment(e.name) == &e);
  }
  for (const char* required : {"cs_basic", "fig4_cs_recovery", "fig6_drift_inference",
                               "fig7_mnist_mixed_precision", "fig9_correlation", "fig11_encoding",
                               "fig14_reservoir"})
    CHECK(names.count(required) == 1);
  CHECK(find_experiment("nope") == nullptr);

  for (const auto& e : registry()) {
    CAPTURE(e.name);
    auto cfg = default_config(e.name, 5, tiny(e.name));
    CHECK(cfg.warnings.empty());
    auto r = execute(cfg);
    REQUIRE(r.records.size() == 1);
    CHECK(!r.records[0].metrics().empty());
    CHECK(r.report["experiment"] == e.name);
    CHECK(r.report.contains("config"));
  }
}

TEST_CASE("fig9_correlation reports d for N=1 and N=7 with histograms") {
  auto r = execute(default_config("fig9_correlation", 2, tiny("fig9_correlation")));
  CHECK(r.records[0].has("d_N1"));
  CHECK(r.records[0].has("d_N7"));
  CHECK(r.records[0].has("noiseless_d_N7"));
  REQUIRE(r.report["runs"].size() == 4);
  CHECK(r.report["runs"][0]["hist_corr"]["counts"].size() == 20);
}

TEST_CASE("dnn report follows the documented schema") {
  auto train = execute(default_config("fig7_mnist_mixed_precision", 1, tiny("fig7_mnist_mixed_precision")));
  REQUIRE(train.report["epochs"].size() == 1);
  for (const char* k : {"loss", "acc", "pulses", "clamps"}) CHECK(train.report["epochs"][0].contains(k));
  CHECK(train.records[0].at("chi_peak_over_epsilon") < 1.0);
  auto infer = execute(default_config("fig6_drift_inference", 1, tiny("fig6_drift_inference")));
  REQUIRE(infer.report["drift_curve"].size() == 5);
  CHECK(infer.report["drift_curve"][4]["t"].get<double>() == 10000.0);
  CHECK(infer.records[0].at("nu0_span") == 0.0);
}

TEST_CASE("run_experiment writes files and is byte-for-byte repeatable") {
  const fs::path d1 = scratch("run1"), d2 = scratch("run2");
  auto cfg = default_config("cs_basic", 1);
  cfg.output_dir = d1.string();
  run_experiment(cfg);
  cfg.output_dir = d2.string();
  run_experiment(cfg, "custom.json");
  for (const char* f : {"metrics.csv", "metrics.json", "nmse_curve.csv"}) {
    CAPTURE(f);
    CHECK(fs::exists(d1 / f));
    CHECK(slurp(d1 / f) == slurp(d2 / f));
  }
  CHECK(fs::exists(d1 / "report.json"));
  CHECK(fs::exists(d2 / "custom.json"));
  const json metrics = json::parse(slurp(d1 / "metrics.json"));
  CHECK(metrics["records"][0]["metrics"]["final_nmse_db"].get<double>() <= -30.0);

  auto other = default_config("cs_basic", 2);
  other.output_dir = d2.string();
  run_experiment(other);
  CHECK(slurp(d1 / "metrics.csv") != slurp(d2 / "metrics.csv"));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("cs image mode reads a PGM and writes the reconstruction") {
  const fs::path dir = scratch("image");
  fs::create_directories(dir);
  GrayImage img{32, 16, std::vector<std::uint8_t>(32 * 16, 0)};
  img.pixels[5] = 200;
  img.pixels[40] = 90;
  img.pixels[300] = 255;
  write_pgm(dir / "in.pgm", img);
  auto cfg = default_config("cs_basic", 1, {{"cs", {{"image", (dir / "in.pgm").string()}}}});
  cfg.output_dir = (dir / "out").string();
  auto r = run_experiment(cfg);
  CHECK(r.records[0].at("image_nmse_db") < -30.0);
  GrayImage rec = read_pgm(dir / "out" / "image_reconstructed.pgm");
  CHECK(rec.width == 32);
  CHECK(rec.height == 16);
  CHECK(std::abs(int(rec.pixels[300]) - 255) <= 2);
  CHECK(fs::exists(dir / "out" / "image_nmse.csv"));
  fs::remove_all(dir);
}

TEST_CASE("error JSON and exit codes") {
  ConfigError ce("bad");
  DomainError de("worse");
  DivergenceError dv("nan", 7);
  CHECK(error_json(ce)["error"]["type"] == "ConfigError");
  CHECK(error_json(de)["error"]["message"] == "worse");
  CHECK(error_json(dv)["error"]["iteration"] == 7);
  CHECK(exit_code_for(ce) == 2);
  CHECK(exit_code_for(de) == 1);
  CHECK(exit_code_for(dv) == 1);
}
