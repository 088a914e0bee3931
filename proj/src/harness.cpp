#include "memsim/harness.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "memsim/crossbar.hpp"
#include "memsim/cs.hpp"
#include "memsim/dataset.hpp"
#include "memsim/dnn.hpp"
#include "memsim/errors.hpp"
#include "memsim/parallel.hpp"
#include "memsim/psnn.hpp"
#include "memsim/reservoir.hpp"
#include "memsim/snn.hpp"

#ifndef MEMSIM_VERSION
#define MEMSIM_VERSION "0.0.0"
#endif

namespace memsim::harness {
namespace fs = std::filesystem;

std::string version() { return MEMSIM_VERSION; }

namespace {

const char* const kBlocks[] = {"crossbar", "cs", "dnn", "snn", "psnn", "reservoir"};

json module_defaults(const std::string& block) {
  if (block == "crossbar")
    return {{"tile_dim", 256},
            {"v_read", 0.2},
            {"w_max", 1.0},
            {"programming", {{"mode", "iterative"}, {"tol", 0.005}, {"max_iter", 100}}},
            {"n_matrices", 50},
            {"max_dim", 300}};
  if (block == "cs")
    return {{"n", 256},          {"m", 128},        {"k", 10},
            {"iters", 50},       {"lambda", 1.5},   {"trials", 1},
            {"age_s", 60.0},     {"programming", "auto"},
            {"image", ""},       {"image_size", 64}};
  if (block == "dnn")
    return {{"layers", json::array({250})},
            {"activation", "relu"},
            {"epochs", 20},
            {"lr", 0.05},
            {"batch_size", 16},
            {"epsilon", 0.001},
            {"data", ""},
            {"drift_times", json::array({1, 10, 100, 1000, 10000})},
            {"drift_seeds", 5}};
  if (block == "snn")
    return {{"n_synapses", 1000},
            {"frac_correlated", 0.1},
            {"rate", 0.02},
            {"corr_c", 0.75},
            {"steps", 5000},
            {"n_per_synapse", json::array({1, 7})},
            {"window", 5},
            {"dw_plus", 3},
            {"dw_minus", 1},
            {"g_init_fraction", 0.5},
            {"v_thresh", 20.0},
            {"leak_lambda", 0.2},
            {"dt", 1e-3},
            {"shared_arbiter", true},
            {"noiseless_control", true},
            {"efficiency", {{"c_add", 1.0}, {"c_mul", 4.0}, {"p", 0.01}, {"ratio_t_dt", 100.0}}}};
  if (block == "psnn")
    return {{"task", "classify"},
            {"encoder", "both"},
            {"hidden", 0},
            {"recurrent", false},
            {"epochs", 300},
            {"lr", json::array({0.005, 0.02, 0.05})},
            {"batch_size", 8},
            {"baseline", "running_mean"},
            {"loss", "hamming"},
            {"seeds", 5},
            {"train_samples", 40},
            {"test_samples", 100},
            {"eval_reps", 5},
            {"kernel_decay", 0.9},
            {"kernel_taps", 24},
            {"init_scale", 0.1},
            {"n_in", 10},
            {"n_out", 3},
            {"t_steps", 20},
            {"density", 0.3}};
  if (block == "reservoir")
    return {{"task", "narma10"},
            {"nodes", 200},
            {"rho", 0.9},
            {"leak", 0.3},
            {"input_scale", 1.0},
            {"connectivity", 0.1},
            {"node_kind", "tanh"},
            {"decay_tau", 2.0},
            {"drive_gain", 0.05},
            {"train_length", 2000},
            {"test_length", 1000},
            {"washout", 100},
            {"ridge", 1e-6},
            {"linear_lags", 10},
            {"echo_rhos", json::array({0.5, 0.9, 1.5})},
            {"echo_steps", 500}};
  return json::object();
}

std::string key_list(const json& obj) {
  std::string s;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!s.empty()) s += ", ";
    s += it.key();
  }
  return s;
}

bool same_kind(const json& def, const json& v) {
  if (def.is_null()) return true;
  if (def.is_number_integer() || def.is_number_unsigned())
    return v.is_number_integer() || v.is_number_unsigned() ||
           (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
  if (def.is_number()) return v.is_number();
  if (def.is_string()) return v.is_string();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_array()) return v.is_array();
  if (def.is_object()) return v.is_object();
  return true;
}

/// Overlays `patch` on `base`; keys absent from `base` are dropped with a warning.
void merge_checked(json& base, const json& patch, const std::string& path,
                   std::vector<std::string>& warnings) {
  if (!patch.is_object()) throw ConfigError("'" + path + "' must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string where = path + "." + it.key();
    if (!base.contains(it.key())) {
      warnings.push_back("unknown key '" + where + "' ignored; valid keys: " + key_list(base));
      continue;
    }
    json& slot = base[it.key()];
    if (!same_kind(slot, it.value()))
      throw ConfigError("'" + where + "' has the wrong type (expected " +
                        std::string(slot.type_name()) + ")");
    if (slot.is_object()) {
      merge_checked(slot, it.value(), where, warnings);
    } else if (slot.is_number_integer() || slot.is_number_unsigned()) {
      slot = it.value().get<std::int64_t>();
    } else {
      slot = it.value();
    }
  }
}

const char* const kDeviceKeys[] = {"g_min",       "g_max",          "set_step_fraction",
                                   "prog_noise_rel", "read_noise_rel", "drift_nu",
                                   "drift_t0",    "drift_nu_cv",    "kappa_reset"};

double* device_field(DeviceParams& p, const std::string& k) {
  if (k == "g_min") return &p.g_min;
  if (k == "g_max") return &p.g_max;
  if (k == "set_step_fraction") return &p.set_step_fraction;
  if (k == "prog_noise_rel") return &p.prog_noise_rel;
  if (k == "read_noise_rel") return &p.read_noise_rel;
  if (k == "drift_nu") return &p.drift_nu;
  if (k == "drift_t0") return &p.drift_t0;
  if (k == "drift_nu_cv") return &p.drift_nu_cv;
  if (k == "kappa_reset") return &p.kappa_reset;
  return nullptr;
}

std::string location(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col) + " (offset " +
         std::to_string(byte) + ")";
}

std::string iso_timestamp() {
  // Records must not depend on when they were produced; SOURCE_DATE_EPOCH pins
  // the stamp for reproducible pipelines and defaults to the epoch.
  std::time_t t = 0;
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      t = static_cast<std::time_t>(std::stoll(env));
    } catch (...) {
      t = 0;
    }
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_file(const fs::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write failed: " + path.string());
}

// --- typed access to merged blocks -------------------------------------------

int get_int(const json& b, const char* k) { return b.at(k).get<int>(); }
double get_double(const json& b, const char* k) { return b.at(k).get<double>(); }
std::string get_string(const json& b, const char* k) { return b.at(k).get<std::string>(); }
std::vector<double> get_doubles(const json& b, const char* k) {
  std::vector<double> v;
  for (const auto& e : b.at(k)) {
    if (!e.is_number()) throw ConfigError(std::string("'") + k + "' must hold numbers");
    v.push_back(e.get<double>());
  }
  return v;
}
std::vector<int> get_ints(const json& b, const char* k) {
  std::vector<int> v;
  for (double d : get_doubles(b, k)) {
    if (std::floor(d) != d) throw ConfigError(std::string("'") + k + "' must hold integers");
    v.push_back(static_cast<int>(d));
  }
  return v;
}

ProgrammingMode programming_from(const json& crossbar) {
  const json& p = crossbar.at("programming");
  const std::string mode = get_string(p, "mode");
  if (mode == "single_shot") return ProgrammingMode::single_shot();
  if (mode == "iterative") return ProgrammingMode::iterative(get_double(p, "tol"), get_int(p, "max_iter"));
  throw ConfigError("crossbar.programming.mode must be 'iterative' or 'single_shot'");
}

bool noiseless(const DeviceParams& p) {
  return p.prog_noise_rel == 0.0 && p.read_noise_rel == 0.0 && p.drift_nu == 0.0;
}

std::string tag(double v) { return format_number(v); }

// --- crossbar ---------------------------------------------------------------

ExperimentResult run_crossbar_mvm(const ExperimentConfig& cfg) {
  const json& b = cfg.crossbar;
  const int count = get_int(b, "n_matrices"), max_dim = get_int(b, "max_dim");
  const int tile_dim = get_int(b, "tile_dim");
  const double w_max = get_double(b, "w_max"), v_read = get_double(b, "v_read");
  if (count < 1 || max_dim < 1) throw ConfigError("crossbar.n_matrices and max_dim must be >= 1");
  const ProgrammingMode mode = programming_from(b);
  const double tol = mode.kind == ProgrammingMode::Kind::Iterative ? mode.tol_fraction : 0.0;

  std::vector<double> err_mvm(count), err_t(count), err_tiled(count), bound(count);
  std::vector<int> rows(count), cols(count);
  parallel_for(count, [&](std::size_t i) {
    Rng rng(derive_seed(cfg.seed, i));
    std::uniform_int_distribution<int> dim(1, max_dim);
    const int r = dim(rng), c = dim(rng);
    Eigen::MatrixXd a(r, c);
    for (int k = 0; k < r; ++k)
      for (int j = 0; j < c; ++j) a(k, j) = w_max * (2.0 * uniform01(rng) - 1.0);
    Eigen::VectorXd x(c), y(r);
    for (int j = 0; j < c; ++j) x[j] = 2.0 * uniform01(rng) - 1.0;
    for (int k = 0; k < r; ++k) y[k] = 2.0 * uniform01(rng) - 1.0;
    TiledMatrix tm(r, c, tile_dim, cfg.device, w_max, v_read);
    tm.program(a, mode, 0.0, rng);
    CrossbarArray single(r, c, cfg.device, w_max, v_read);
    if (std::max(r, c) <= kMaxArrayDim) single.program(a, mode, 0.0, rng);
    err_mvm[i] = (single.mvm(x, rng) - a * x).cwiseAbs().maxCoeff();
    err_t[i] = (single.mvm_transpose(y, rng) - a.transpose() * y).cwiseAbs().maxCoeff();
    err_tiled[i] = std::max((tm.mvm(x, rng) - a * x).cwiseAbs().maxCoeff(),
                            (tm.mvm_transpose(y, rng) - a.transpose() * y).cwiseAbs().maxCoeff());
    bound[i] = tol * w_max * std::max(r, c);
    rows[i] = r;
    cols[i] = c;
  });

  ExperimentResult res;
  MetricsRecord rec(cfg.experiment, cfg.seed);
  double worst = 0.0, worst_ratio = 0.0;
  std::ostringstream csv;
  csv << "matrix,rows,cols,err_mvm,err_transpose,err_tiled,bound\n";
  for (int i = 0; i < count; ++i) {
    const double e = std::max({err_mvm[i], err_t[i], err_tiled[i]});
    worst = std::max(worst, e);
    worst_ratio = std::max(worst_ratio, bound[i] > 0 ? e / bound[i] : (e > 0 ? 1e300 : 0.0));
    csv << i << ',' << rows[i] << ',' << cols[i] << ',' << format_number(err_mvm[i]) << ','
        << format_number(err_t[i]) << ',' << format_number(err_tiled[i]) << ','
        << format_number(bound[i]) << '\n';
  }
  rec.add("matrices", count).add("max_abs_error", worst).add("max_error_over_bound", worst_ratio);
  res.records.push_back(rec);
  res.report = {{"matrices", count}, {"max_abs_error", worst}, {"max_error_over_bound", worst_ratio}};
  res.artifacts.emplace_back("mvm_errors.csv", csv.str());
  return res;
}

// --- compressed sensing -----------------------------------------------------

/// Plain floating-point AMP, the reference the crossbar path is compared to.
std::vector<double> float_amp_curve(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& truth, int iters, double lambda) {
  const int m = static_cast<int>(a.rows()), n = static_cast<int>(a.cols());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n), z_old = Eigen::VectorXd::Zero(m);
  double onsager = 0.0;
  std::vector<double> curve;
  for (int t = 0; t < iters; ++t) {
    Eigen::VectorXd z = y - a * x + onsager * z_old;
    const double theta = lambda * z.norm() / std::sqrt(static_cast<double>(m));
    Eigen::VectorXd r = x + a.transpose() * z;
    int active = 0;
    for (int i = 0; i < n; ++i) {
      x[i] = cs::soft_threshold(r[i], theta);
      active += x[i] != 0.0;
    }
    onsager = static_cast<double>(active) / m;
    z_old = z;
    curve.push_back(cs::nmse_db(truth, x));
  }
  return curve;
}

struct CsSetup {
  int n, m, k, iters;
  double lambda, age;
  ProgrammingMode ideal_mode;
  ProgrammingMode device_mode;
};

CsSetup cs_setup(const ExperimentConfig& cfg) {
  const json& b = cfg.cs;
  CsSetup s{get_int(b, "n"),      get_int(b, "m"),          get_int(b, "k"),
            get_int(b, "iters"),  get_double(b, "lambda"),  get_double(b, "age_s"),
            programming_from(cfg.crossbar), programming_from(cfg.crossbar)};
  if (s.n < 1 || s.m < 1 || s.m > s.n || s.k < 0 || s.k > s.n || s.iters < 1)
    throw ConfigError("cs: need 0 < m <= n, 0 <= k <= n and iters >= 1");
  if (s.age < 0) throw ConfigError("cs.age_s must be non-negative");
  const std::string prog = get_string(b, "programming");
  if (prog == "single_shot" || (prog == "auto" && !noiseless(cfg.device)))
    s.device_mode = ProgrammingMode::single_shot();
  else if (prog != "auto" && prog != "iterative")
    throw ConfigError("cs.programming must be 'auto', 'iterative' or 'single_shot'");
  return s;
}

cs::CsProblem cs_problem(const CsSetup& s, const Eigen::MatrixXd& a, const DeviceParams& device,
                         const ProgrammingMode& mode, int tile_dim, Rng& rng) {
  cs::ProblemOptions o;
  o.device = device;
  o.programming = mode;
  o.tile_dim = tile_dim;
  auto p = cs::make_problem(a, s.k, o, rng);
  p.measurement.advance_time(s.age);
  return p;
}

GrayImage synthetic_sparse_image(int size, int block, int k, Rng& rng) {
  GrayImage img{size, size, std::vector<std::uint8_t>(static_cast<std::size_t>(size) * size, 0)};
  for (int br = 0; br < size / block; ++br)
    for (int bc = 0; bc < size / block; ++bc) {
      std::vector<int> cells(block * block);
      for (int i = 0; i < block * block; ++i) cells[i] = i;
      std::shuffle(cells.begin(), cells.end(), rng);
      for (int i = 0; i < k && i < block * block; ++i) {
        const int r = br * block + cells[i] / block, c = bc * block + cells[i] % block;
        img.pixels[static_cast<std::size_t>(r) * size + c] =
            static_cast<std::uint8_t>(64 + std::lround(191 * uniform01(rng)));
      }
    }
  return img;
}

std::string pgm_bytes(const GrayImage& img);
GrayImage parse_pgm(const std::string& data, const std::string& name);

/// Block compressed sensing of an image: every b x b block (b * b = n) is
/// compressed and recovered through one shared measurement array.
void cs_image(const ExperimentConfig& cfg, const CsSetup& s, const GrayImage& img, Rng& rng,
              ExperimentResult& res, MetricsRecord& rec) {
  const int block = static_cast<int>(std::lround(std::sqrt(static_cast<double>(s.n))));
  if (block * block != s.n) throw ConfigError("cs image mode needs n to be a perfect square");
  const int bh = (img.height + block - 1) / block, bw = (img.width + block - 1) / block;
  const Eigen::MatrixXd a = cs::gaussian_matrix(s.m, s.n, rng);
  auto problem = cs_problem(s, a, cfg.device, s.device_mode, get_int(cfg.crossbar, "tile_dim"), rng);

  GrayImage out{img.width, img.height, std::vector<std::uint8_t>(img.pixels.size(), 0)};
  std::ostringstream csv;
  csv << "block_row,block_col,nmse_db\n";
  double err = 0.0, energy = 0.0;
  for (int br = 0; br < bh; ++br)
    for (int bc = 0; bc < bw; ++bc) {
      Eigen::VectorXd x = Eigen::VectorXd::Zero(s.n);
      for (int i = 0; i < block; ++i)
        for (int j = 0; j < block; ++j) {
          const int r = br * block + i, c = bc * block + j;
          if (r < img.height && c < img.width)
            x[i * block + j] = img.pixels[static_cast<std::size_t>(r) * img.width + c] / 255.0;
        }
      const Eigen::VectorXd y = cs::compress(problem, x, rng);
      auto tr = cs::amp_recover(problem, y, s.iters, cs::LambdaSchedule::constant(s.lambda), rng);
      const Eigen::VectorXd xh = tr.estimates.back().cwiseMax(0.0).cwiseMin(1.0);
      err += (xh - x).squaredNorm();
      energy += x.squaredNorm();
      if (x.squaredNorm() > 0)
        csv << br << ',' << bc << ',' << format_number(cs::nmse_db(x, xh)) << '\n';
      for (int i = 0; i < block; ++i)
        for (int j = 0; j < block; ++j) {
          const int r = br * block + i, c = bc * block + j;
          if (r < img.height && c < img.width)
            out.pixels[static_cast<std::size_t>(r) * img.width + c] =
                static_cast<std::uint8_t>(std::lround(255.0 * xh[i * block + j]));
        }
    }
  double image_db = cs::kNmseFloorDb;
  if (energy > 0 && err > 0) image_db = std::max(cs::kNmseFloorDb, 10.0 * std::log10(err / energy));
  rec.add("image_nmse_db", image_db);
  res.report["image"] = {{"width", img.width}, {"height", img.height}, {"block", block},
                         {"nmse_db", image_db}};
  res.artifacts.emplace_back("image_original.pgm", pgm_bytes(img));
  res.artifacts.emplace_back("image_reconstructed.pgm", pgm_bytes(out));
  res.artifacts.emplace_back("image_nmse.csv", csv.str());
}

GrayImage image_input(const ExperimentConfig& cfg, const CsSetup& s, Rng& rng) {
  const std::string path = get_string(cfg.cs, "image");
  if (!path.empty()) return read_pgm(path);
  const int block = static_cast<int>(std::lround(std::sqrt(static_cast<double>(s.n))));
  const int size = get_int(cfg.cs, "image_size");
  if (size < block || size % block != 0)
    throw ConfigError("cs.image_size must be a positive multiple of sqrt(n)");
  return synthetic_sparse_image(size, block, s.k, rng);
}

ExperimentResult run_cs_basic(const ExperimentConfig& cfg) {
  const CsSetup s = cs_setup(cfg);
  Rng rng(derive_seed(cfg.seed, "cs"));
  const Eigen::MatrixXd a = cs::gaussian_matrix(s.m, s.n, rng);
  const Eigen::VectorXd x = cs::sparse_signal(s.n, s.k, rng);
  auto p = cs_problem(s, a, cfg.device, s.device_mode, get_int(cfg.crossbar, "tile_dim"), rng);
  const Eigen::VectorXd y = cs::compress(p, x, rng);
  auto tr = cs::amp_recover(p, y, s.iters, cs::LambdaSchedule::constant(s.lambda), rng, x);
  const auto ref = float_amp_curve(a, a * x, x, s.iters, s.lambda);

  ExperimentResult res;
  MetricsRecord rec(cfg.experiment, cfg.seed);
  rec.add("n", s.n).add("m", s.m).add("k", s.k).add("iterations", tr.iterations_run);
  rec.add("final_nmse_db", tr.nmse_db.back()).add("float_final_nmse_db", ref.back());
  std::ostringstream csv;
  csv << "iteration,nmse_db,float_nmse_db\n";
  for (int t = 0; t < tr.iterations_run; ++t)
    csv << t + 1 << ',' << format_number(tr.nmse_db[t]) << ',' << format_number(ref[t]) << '\n';
  res.artifacts.emplace_back("nmse_curve.csv", csv.str());
  res.report = {{"nmse_db", tr.nmse_db}, {"float_nmse_db", ref}};
  if (!get_string(cfg.cs, "image").empty()) {
    Rng img_rng(derive_seed(cfg.seed, "image"));
    cs_image(cfg, s, image_input(cfg, s, img_rng), img_rng, res, rec);
  }
  res.records.push_back(rec);
  return res;
}

ExperimentResult run_fig4(const ExperimentConfig& cfg) {
  const CsSetup s = cs_setup(cfg);
  const int trials = get_int(cfg.cs, "trials");
  if (trials < 1) throw ConfigError("cs.trials must be >= 1");
  const int tile_dim = get_int(cfg.crossbar, "tile_dim");
  std::vector<std::vector<double>> ideal(trials), noisy(trials), flt(trials);
  parallel_for(trials, [&](std::size_t i) {
    Rng rng(derive_seed(cfg.seed, i));
    const Eigen::MatrixXd a = cs::gaussian_matrix(s.m, s.n, rng);
    const Eigen::VectorXd x = cs::sparse_signal(s.n, s.k, rng);
    auto pi = cs_problem(s, a, DeviceParams::ideal(), s.ideal_mode, tile_dim, rng);
    auto pn = cs_problem(s, a, cfg.device, s.device_mode, tile_dim, rng);
    const auto sched = cs::LambdaSchedule::constant(s.lambda);
    ideal[i] = cs::amp_recover(pi, cs::compress(pi, x, rng), s.iters, sched, rng, x).nmse_db;
    noisy[i] = cs::amp_recover(pn, cs::compress(pn, x, rng), s.iters, sched, rng, x).nmse_db;
    flt[i] = float_amp_curve(a, a * x, x, s.iters, s.lambda);
  });

  auto mean_curve = [&](const std::vector<std::vector<double>>& c) {
    std::vector<double> m(s.iters, 0.0);
    for (const auto& v : c)
      for (int t = 0; t < s.iters; ++t) m[t] += v[t] / trials;
    return m;
  };
  const auto mi = mean_curve(ideal), mn = mean_curve(noisy), mf = mean_curve(flt);
  int higher = 0;
  double worst_gap = 0.0;
  for (int i = 0; i < trials; ++i) {
    higher += noisy[i].back() > ideal[i].back();
    worst_gap = std::max(worst_gap, std::abs(ideal[i].back() - flt[i].back()));
  }
  // plateau: change of the mean noisy curve over the last fifth of the run
  const int tail = std::max(1, s.iters / 5);
  const double drift_db = std::abs(mn.back() - mn[s.iters - 1 - tail]);

  ExperimentResult res;
  MetricsRecord rec(cfg.experiment, cfg.seed);
  rec.add("trials", trials)
      .add("ideal_final_nmse_db", mi.back())
      .add("float_final_nmse_db", mf.back())
      .add("noisy_final_nmse_db", mn.back())
      .add("max_ideal_float_gap_db", worst_gap)
      .add("trials_noisy_floor_higher", higher)
      .add("noisy_tail_change_db", drift_db);
  std::ostringstream csv;
  csv << "iteration,float_nmse_db,ideal_nmse_db,noisy_nmse_db\n";
  for (int t = 0; t < s.iters; ++t)
    csv << t + 1 << ',' << format_number(mf[t]) << ',' << format_number(mi[t]) << ','
        << format_number(mn[t]) << '\n';
  res.artifacts.emplace_back("nmse_curve.csv", csv.str());
  res.report = {{"float_nmse_db", mf}, {"ideal_nmse_db", mi}, {"noisy_nmse_db", mn}};
  Rng img_rng(derive_seed(cfg.seed, "image"));
  cs_image(cfg, s, image_input(cfg, s, img_rng), img_rng, res, rec);
  res.records.push_back(rec);
  return res;
}

// --- deep networks ------------------------------------------------------------

dnn::Activation parse_activation(const std::string& s) {
  if (s == "relu") return dnn::Activation::Relu;
  if (s == "sigmoid") return dnn::Activation::Sigmoid;
  throw ConfigError("dnn.activation must be 'relu' or 'sigmoid'");
}

struct DnnSetup {
  TrainTestSplit data;
  std::vector<int> sizes;
  dnn::TrainConfig train;
  dnn::Activation hidden;
  double epsilon;
};

DnnSetup dnn_setup(const ExperimentConfig& cfg) {
  const json& b = cfg.dnn;
  DnnSetup s;
  s.data = load_digits_or_mnist(get_string(b, "data"), derive_seed(cfg.seed, "split"));
  s.sizes.push_back(s.data.train.dim());
  for (int h : get_ints(b, "layers")) s.sizes.push_back(h);
  s.sizes.push_back(std::max(s.data.train.n_classes, s.data.test.n_classes));
  s.train.lr = get_double(b, "lr");
  s.train.epochs = get_int(b, "epochs");
  s.train.batch_size = get_int(b, "batch_size");
  s.train.seed = derive_seed(cfg.seed, "train");
  s.train.validate();
  s.hidden = parse_activation(get_string(b, "activation"));
  s.epsilon = get_double(b, "epsilon");
  return s;
}

dnn::NetConfig net_config(const ExperimentConfig& cfg, const DnnSetup& s, const DeviceParams& device) {
  dnn::NetConfig nc;
  nc.device = device;
  nc.programming = programming_from(cfg.crossbar);
  nc.tile_dim = get_int(cfg.crossbar, "tile_dim");
  nc.w_max = get_double(cfg.crossbar, "w_max");
  nc.epsilon = s.epsilon * nc.w_max;
  nc.hidden = s.hidden;
  return nc;
}

json epochs_json(const dnn::TrainingReport& r) {
  json a = json::array();
  for (const auto& e : r.epochs)
    a.push_back({{"loss", e.loss}, {"acc", e.accuracy}, {"pulses", e.pulses}, {"clamps", e.clamps}});
  return a;
}

ExperimentResult run_fig7(const ExperimentConfig& cfg) {
  const DnnSetup s = dnn_setup(cfg);
  Rng init_rng(derive_seed(cfg.seed, "init"));
  const dnn::Parameters init = dnn::init_parameters(s.sizes, init_rng);

  dnn::FloatNet fnet(init, s.hidden);
  const auto frep = fnet.train(s.data, s.train);

  auto mixed = [&](const DeviceParams& device, const char* stream) {
    Rng rng(derive_seed(cfg.seed, stream));
    dnn::MixedPrecisionNet net(net_config(cfg, s, device), init, rng);
    auto rep = net.train(s.data, s.train);
    return std::make_pair(std::move(rep), net.refreshes());
  };
  const auto [irep, irefresh] = mixed(DeviceParams::ideal(), "ideal");
  const auto [nrep, nrefresh] = mixed(cfg.device, "device");

  auto chi_peak = [](const dnn::TrainingReport& r) {
    double m = 0.0;
    for (const auto& e : r.epochs) m = std::max(m, e.chi_peak);
    return m;
  };
  auto total = [](const dnn::TrainingReport& r, bool clamps) {
    std::uint64_t n = 0;
    for (const auto& e : r.epochs) n += clamps ? e.clamps : e.pulses;
    return static_cast<double>(n);
  };

  ExperimentResult res;
  MetricsRecord rec(cfg.experiment, cfg.seed);
  rec.add("train_samples", s.data.train.size())
      .add("test_samples", s.data.test.size())
      .add("float_accuracy", frep.epochs.back().accuracy)
      .add("ideal_accuracy", irep.epochs.back().accuracy)
      .add("device_accuracy", nrep.epochs.back().accuracy)
      .add("ideal_pulses", total(irep, false))
      .add("device_pulses", total(nrep, false))
      .add("device_clamps", total(nrep, true))
      .add("device_refreshes", static_cast<double>(nrefresh))
      .add("ideal_refreshes", static_cast<double>(irefresh))
      .add("chi_peak_over_epsilon", std::max(chi_peak(irep), chi_peak(nrep)));
  res.records.push_back(rec);
  res.report = {{"epochs", epochs_json(nrep)},
                {"ideal_epochs", epochs_json(irep)},
                {"float_epochs", epochs_json(frep)},
                {"drift_curve", json::array()}};
  std::ostringstream csv;
  csv << "epoch,float_loss,float_acc,ideal_loss,ideal_acc,device_loss,device_acc,device_pulses\n";
  for (std::size_t e = 0; e < nrep.epochs.size(); ++e)
    csv << e + 1 << ',' << format_number(frep.epochs[e].loss) << ','
        << format_number(frep.epochs[e].accuracy) << ',' << format_number(irep.epochs[e].loss) << ','
        << format_number(irep.epochs[e].accuracy) << ',' << format_number(nrep.epochs[e].loss) << ','
        << format_number(nrep.epochs[e].accuracy) << ',' << nrep.epochs[e].pulses << '\n';
  res.artifacts.emplace_back("training_curve.csv", csv.str());
  return res;
}

ExperimentResult run_fig6(const ExperimentConfig& cfg) {
  const DnnSetup s = dnn_setup(cfg);
  const int n_seeds = get_int(cfg.dnn, "drift_seeds");
  if (n_seeds < 1) throw ConfigError("dnn.drift_seeds must be >= 1");
  std::vector<double> times;
  for (double t : get_doubles(cfg.dnn, "drift_times")) times.push_back(t * cfg.device.drift_t0);

  Rng init_rng(derive_seed(cfg.seed, "init"));
  dnn::FloatNet fnet(dnn::init_parameters(s.sizes, init_rng), s.hidden);
  fnet.train(s.data, s.train);
  const double float_acc = fnet.accuracy(s.data.test);

  DeviceParams flat = cfg.device;
  flat.drift_nu = 0.0;
  auto curves = [&](const DeviceParams& device, const char* stream) {
    std::vector<std::vector<dnn::DriftPoint>> out(n_seeds);
    parallel_for(n_seeds, [&](std::size_t i) {
      const std::uint64_t base = derive_seed(derive_seed(cfg.seed, stream), i);
      Rng rng(derive_seed(base, "program"));
      dnn::MixedPrecisionNet net(net_config(cfg, s, device), fnet.params(), rng);
      out[i] = dnn::infer_with_drift(net, s.data.test, times, derive_seed(base, "read"));
    });
    std::vector<double> mean(times.size(), 0.0);
    for (const auto& c : out)
      for (std::size_t t = 0; t < times.size(); ++t) mean[t] += c[t].accuracy / n_seeds;
    return mean;
  };
  const auto drifting = curves(cfg.device, "drift");
  const auto control = curves(flat, "drift");

  ExperimentResult res;
  MetricsRecord rec(cfg.experiment, cfg.seed);
  rec.add("float_accuracy", float_acc).add("drift_nu", cfg.device.drift_nu);
  bool monotone = true;
  double lo = control.front(), hi = control.front();
  for (std::size_t t = 0; t < times.size(); ++t) {
    rec.add("accuracy_t" + tag(times[t]), drifting[t]);
    if (t > 0 && drifting[t] > drifting[t - 1]) monotone = false;
    lo = std::min(lo, control[t]);
    hi = std::max(hi, control[t]);
  }
  for (std::size_t t = 0; t < times.size(); ++t) rec.add("nu0_accuracy_t" + tag(times[t]), control[t]);
  rec.add("non_increasing", monotone ? 1.0 : 0.0).add("nu0_span", hi - lo);
  res.records.push_back(rec);

  json curve = json::array(), flat_curve = json::array();
  std::ostringstream csv;
  csv << "t,accuracy,nu0_accuracy\n";
  for (std::size_t t = 0; t < times.size(); ++t) {
    curve.push_back({{"t", times[t]}, {"acc", drifting[t]}});
    flat_curve.push_back({{"t", times[t]}, {"acc", control[t]}});
    csv << format_number(times[t]) << ',' << format_number(drifting[t]) << ','
        << format_number(control[t]) << '\n';
  }
  res.report = {{"epochs", json::array()}, {"drift_curve", curve}, {"nu0_drift_curve", flat_curve},
                {"float_accuracy", float_acc}};
  res.artifacts.emplace_back("drift_curve.csv", csv.str());
  return res;
}

// --- spiking networks -------------------------------------------------------

snn::CorrelationConfig correlation_config(const ExperimentConfig& cfg) {
  const json& b = cfg.snn;
  snn::CorrelationConfig c;
  c.n_synapses = get_int(b, "n_synapses");
  c.frac_correlated = get_double(b, "frac_correlated");
  c.rate = get_double(b, "rate");
  c.corr_c = get_double(b, "corr_c");
  c.steps = get_int(b, "steps");
  c.rule = {get_int(b, "window"), get_int(b, "dw_plus"), get_int(b, "dw_minus")};
  c.g_init_fraction = get_double(b, "g_init_fraction");
  c.v_thresh = get_double(b, "v_thresh");
  c.leak_lambda = get_double(b, "leak_lambda");
  c.dt = get_double(b, "dt");
  c.shared_arbiter = b.at("shared_arbiter").get<bool>();
  c.device = cfg.device;
  return c;
}

json histogram_json(const snn::Histogram& h) { return {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}}; }

ExperimentResult run_fig9(const ExperimentConfig& cfg) {
  const snn::CorrelationConfig base = correlation_config(cfg);
  const std::vector<int> ns = get_ints(cfg.snn, "n_per_synapse");
  const bool control = cfg.snn.at("noiseless_control").get<bool>();

  ExperimentResult res;
  MetricsRecord rec(cfg.experiment, cfg.seed);
  json runs = json::array();
  std::ostringstream csv;
  csv << "device,n_per_synapse,group,bin_lo,bin_hi,count\n";
  std::vector<double> control_d;
  for (int pass = 0; pass < (control ? 2 : 1); ++pass) {
    const bool ideal = pass == 1;
    for (int n : ns) {
      snn::CorrelationConfig c = base;
      c.n_per_synapse = n;
      if (ideal) c.device = DeviceParams::ideal();
      const auto r = snn::correlation_experiment(c, cfg.seed);
      const std::string prefix = ideal ? "noiseless_" : "";
      rec.add(prefix + "d_N" + std::to_string(n), r.d);
      if (!ideal) rec.add("post_spikes_N" + std::to_string(n), static_cast<double>(r.post_spikes));
      if (ideal) control_d.push_back(r.d);
      runs.push_back({{"device", ideal ? "noiseless" : "configured"},
                      {"n_per_synapse", n},
                      {"d", r.d},
                      {"mean_corr", r.mean_corr},
                      {"std_corr", r.std_corr},
                      {"mean_unc", r.mean_unc},
                      {"std_unc", r.std_unc},
                      {"post_spikes", r.post_spikes},
                      {"potentiations", r.potentiations},
                      {"depressions", r.depressions},
                      {"hist_corr", histogram_json(r.hist_corr)},
                      {"hist_unc", histogram_json(r.hist_unc)}});
      for (const auto* h : {&r.hist_corr, &r.hist_unc}) {
        const double w = (h->hi - h->lo) / static_cast<double>(h->counts.size());
        for (std::size_t i = 0; i < h->counts.size(); ++i)
          csv << (ideal ? "noiseless" : "configured") << ',' << n << ','
              << (h == &r.hist_corr ? "correlated" : "uncorrelated") << ','
              << format_number(h->lo + w * i) << ',' << format_number(h->lo + w * (i + 1)) << ','
              << h->counts[i] << '\n';
      }
    }
  }
  if (control_d.size() >= 2 && control_d.front() > 0)
    rec.add("noiseless_d_ratio", control_d.back() / control_d.front());
  res.records.push_back(rec);
  res.report = {{"runs", runs}};
  res.artifacts.emplace_back("histograms.csv", csv.str());
  return res;
}

ExperimentResult run_snn_efficiency(const ExperimentConfig& cfg) {
  const json& e = cfg.snn.at("efficiency");
  snn::EfficiencyModel m;
  m.c_add = get_double(e, "c_add");
  m.c_mul = get_double(e, "c_mul");
  m.p = get_double(e, "p");
  m.ratio_t_dt = get_double(e, "ratio_t_dt");
  const auto v = snn::snn_efficiency_favorable(m);
  ExperimentResult res;
  MetricsRecord rec(cfg.experiment, cfg.seed);
  rec.add("lhs", m.c_add * m.p * m.ratio_t_dt)
      .add("c_mul", m.c_mul)
      .add("favorable", v.favorable ? 1.0 : 0.0)
      .add("margin", v.margin);
  if (m.c_add * m.ratio_t_dt > 0) rec.add("break_even_p", m.c_mul / (m.c_add * m.ratio_t_dt));
  res.records.push_back(rec);
  res.report = {{"favorable", v.favorable}, {"margin", v.margin}};
  return res;
}

// --- probabilistic spiking networks -----------------------------------------------

psnn::ReadoutLoss parse_loss(const std::string& s) {
  if (s == "hamming") return psnn::ReadoutLoss::Hamming;
  if (s == "van_rossum") return psnn::ReadoutLoss::VanRossum;
  if (s == "spike_count") return psnn::ReadoutLoss::SpikeCount;
  throw ConfigError("psnn.loss must be 'hamming', 'van_rossum' or 'spike_count'");
}

psnn::BaselineMode parse_baseline(const std::string& s) {
  if (s == "running_mean") return psnn::BaselineMode::RunningMean;
  if (s == "none") return psnn::BaselineMode::None;
  throw ConfigError("psnn.baseline must be 'running_mean' or 'none'");
}

struct TrainedRun {
  psnn::TrainReport report;
  psnn::GlmNetwork net;
  double lr = 0.0;
  double score = 0.0;
};

/// Trains one network per learning rate and keeps the one with the lowest
/// training loss over the last tenth of the epochs.
TrainedRun train_best(const psnn::GlmNetwork& init, const std::vector<psnn::Sample>& data,
                      psnn::TrainConfig tc, const std::vector<double>& lrs) {
  if (lrs.empty()) throw ConfigError("psnn.lr needs at least one learning rate");
  TrainedRun best{{}, init, 0.0, 0.0};
  bool first = true;
  for (double lr : lrs) {
    psnn::GlmNetwork net = init;
    tc.lr = lr;
    auto rep = psnn::train_supervised(net, data, tc);
    const std::size_t tail = std::max<std::size_t>(1, rep.loss.size() / 10);
    double score = 0.0;
    for (std::size_t i = rep.loss.size() - tail; i < rep.loss.size(); ++i) score += rep.loss[i] / tail;
    if (first || score < best.score) best = {std::move(rep), std::move(net), lr, score};
    first = false;
  }
  return best;
}

psnn::TrainConfig psnn_train_config(const json& b) {
  psnn::TrainConfig tc;
  tc.epochs = get_int(b, "epochs");
  tc.batch_size = get_int(b, "batch_size");
  tc.baseline = parse_baseline(get_string(b, "baseline"));
  tc.loss = parse_loss(get_string(b, "loss"));
  return tc;
}

ExperimentResult run_fig11(const ExperimentConfig& cfg) {
  const json& b = cfg.psnn;
  const int seeds = get_int(b, "seeds");
  if (seeds < 1) throw ConfigError("psnn.seeds must be >= 1");
  std::vector<psnn::Encoder> encoders;
  const std::string which = get_string(b, "encoder");
  if (which == "both") {
    encoders = {psnn::Encoder::Rate, psnn::Encoder::Grf};
  } else {
    encoders = {psnn::parse_encoder(which)};
  }
  const auto lrs = get_doubles(b, "lr");
  psnn::EncodingTaskConfig tcfg;
  tcfg.n_samples = get_int(b, "train_samples");
  tcfg.validate();
  psnn::EncodingTaskConfig test_cfg = tcfg;
  test_cfg.n_samples = get_int(b, "test_samples");
  const int reps = get_int(b, "eval_reps");
  const auto kind = parse_loss(get_string(b, "loss"));

  struct Outcome {
    double test_loss = 0, input_spikes = 0, lr = 0;
    std::vector<double> curve;
  };
  const std::size_t n_enc = encoders.size();
  std::vector<Outcome> out(seeds * n_enc);
  parallel_for(out.size(), [&](std::size_t idx) {
    const std::size_t s = idx / n_enc;
    const psnn::Encoder enc = encoders[idx % n_enc];
    const std::uint64_t task_seed = derive_seed(cfg.seed, s);
    const auto train = psnn::make_encoding_task(tcfg, enc, task_seed);
    const auto test = psnn::make_encoding_task(test_cfg, enc, derive_seed(task_seed, "test"));
    psnn::GlmNetwork net(train.front().input.n_units(), get_int(b, "hidden"), 2,
                         b.at("recurrent").get<bool>());
    net.alpha = psnn::geometric_kernel(get_double(b, "kernel_decay"), get_int(b, "kernel_taps"));
    Rng init_rng(derive_seed(task_seed, "init"));
    psnn::randomize(net, get_double(b, "init_scale"), init_rng);
    psnn::TrainConfig tc = psnn_train_config(b);
    tc.loss_from_step = tcfg.delta_t;
    tc.seed = derive_seed(task_seed, "train");
    auto best = train_best(net, train, tc, lrs);
    Rng eval_rng(derive_seed(task_seed, "eval"));
    out[idx] = {psnn::evaluate(best.net, test, kind, tcfg.delta_t, reps, eval_rng),
                best.report.input_spikes, best.lr, best.report.loss};
  });

  ExperimentResult res;
  MetricsRecord rec(cfg.experiment, cfg.seed);
  json per_encoder = json::object();
  std::vector<std::vector<double>> curves(n_enc);
  std::vector<double> loss(n_enc, 0.0), spikes(n_enc, 0.0);
  for (std::size_t e = 0; e < n_enc; ++e) {
    const std::string name = encoders[e] == psnn::Encoder::Rate ? "rate" : "grf";
    json seeds_json = json::array();
    curves[e].assign(out[e].curve.size(), 0.0);
    for (int s = 0; s < seeds; ++s) {
      const Outcome& o = out[s * n_enc + e];
      loss[e] += o.test_loss / seeds;
      spikes[e] += o.input_spikes / seeds;
      for (std::size_t i = 0; i < o.curve.size(); ++i) curves[e][i] += o.curve[i] / seeds;
      seeds_json.push_back({{"test_loss", o.test_loss}, {"input_spikes", o.input_spikes}, {"lr", o.lr}});
    }
    rec.add(name + "_test_loss", loss[e]).add(name + "_input_spikes", spikes[e]);
    per_encoder[name] = {{"test_loss", loss[e]}, {"input_spikes", spikes[e]}, {"seeds", seeds_json},
                         {"train_loss_curve", curves[e]}};
  }
  if (n_enc == 2) {
    rec.add("input_spike_ratio", spikes[1] > 0 ? spikes[0] / spikes[1] : 0.0)
        .add("grf_loss_minus_rate_loss", loss[1] - loss[0]);
  }
  res.records.push_back(rec);
  res.report = {{"encoders", per_encoder}};
  std::ostringstream csv;
  csv << "epoch";
  for (std::size_t e = 0; e < n_enc; ++e)
    csv << ',' << (encoders[e] == psnn::Encoder::Rate ? "rate" : "grf") << "_train_loss";
  csv << '\n';
  for (std::size_t i = 0; i < curves.front().size(); ++i) {
    csv << i + 1;
    for (std::size_t e = 0; e < n_enc; ++e) csv << ',' << format_number(curves[e][i]);
    csv << '\n';
  }
  res.artifacts.emplace_back("training_curve.csv", csv.str());
  return res;
}

ExperimentResult run_psnn_target(const ExperimentConfig& cfg) {
  const json& b = cfg.psnn;
  const int seeds = get_int(b, "seeds");
  if (seeds < 1) throw ConfigError("psnn.seeds must be >= 1");
  const int n_in = get_int(b, "n_in"), n_out = get_int(b, "n_out"), t_steps = get_int(b, "t_steps");
  const int reps = get_int(b, "eval_reps"), batch = get_int(b, "batch_size");
  const auto kind = parse_loss(get_string(b, "loss"));
  const auto lrs = get_doubles(b, "lr");
  std::vector<double> before(seeds), after(seeds), lr_used(seeds);
  std::vector<std::vector<double>> curves(seeds);
  parallel_for(seeds, [&](std::size_t s) {
    const std::uint64_t task_seed = derive_seed(cfg.seed, s);
    auto task = psnn::make_target_task(n_in, n_out, t_steps, get_double(b, "density"), task_seed);
    psnn::GlmNetwork net(n_in, get_int(b, "hidden"), n_out, b.at("recurrent").get<bool>());
    Rng init_rng(derive_seed(task_seed, "init"));
    psnn::randomize(net, get_double(b, "init_scale"), init_rng);
    std::vector<psnn::Sample> data(std::max(1, batch), psnn::Sample{task.input, task.target});
    Rng eval_rng(derive_seed(task_seed, "eval"));
    before[s] = psnn::evaluate(net, {data.front()}, kind, 0, reps, eval_rng);
    psnn::TrainConfig tc = psnn_train_config(b);
    tc.seed = derive_seed(task_seed, "train");
    auto best = train_best(net, data, tc, lrs);
    after[s] = psnn::evaluate(best.net, {data.front()}, kind, 0, reps, eval_rng);
    lr_used[s] = best.lr;
    curves[s] = best.report.loss;
  });
  double b_mean = 0, a_mean = 0;
  for (int s = 0; s < seeds; ++s) {
    b_mean += before[s] / seeds;
    a_mean += after[s] / seeds;
  }
  ExperimentResult res;
  MetricsRecord rec(cfg.experiment, cfg.seed);
  rec.add("initial_loss", b_mean).add("final_loss", a_mean);
  if (b_mean > 0) rec.add("final_over_initial", a_mean / b_mean);
  res.records.push_back(rec);
  res.report = {{"initial_loss", before}, {"final_loss", after}, {"lr", lr_used}};
  std::ostringstream csv;
  csv << "epoch";
  for (int s = 0; s < seeds; ++s) csv << ",seed" << s << "_loss";
  csv << '\n';
  for (std::size_t i = 0; i < curves.front().size(); ++i) {
    csv << i + 1;
    for (int s = 0; s < seeds; ++s) csv << ',' << format_number(curves[s][i]);
    csv << '\n';
  }
  res.artifacts.emplace_back("training_curve.csv", csv.str());
  return res;
}

ExperimentResult run_psnn(const ExperimentConfig& cfg) {
  const std::string task = get_string(cfg.psnn, "task");
  if (task == "classify") return run_fig11(cfg);
  if (task == "target-raster") return run_psnn_target(cfg);
  throw ConfigError("psnn.task must be 'classify' or 'target-raster'");
}

// --- reservoir ---------------------------------------------------------------

ExperimentResult run_fig14(const ExperimentConfig& cfg) {
  const json& b = cfg.reservoir;
  if (get_string(b, "task") != "narma10") throw ConfigError("reservoir.task must be 'narma10'");
  reservoir::NarmaConfig nc;
  auto& rc = nc.reservoir;
  rc.n_nodes = get_int(b, "nodes");
  rc.rho = get_double(b, "rho");
  rc.leak = get_double(b, "leak");
  rc.input_scale = get_double(b, "input_scale");
  rc.connectivity = get_double(b, "connectivity");
  rc.node_kind = reservoir::parse_node_kind(get_string(b, "node_kind"));
  rc.decay_tau = get_double(b, "decay_tau");
  rc.drive_gain = get_double(b, "drive_gain");
  rc.device = cfg.device;
  nc.train_length = get_int(b, "train_length");
  nc.test_length = get_int(b, "test_length");
  nc.washout = get_int(b, "washout");
  nc.ridge_lambda = get_double(b, "ridge");
  nc.linear_lags = get_int(b, "linear_lags");
  const auto r = reservoir::run_narma(nc, cfg.seed);

  ExperimentResult res;
  MetricsRecord rec(cfg.experiment, cfg.seed);
  rec.add("train_nrmse", r.train_nrmse)
      .add("test_nrmse", r.test_nrmse)
      .add("linear_test_nrmse", r.linear_test_nrmse)
      .add("spectral_radius", r.spectral_radius)
      .add("echo_distance", r.echo_distance);
  json echo = json::array();
  const int steps = get_int(b, "echo_steps");
  for (double rho : get_doubles(b, "echo_rhos")) {
    reservoir::ReservoirConfig ec = rc;
    ec.rho = rho;
    Rng rng(derive_seed(cfg.seed, "echo"));
    reservoir::Reservoir res_net(ec, rng);
    Eigen::MatrixXd u(steps, ec.n_inputs);
    for (int t = 0; t < steps; ++t)
      for (int j = 0; j < ec.n_inputs; ++j) u(t, j) = 0.5 * uniform01(rng);
    const double d = reservoir::echo_state_distance(res_net, u, steps, rng);
    rec.add("echo_distance_rho" + tag(rho), d);
    echo.push_back({{"rho", rho}, {"distance", d}});
  }
  res.records.push_back(rec);
  res.report = {{"train_nrmse", r.train_nrmse}, {"test_nrmse", r.test_nrmse},
                {"linear_test_nrmse", r.linear_test_nrmse}, {"spectral_radius", r.spectral_radius},
                {"echo", echo}};
  return res;
}

using Runner = ExperimentResult (*)(const ExperimentConfig&);

struct Dispatch {
  const char* name;
  Runner run;
};

const Dispatch kRunners[] = {
    {"crossbar_mvm", run_crossbar_mvm},     {"cs_basic", run_cs_basic},
    {"fig4_cs_recovery", run_fig4},         {"fig6_drift_inference", run_fig6},
    {"fig7_mnist_mixed_precision", run_fig7}, {"fig9_correlation", run_fig9},
    {"snn_efficiency", run_snn_efficiency}, {"fig11_encoding", run_psnn},
    {"psnn_target", run_psnn},              {"fig14_reservoir", run_fig14},
};

std::string pgm_bytes(const GrayImage& img) {
  if (img.width < 1 || img.height < 1 ||
      img.pixels.size() != static_cast<std::size_t>(img.width) * img.height)
    throw DimensionError("pgm: pixel count does not match width x height");
  std::string s = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  s.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return s;
}

GrayImage parse_pgm(const std::string& data, const std::string& name) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    if (start == pos) throw Error("pgm: truncated header in " + name);
    return data.substr(start, pos - start);
  };
  auto number = [&]() {
    const std::string t = token();
    int v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size() || v < 0)
      throw Error("pgm: bad header field '" + t + "' in " + name);
    return v;
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P2") throw Error("pgm: " + name + " is not a P5/P2 graymap");
  GrayImage img;
  img.width = number();
  img.height = number();
  const int maxval = number();
  if (img.width < 1 || img.height < 1 || maxval < 1 || maxval > 255)
    throw Error("pgm: unsupported dimensions or maxval in " + name);
  const std::size_t count = static_cast<std::size_t>(img.width) * img.height;
  img.pixels.resize(count);
  auto rescale = [&](int v) {
    return static_cast<std::uint8_t>(std::lround(255.0 * std::min(v, maxval) / maxval));
  };
  if (magic == "P5") {
    ++pos;  // single whitespace after maxval
    if (data.size() < pos + count) throw Error("pgm: truncated pixel data in " + name);
    for (std::size_t i = 0; i < count; ++i) img.pixels[i] = rescale(static_cast<unsigned char>(data[pos + i]));
  } else {
    for (std::size_t i = 0; i < count; ++i) img.pixels[i] = rescale(number());
  }
  return img;
}

}  // namespace

// --- config --------------------------------------------------------------------

DeviceParams device_profile(const std::string& name) {
  if (name == "ideal") return DeviceParams::ideal();
  if (name == "pcm") return DeviceParams{};
  throw ConfigError("unknown device profile '" + name + "' (valid: ideal, pcm)");
}

void device_to_json(const DeviceParams& p, json& j) {
  for (const char* k : kDeviceKeys) j[k] = *device_field(const_cast<DeviceParams&>(p), k);
}

void device_from_json(const json& j, DeviceParams& p, std::vector<std::string>* warnings) {
  if (!j.is_object()) throw ConfigError("'device' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "profile") continue;
    double* f = device_field(p, it.key());
    if (!f) {
      if (warnings) {
        json valid = {{"profile", ""}};
        for (const char* k : kDeviceKeys) valid[k] = 0;
        warnings->push_back("unknown key 'device." + it.key() + "' ignored; valid keys: " + key_list(valid));
      }
      continue;
    }
    if (!it.value().is_number()) throw ConfigError("'device." + it.key() + "' must be a number");
    *f = it.value().get<double>();
  }
}

json ExperimentConfig::to_json() const {
  json j;
  j["experiment"] = experiment;
  j["seed"] = seed;
  json dev;
  dev["profile"] = device_profile;
  device_to_json(device, dev);
  j["device"] = dev;
  j["crossbar"] = crossbar;
  j["cs"] = cs;
  j["dnn"] = dnn;
  j["snn"] = snn;
  j["psnn"] = psnn;
  j["reservoir"] = reservoir;
  j["output_dir"] = output_dir;
  return j;
}

namespace {

json& block_of(ExperimentConfig& c, const std::string& name) {
  if (name == "crossbar") return c.crossbar;
  if (name == "cs") return c.cs;
  if (name == "dnn") return c.dnn;
  if (name == "snn") return c.snn;
  if (name == "psnn") return c.psnn;
  return c.reservoir;
}

/// Builds the config from an already parsed document.
ExperimentConfig build_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  if (!doc.contains("experiment") || !doc["experiment"].is_string())
    throw ConfigError("config: 'experiment' (string) is required");
  const std::string name = doc["experiment"].get<std::string>();
  const RegistryEntry* entry = find_experiment(name);
  if (!entry) {
    std::string names;
    for (const auto& e : registry()) names += (names.empty() ? "" : ", ") + e.name;
    throw ConfigError("unknown experiment '" + name + "'; registered: " + names);
  }
  if (!doc.contains("seed")) throw ConfigError("config: 'seed' is required");
  const json& seed = doc["seed"];
  if (!(seed.is_number_unsigned() || (seed.is_number_integer() && seed.get<std::int64_t>() >= 0)))
    throw ConfigError("config: 'seed' must be a non-negative integer");

  ExperimentConfig c;
  c.experiment = name;
  c.seed = seed.get<std::uint64_t>();
  for (const char* b : kBlocks) {
    json& slot = block_of(c, b);
    slot = module_defaults(b);
    if (entry->defaults.contains(b)) merge_checked(slot, entry->defaults[b], b, c.warnings);
  }

  c.device_profile = entry->default_profile;
  const json empty = json::object();
  const json& entry_dev = entry->defaults.contains("device") ? entry->defaults["device"] : empty;
  const json& user_dev = doc.contains("device") ? doc["device"] : empty;
  if (!user_dev.is_object()) throw ConfigError("'device' must be an object");
  for (const json* d : {&entry_dev, &user_dev})
    if (d->contains("profile")) {
      if (!(*d)["profile"].is_string()) throw ConfigError("'device.profile' must be a string");
      c.device_profile = (*d)["profile"].get<std::string>();
    }
  c.device = device_profile(c.device_profile);
  device_from_json(entry_dev, c.device);
  device_from_json(user_dev, c.device, &c.warnings);
  try {
    c.device.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("device: ") + e.what());
  }

  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& k = it.key();
    if (k == "experiment" || k == "seed" || k == "device") continue;
    if (k == "output_dir") {
      if (!it.value().is_string()) throw ConfigError("'output_dir' must be a string");
      c.output_dir = it.value().get<std::string>();
    } else if (std::find_if(std::begin(kBlocks), std::end(kBlocks),
                            [&](const char* b) { return k == b; }) != std::end(kBlocks)) {
      merge_checked(block_of(c, k), it.value(), k, c.warnings);
    } else {
      c.warnings.push_back("unknown key '" + k +
                           "' ignored; valid keys: experiment, seed, device, crossbar, cs, dnn, snn, "
                           "psnn, reservoir, output_dir");
    }
  }
  return c;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON at " + location(text, e.byte) + ": " + e.what());
  }
  return build_config(doc);
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

ExperimentConfig default_config(const std::string& experiment, std::uint64_t seed, const json& overrides) {
  if (!overrides.is_object()) throw ConfigError("overrides must be a JSON object");
  json doc = overrides;
  doc["experiment"] = experiment;
  doc["seed"] = seed;
  return build_config(doc);
}

// --- metrics -----------------------------------------------------------------

std::string format_number(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("format_number: conversion failed");
  return std::string(buf, p);
}

MetricsRecord::MetricsRecord(std::string experiment, std::uint64_t seed)
    : experiment_(std::move(experiment)), seed_(seed), timestamp_(iso_timestamp()), version_(version()) {}

MetricsRecord& MetricsRecord::add(const std::string& key, double value) {
  if (!std::isfinite(value)) throw DomainError("metric '" + key + "' is not finite");
  if (key.empty()) throw DomainError("metric key must not be empty");
  if (has(key)) throw DomainError("metric '" + key + "' already recorded");
  metrics_.emplace_back(key, value);
  return *this;
}

bool MetricsRecord::has(const std::string& key) const {
  return std::any_of(metrics_.begin(), metrics_.end(), [&](const auto& kv) { return kv.first == key; });
}

double MetricsRecord::at(const std::string& key) const {
  for (const auto& [k, v] : metrics_)
    if (k == key) return v;
  throw DomainError("metric '" + key + "' not recorded");
}

void emit_metrics(const std::vector<MetricsRecord>& records, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());

  std::vector<std::string> columns;
  for (const auto& r : records)
    for (const auto& kv : r.metrics())
      if (std::find(columns.begin(), columns.end(), kv.first) == columns.end()) columns.push_back(kv.first);

  std::ostringstream csv;
  csv << "experiment,seed,timestamp,version";
  for (const auto& c : columns) csv << ',' << csv_escape(c);
  csv << '\n';
  json arr = json::array();
  for (const auto& r : records) {
    csv << csv_escape(r.experiment()) << ',' << r.seed() << ',' << r.timestamp() << ','
        << csv_escape(r.software_version());
    json m = json::object();
    for (const auto& c : columns) {
      csv << ',';
      if (r.has(c)) csv << format_number(r.at(c));
    }
    csv << '\n';
    for (const auto& [k, v] : r.metrics()) m[k] = v;
    arr.push_back({{"experiment", r.experiment()},
                   {"seed", r.seed()},
                   {"timestamp", r.timestamp()},
                   {"version", r.software_version()},
                   {"metrics", m}});
  }
  write_file(dir / "metrics.csv", csv.str());
  write_file(dir / "metrics.json", json{{"records", arr}}.dump(2) + "\n");
}

void write_pgm(const fs::path& path, const GrayImage& img) { write_file(path, pgm_bytes(img)); }

GrayImage read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read image " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_pgm(ss.str(), path.string());
}

// --- registry ------------------------------------------------------------------

const std::vector<RegistryEntry>& registry() {
  static const std::vector<RegistryEntry> entries = [] {
    const json exact_programming = {{"programming", {{"tol", 1e-6}, {"max_iter", 200}}}};
    std::vector<RegistryEntry> e;
    e.push_back({"crossbar_mvm", "crossbar", "-",
                 "analog MVM, transpose and tiled MVM against float products", "ideal", json::object()});
    e.push_back({"cs_basic", "cs", "-", "one AMP recovery of a sparse signal through the crossbar", "ideal",
                 {{"crossbar", exact_programming}}});
    e.push_back({"fig4_cs_recovery", "cs", "Fig 4",
                 "AMP NMSE curves, ideal vs noisy devices, plus block-CS image reconstruction", "pcm",
                 {{"crossbar", exact_programming}, {"cs", {{"trials", 20}}}}});
    e.push_back({"fig6_drift_inference", "dnn", "Fig 6 (methodology)",
                 "test accuracy of a programmed network as conductances drift", "pcm",
                 {{"dnn", {{"layers", json::array({64})}, {"epochs", 15}}},
                  {"device", {{"drift_nu_cv", 0.3}}}}});
    e.push_back({"fig7_mnist_mixed_precision", "dnn", "Fig 7",
                 "mixed-precision training vs float training (MNIST if present, else 8x8 digits)",
                 "ideal", {{"device", {{"prog_noise_rel", 0.1}}}}});
    e.push_back({"fig9_correlation", "snn", "Fig 9",
                 "correlation detection with N=1 and N=7 multi-memristive synapses", "ideal",
                 {{"device", {{"prog_noise_rel", 0.1}}}}});
    e.push_back({"snn_efficiency", "snn", "-", "event-driven vs dense cost inequality", "ideal", json::object()});
    e.push_back({"fig11_encoding", "psnn", "Fig 11 (qualitative)",
                 "rate vs Gaussian-receptive-field encoding for a probabilistic SNN", "ideal",
                 {{"psnn", {{"task", "classify"}}}}});
    e.push_back({"psnn_target", "psnn", "-", "REINFORCE training towards a teacher spike raster", "ideal",
                 {{"psnn", {{"task", "target-raster"}, {"epochs", 2000}, {"lr", json::array({0.02})},
                            {"init_scale", 0.0}, {"eval_reps", 400}}}}});
    e.push_back({"fig14_reservoir", "reservoir", "Fig 14",
                 "echo-state network on NARMA-10 with a linear baseline", "ideal",
                 {{"reservoir", {{"leak", 1.0}, {"input_scale", 0.3}}}}});
    return e;
  }();
  return entries;
}

const RegistryEntry* find_experiment(const std::string& name) {
  for (const auto& e : registry())
    if (e.name == name) return &e;
  return nullptr;
}

ExperimentResult execute(const ExperimentConfig& cfg) {
  for (const auto& d : kRunners)
    if (cfg.experiment == d.name) {
      ExperimentResult r = d.run(cfg);
      const RegistryEntry* entry = find_experiment(cfg.experiment);
      json report = {{"experiment", cfg.experiment},
                     {"seed", cfg.seed},
                     {"version", version()},
                     {"figure", entry ? entry->figure : "-"}};
      for (auto it = r.report.begin(); it != r.report.end(); ++it) report[it.key()] = it.value();
      report["config"] = cfg.to_json();
      r.report = std::move(report);
      return r;
    }
  throw ConfigError("unknown experiment '" + cfg.experiment + "'");
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& report_name) {
  ExperimentResult r = execute(cfg);
  const fs::path dir = cfg.output_dir;
  emit_metrics(r.records, dir);
  write_file(dir / report_name, r.report.dump(2) + "\n");
  for (const auto& [name, data] : r.artifacts) write_file(dir / name, data);
  return r;
}

json error_json(const std::exception& e) {
  std::string type = "Error";
  if (dynamic_cast<const ConfigError*>(&e)) type = "ConfigError";
  else if (dynamic_cast<const ClockError*>(&e)) type = "ClockError";
  else if (dynamic_cast<const DomainError*>(&e)) type = "DomainError";
  else if (dynamic_cast<const DimensionError*>(&e)) type = "DimensionError";
  else if (dynamic_cast<const RangeError*>(&e)) type = "RangeError";
  else if (dynamic_cast<const DivergenceError*>(&e)) type = "DivergenceError";
  else if (dynamic_cast<const SingularSystemError*>(&e)) type = "SingularSystemError";
  else if (!dynamic_cast<const Error*>(&e)) type = "InternalError";
  json j = {{"error", {{"type", type}, {"message", e.what()}}}};
  if (const auto* d = dynamic_cast<const DivergenceError*>(&e)) j["error"]["iteration"] = d->iteration();
  return j;
}

int exit_code_for(const std::exception& e) { return dynamic_cast<const ConfigError*>(&e) ? 2 : 1; }

}  // namespace memsim::harness
