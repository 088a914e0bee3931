#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "memsim/devices.hpp"

namespace memsim::harness {

using json = nlohmann::ordered_json;

std::string version();

/// Parsed experiment configuration. Module blocks hold the defaults of the
/// experiment merged with whatever the file set.
struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  std::string device_profile = "ideal";
  DeviceParams device = DeviceParams::ideal();
  json crossbar;
  json cs;
  json dnn;
  json snn;
  json psnn;
  json reservoir;
  std::string output_dir = "out";
  std::vector<std::string> warnings;

  /// Full config, defaults included.
  json to_json() const;
};

/// Throws ConfigError on malformed JSON (with line, column and offset), an
/// unknown experiment or a missing seed. Unknown keys become warnings.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Config for `experiment` with every default filled in; `overrides` is
/// merged on top exactly as a config file would be.
ExperimentConfig default_config(const std::string& experiment, std::uint64_t seed,
                                const json& overrides = json::object());

DeviceParams device_profile(const std::string& name);
void device_to_json(const DeviceParams& p, json& j);
/// Overlays the keys present in `j` on `p`. Unknown keys are reported in `warnings`.
void device_from_json(const json& j, DeviceParams& p, std::vector<std::string>* warnings = nullptr);

/// One row of results. Values must be finite; the record only grows.
class MetricsRecord {
 public:
  MetricsRecord(std::string experiment, std::uint64_t seed);

  /// Throws DomainError for a non-finite value or a repeated key.
  MetricsRecord& add(const std::string& key, double value);

  const std::string& experiment() const { return experiment_; }
  std::uint64_t seed() const { return seed_; }
  const std::string& timestamp() const { return timestamp_; }
  const std::string& software_version() const { return version_; }
  const std::vector<std::pair<std::string, double>>& metrics() const { return metrics_; }
  double at(const std::string& key) const;
  bool has(const std::string& key) const;

 private:
  std::string experiment_;
  std::uint64_t seed_;
  std::string timestamp_;
  std::string version_;
  std::vector<std::pair<std::string, double>> metrics_;
};

/// metrics.csv (fixed columns, then metric keys in first-seen order) and
/// metrics.json. Existing files are overwritten.
void emit_metrics(const std::vector<MetricsRecord>& records, const std::filesystem::path& dir);

/// Round-trip exact text for a metric value.
std::string format_number(double v);

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  ///< row-major
};

/// Binary (P5) 8-bit PGM.
void write_pgm(const std::filesystem::path& path, const GrayImage& img);
/// Reads P5 or P2 with maxval <= 255.
GrayImage read_pgm(const std::filesystem::path& path);

struct RegistryEntry {
  std::string name;
  std::string module;
  std::string figure;       ///< figure of the original study it scales down, or "-"
  std::string description;
  std::string default_profile;
  json defaults;            ///< per-experiment overrides of the module defaults
};

const std::vector<RegistryEntry>& registry();
const RegistryEntry* find_experiment(const std::string& name);

struct ExperimentResult {
  std::vector<MetricsRecord> records;
  json report;
  /// Data files produced by the run: file name and contents.
  std::vector<std::pair<std::string, std::string>> artifacts;
};

/// Runs the experiment without touching the file system.
ExperimentResult execute(const ExperimentConfig& cfg);

/// Runs the experiment and writes metrics.csv, metrics.json, report.json and
/// the experiment's data files to cfg.output_dir. `report_name` renames report.json.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::string& report_name = "report.json");

/// Machine-readable description of an exception.
json error_json(const std::exception& e);

/// Process exit code for an exception: 2 for configuration errors, 1 otherwise.
int exit_code_for(const std::exception& e);

}  // namespace memsim::harness
