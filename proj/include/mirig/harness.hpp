#pragma once
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mirig/config.hpp"
#include "mirig/estimator.hpp"
#include "mirig/metrics.hpp"
#include "mirig/trainer.hpp"

namespace mirig::harness {

inline constexpr const char* kVersion = "mirig 0.1.0";

// One sweep-cell result line.  Inapplicable numeric fields stay NaN and emit
// as empty CSV cells; inapplicable ints stay 0.
struct CellRow {
  std::string config_id;  // content hash of the cell's effective config
  std::string scenario;
  int k_tr = 0;
  double strength = std::numeric_limits<double>::quiet_NaN();
  std::string pairing;  // training pairing (plus the negative set, if any)
  std::string task;     // probe / estimation task column
  double acc = std::numeric_limits<double>::quiet_NaN();
  double mi_train_bits = std::numeric_limits<double>::quiet_NaN();
  double mi_bits = std::numeric_limits<double>::quiet_NaN();
  int k_est = 0;
  double bound_bits = std::numeric_limits<double>::quiet_NaN();
  double entropy_bits = std::numeric_limits<double>::quiet_NaN();
  std::string status;  // theorem status, or Diverged
};

struct RunReport {
  std::string scenario;
  std::vector<CellRow> rows;
  std::map<std::string, double> correlations;
  std::vector<std::string> findings;
  std::map<std::string, std::string> metadata;
  std::string provenance;  // content hash of config + code version
  bool invalid = false;    // some cell failed its bound check
};

struct SweepConfig {
  std::string scenario = "batch_size";  // batch_size | infomin | task_grid | negsample
  int data_n = 8192;
  uint64_t data_seed = 1;
  int data_size = 32;
  double data_mix = 0.3;
  train::TrainConfig base_train;
  estimate::EstimationConfig base_est;
  metrics::ProbeConfig probe;
  std::vector<int> k_tr_values = {2, 4, 16, 64};
  std::vector<double> strength_values = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::string aug_op = "crop";  // infomin: crop | jitter
  std::vector<std::string> neg_specs = {"related", "noise", "background"};
  std::vector<uint64_t> seeds = {1};

  std::string canonical() const;
  void validate() const;
  static SweepConfig from_toml(const config::TomlFile& f);
  static SweepConfig from_toml_file(const std::string& path);
};

RunReport run_case_batch_size(const SweepConfig& cfg);
RunReport run_case_infomin(const SweepConfig& cfg);
RunReport run_task_grid(const SweepConfig& cfg);
RunReport run_negative_sampling(const SweepConfig& cfg);
RunReport run_scenario(const SweepConfig& cfg);  // dispatch on cfg.scenario

// results.csv + report.json + plot.svg; returns the written paths.  Emission
// is deterministic: the same report always produces byte-identical files.
std::vector<std::string> emit_report(const RunReport& report, const std::string& out_dir);
std::vector<CellRow> parse_results_csv(const std::string& path);
bool rows_equal(const CellRow& a, const CellRow& b);  // NaN == NaN here

int thread_budget();  // MIRIG_THREADS override, else hardware concurrency

}  // namespace mirig::harness
