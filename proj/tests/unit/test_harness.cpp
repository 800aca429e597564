#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "doctest.h"
#include "mirig/harness.hpp"

using namespace mirig;
using config::TomlFile;
using harness::RunReport;
using harness::SweepConfig;

TEST_CASE("toml subset parser") {
  TomlFile f = TomlFile::parse(
      "# comment\n"
      "top = 1\n"
      "[dataset]\n"
      "n = 4096          # trailing comment\n"
      "mix = 0.3\n"
      "label = \"hello, # not a comment\"\n"
      "flag = true\n"
      "ints = [1, 2, 3]\n"
      "floats = [0.5, 1, 2.5]\n"
      "names = [\"a\", \"b\"]\n"
      "empty = []\n");
  CHECK(f.get_int("", "top", 0) == 1);
  CHECK(f.get_int("dataset", "n", 0) == 4096);
  CHECK(f.get_double("dataset", "mix", 0) == doctest::Approx(0.3));
  CHECK(f.get_double("dataset", "n", 0) == doctest::Approx(4096.0));  // int promotes
  CHECK(f.get_str("dataset", "label", "") == "hello, # not a comment");
  CHECK(f.get_bool("dataset", "flag", false));
  CHECK(f.get_int_array("dataset", "ints") == std::vector<int64_t>{1, 2, 3});
  CHECK(f.get_double_array("dataset", "floats") == std::vector<double>{0.5, 1.0, 2.5});
  CHECK(f.get_str_array("dataset", "names") == std::vector<std::string>{"a", "b"});
  CHECK(f.get_int_array("dataset", "empty").empty());
  CHECK(f.get_int("dataset", "missing", 7) == 7);
  CHECK_FALSE(f.has("dataset", "missing"));
  CHECK(f.has("dataset", "n"));

  SUBCASE("type mismatches throw") {
    CHECK_THROWS_AS(f.get_int("dataset", "mix", 0), std::invalid_argument);
    CHECK_THROWS_AS(f.get_str("dataset", "n", ""), std::invalid_argument);
    CHECK_THROWS_AS(f.get_int_array("dataset", "names"), std::invalid_argument);
    CHECK_THROWS_AS(f.get_int_array("dataset", "n"), std::invalid_argument);
  }
  SUBCASE("malformed input throws with line info") {
    CHECK_THROWS_WITH_AS(TomlFile::parse("key value\n"), doctest::Contains("line 1"),
                         std::invalid_argument);
    CHECK_THROWS_AS(TomlFile::parse("a = 1\na = 2\n"), std::invalid_argument);
    CHECK_THROWS_AS(TomlFile::parse("[a\n"), std::invalid_argument);
    CHECK_THROWS_AS(TomlFile::parse("[a.b]\n"), std::invalid_argument);
    CHECK_THROWS_AS(TomlFile::parse("x = [1, 2\n"), std::invalid_argument);
    CHECK_THROWS_AS(TomlFile::parse("x = zzz\n"), std::invalid_argument);
    CHECK_THROWS_AS(TomlFile::parse("x =\n"), std::invalid_argument);
  }
}

namespace {

SweepConfig tiny_sweep(const std::string& scenario) {
  SweepConfig c;
  c.scenario = scenario;
  c.data_n = 1024;
  c.data_seed = 21;
  c.data_size = 16;
  c.data_mix = 0.3;
  c.base_train.steps = 40;
  c.base_train.k_tr = 4;
  c.base_train.repr_dim = 32;
  c.base_train.proj_dim = 16;
  c.base_train.eval_interval = 20;
  c.base_est.k_est = 8;
  c.base_est.steps = 40;
  c.base_est.eval_batches = 2;
  c.base_est.aug_pool_pairs = 32;
  c.base_est.aug_eval_pool_pairs = 16;
  c.probe.max_iters = 200;
  c.probe.max_train_rows = 256;
  c.k_tr_values = {2, 4};
  c.strength_values = {0.0, 0.5};
  c.seeds = {1};
  return c;
}

}  // namespace

TEST_CASE("sweep config from toml and validation") {
  TomlFile f = TomlFile::parse(
      "[dataset]\nn = 512\nseed = 9\nsize = 16\nmix = 0.25\n"
      "[train]\nk_tr = 8\nsteps = 77\ntau = 0.2\nrecipe = \"mlp\"\nrepr_dim = 24\n"
      "proj_dim = 12\nlr = 0.002\nseed = 3\ntask = \"color,digit\"\n"
      "[estimate]\nk_est = 64\nsteps = 99\neval_batches = 4\nepsilon = 0.4\n"
      "[probe]\nmax_iters = 500\n"
      "[sweep]\nscenario = \"batch_size\"\nk_tr_values = [2, 8]\nseeds = [1, 2]\n");
  SweepConfig c = SweepConfig::from_toml(f);
  CHECK(c.data_n == 512);
  CHECK(c.data_seed == 9);
  CHECK(c.data_mix == doctest::Approx(0.25));
  CHECK(c.base_train.k_tr == 8);
  CHECK(c.base_train.steps == 77);
  CHECK(c.base_train.tau == doctest::Approx(0.2));
  CHECK(c.base_train.recipe == "mlp");
  CHECK(c.base_train.repr_dim == 24);
  CHECK(c.base_train.opt.lr == doctest::Approx(0.002));
  CHECK(c.base_train.strategy.to_string() == "same_class(color,digit)");
  CHECK(c.base_est.k_est == 64);
  CHECK(c.base_est.steps == 99);
  CHECK(c.base_est.epsilon == doctest::Approx(0.4));
  CHECK(c.probe.max_iters == 500);
  CHECK(c.k_tr_values == std::vector<int>{2, 8});
  CHECK(c.seeds == std::vector<uint64_t>{1, 2});

  SUBCASE("augmented pairing parses ops") {
    TomlFile g = TomlFile::parse(
        "[train]\npairing = \"augmented\"\naug = [\"crop:0.7\", \"jitter:0.2\"]\n"
        "[sweep]\nscenario = \"infomin\"\n");
    SweepConfig a = SweepConfig::from_toml(g);
    CHECK(a.base_train.strategy.to_string() == "augment(crop:0.7,jitter:0.2)");
  }
  SUBCASE("invalid configs rejected") {
    CHECK_THROWS_AS(SweepConfig::from_toml(TomlFile::parse("[sweep]\nscenario = \"x\"\n")),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        SweepConfig::from_toml(TomlFile::parse(
            "[sweep]\nscenario = \"batch_size\"\nk_tr_values = []\n")),
        std::invalid_argument);
    CHECK_THROWS_AS(SweepConfig::from_toml(TomlFile::parse(
                        "[sweep]\nscenario = \"infomin\"\naug_op = \"blur\"\n")),
                    std::invalid_argument);
    CHECK_THROWS_AS(SweepConfig::from_toml(TomlFile::parse(
                        "[sweep]\nscenario = \"negsample\"\nneg_specs = [\"zzz\"]\n")),
                    std::invalid_argument);
    CHECK_THROWS_AS(SweepConfig::from_toml(TomlFile::parse(
                        "[train]\npairing = \"nope\"\n[sweep]\nscenario = \"batch_size\"\n")),
                    std::invalid_argument);
    SweepConfig c2 = tiny_sweep("batch_size");
    c2.seeds.clear();
    CHECK_THROWS_AS(c2.validate(), std::invalid_argument);
  }
}

TEST_CASE("batch-size scenario produces coherent rows") {
  SweepConfig cfg = tiny_sweep("batch_size");
  RunReport rep = harness::run_scenario(cfg);
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.scenario == "batch_size");
  CHECK_FALSE(rep.invalid);
  CHECK_FALSE(rep.provenance.empty());
  for (const auto& r : rep.rows) {
    CHECK(r.scenario == "batch_size");
    CHECK(r.pairing == "same_class(all)");
    CHECK(r.task == "all");
    CHECK(r.k_est == 8);
    CHECK(r.acc >= 0.0);
    CHECK(r.acc <= 1.0);
    CHECK(r.mi_bits <= r.bound_bits + 1e-9);
    CHECK(r.mi_train_bits <= std::log2(2.0 * r.k_tr - 1.0) + 1e-9);
    CHECK(r.entropy_bits == doctest::Approx(6.0));
    CHECK_FALSE(r.status.empty());
    CHECK_FALSE(r.config_id.empty());
  }
  CHECK(rep.rows[0].k_tr == 2);
  CHECK(rep.rows[1].k_tr == 4);
  CHECK(rep.rows[0].config_id != rep.rows[1].config_id);

  SUBCASE("bitwise deterministic; thread count does not matter") {
    RunReport again = harness::run_scenario(cfg);
    REQUIRE(again.rows.size() == rep.rows.size());
    for (size_t i = 0; i < rep.rows.size(); ++i)
      CHECK(harness::rows_equal(rep.rows[i], again.rows[i]));
    setenv("MIRIG_THREADS", "2", 1);
    CHECK(harness::thread_budget() == 2);
    RunReport threaded = harness::run_scenario(cfg);
    unsetenv("MIRIG_THREADS");
    for (size_t i = 0; i < rep.rows.size(); ++i)
      CHECK(harness::rows_equal(rep.rows[i], threaded.rows[i]));
  }
  SUBCASE("emitted report round-trips") {
    std::string dir = (std::filesystem::temp_directory_path() / "mirig_report_test").string();
    auto paths = harness::emit_report(rep, dir);
    REQUIRE(paths.size() == 3);
    auto parsed = harness::parse_results_csv(paths[0]);
    REQUIRE(parsed.size() == rep.rows.size());
    for (size_t i = 0; i < parsed.size(); ++i) CHECK(harness::rows_equal(parsed[i], rep.rows[i]));

    auto slurp = [](const std::string& p) {
      std::ifstream in(p, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    std::vector<std::string> first;
    for (const auto& p : paths) first.push_back(slurp(p));
    auto paths2 = harness::emit_report(rep, dir);
    for (size_t i = 0; i < paths.size(); ++i) CHECK(first[i] == slurp(paths2[i]));
    CHECK(first[2].find("<svg") != std::string::npos);
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("empty report emits a header-only csv") {
  RunReport rep;
  rep.scenario = "batch_size";
  rep.provenance = "0";
  std::string dir = (std::filesystem::temp_directory_path() / "mirig_empty_report").string();
  auto paths = harness::emit_report(rep, dir);
  auto rows = harness::parse_results_csv(paths[0]);
  CHECK(rows.empty());
  std::ifstream in(paths[0]);
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("config_id,scenario,", 0) == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("infomin scenario emits per-task rows and peak findings") {
  SweepConfig cfg = tiny_sweep("infomin");
  cfg.aug_op = "crop";
  RunReport rep = harness::run_case_infomin(cfg);
  REQUIRE(rep.rows.size() == 8);  // 2 strengths x 4 probe tasks
  CHECK_FALSE(rep.invalid);
  int degenerate_warnings = 0, peaks = 0, same_peak_lines = 0;
  for (const auto& fz : rep.findings) {
    if (fz.find("degenerate-pair warning") != std::string::npos) ++degenerate_warnings;
    if (fz.rfind("peak_strength[", 0) == 0) ++peaks;
    if (fz.rfind("all_tasks_peak_at_same_strength=", 0) == 0) ++same_peak_lines;
  }
  CHECK(degenerate_warnings == 1);
  CHECK(peaks == 4);
  CHECK(same_peak_lines == 1);
  for (const auto& r : rep.rows) {
    CHECK(r.pairing.rfind("augment(crop:", 0) == 0);
    CHECK(std::isnan(r.entropy_bits));
    CHECK((r.status == "LowerBoundOnly" || r.status == "Diverged"));
    CHECK(r.mi_bits <= r.bound_bits + 1e-9);
  }
  CHECK(rep.metadata.count("strength_axis_note") == 1);
}

TEST_CASE("task-grid scenario fills the 4x4 structure") {
  SweepConfig cfg = tiny_sweep("task_grid");
  RunReport rep = harness::run_task_grid(cfg);
  REQUIRE(rep.rows.size() == 16);
  CHECK_FALSE(rep.invalid);
  std::vector<std::string> tasks = {"color", "digit", "position", "all"};
  for (size_t r = 0; r < 4; ++r)
    for (size_t c = 0; c < 4; ++c) {
      const auto& row = rep.rows[r * 4 + c];
      CHECK(row.pairing == "same_class(" + tasks[r] + ")");
      CHECK(row.task == tasks[c]);
      CHECK(row.mi_bits <= row.bound_bits + 1e-9);
      double h = 2.0 * double(tasks[c] == "all" ? 3 : 1);
      CHECK(row.entropy_bits == doctest::Approx(h));
    }
}

TEST_CASE("negative-sampling scenario keeps a baseline row and orders findings") {
  SweepConfig cfg = tiny_sweep("negsample");
  cfg.base_train.steps = 30;
  RunReport rep = harness::run_negative_sampling(cfg);
  REQUIRE(rep.rows.size() == 4);  // baseline + 3 negative sets
  CHECK(rep.rows[0].pairing == "same_class(all)");
  CHECK(rep.rows[1].pairing == "same_class(all)+neg(related)");
  CHECK(rep.rows[2].pairing == "same_class(all)+neg(noise)");
  CHECK(rep.rows[3].pairing == "same_class(all)+neg(background)");
  CHECK(rep.findings.size() == 3);  // one delta line per negative set
  for (const auto& r : rep.rows) {
    CHECK(r.acc >= 0.0);
    CHECK(r.mi_train_bits <= r.bound_bits + 1e-9);
    CHECK(std::isnan(r.mi_bits));
    CHECK(r.k_est == 0);
  }
  CHECK(rep.metadata.count("entropy_note") == 1);
}
