#include "mirig/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <thread>

#include "mirig/objective.hpp"
#include "mirig/rng.hpp"

namespace mirig::harness {

namespace {

std::string hex64(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)v);
  return buf;
}

pairing::AugOp parse_aug_token(const std::string& tok) {
  size_t colon = tok.find(':');
  std::string name = colon == std::string::npos ? tok : tok.substr(0, colon);
  double strength = 0.5;
  if (colon != std::string::npos) {
    char* end = nullptr;
    strength = std::strtod(tok.c_str() + colon + 1, &end);
    if (!end || *end != '\0')
      throw std::invalid_argument("bad augmentation strength in '" + tok + "'");
  }
  if (name == "crop") return {pairing::AugOp::Kind::crop, strength};
  if (name == "jitter") return {pairing::AugOp::Kind::jitter, strength};
  throw std::invalid_argument("unknown augmentation op '" + name + "' (crop|jitter)");
}

void run_jobs(std::vector<std::function<void()>>& jobs) {
  int threads = std::min<int>(thread_budget(), int(jobs.size()));
  if (threads <= 1) {
    for (auto& j : jobs) j();
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errs(jobs.size());
  auto worker = [&]() {
    for (size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
      try {
        jobs[i]();
      } catch (...) {
        errs[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

void add_correlation(RunReport& rep, const std::string& key, const std::vector<double>& a,
                     const std::vector<double>& b) {
  if (a.size() < 2) return;
  try {
    rep.correlations["pearson_" + key] = metrics::pearson(a, b);
    rep.correlations["kendall_" + key] = metrics::kendall_tau(a, b);
  } catch (const std::invalid_argument&) {
    // zero variance / all ties: correlation undefined, silently omitted
  }
}

const std::vector<cdp::TaskSpec>& grid_tasks() {
  static const std::vector<cdp::TaskSpec> tasks = {
      cdp::TaskSpec::parse("color"), cdp::TaskSpec::parse("digit"),
      cdp::TaskSpec::parse("position"), cdp::TaskSpec::all()};
  return tasks;
}

struct Cell {
  train::Checkpoint ckpt;
  Tensor reprs;
};

Cell train_cell(const train::TrainConfig& tc, const cdp::Dataset& data,
                const cdp::Dataset* negs = nullptr) {
  Cell c;
  c.ckpt = train::train(tc, data, negs).ckpt;
  c.reprs = train::encode_dataset(c.ckpt, data);
  return c;
}

std::string cell_status(const train::Checkpoint& ckpt, const estimate::MiEstimate& est) {
  return ckpt.diverged ? "Diverged" : estimate::status_name(est.status);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

}  // namespace

int thread_budget() {
  if (const char* env = std::getenv("MIRIG_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc ? int(hc) : 1;
}

std::string SweepConfig::canonical() const {
  std::string out = "scenario=" + scenario + ";data=";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "n=%d,seed=%llu,size=%d,mix=%.17g;", data_n,
                (unsigned long long)data_seed, data_size, data_mix);
  out += buf;
  out += "train{" + base_train.canonical() + "};est{" + base_est.canonical() + "};";
  std::snprintf(buf, sizeof(buf), "probe{it=%d,tol=%.17g,mom=%.17g,l2=%.17g,cap=%d};",
                probe.max_iters, probe.tol, probe.momentum, probe.l2, probe.max_train_rows);
  out += buf;
  out += "k_tr=[";
  for (int k : k_tr_values) out += std::to_string(k) + ",";
  out += "];strength=[";
  for (double s : strength_values) {
    std::snprintf(buf, sizeof(buf), "%.17g,", s);
    out += buf;
  }
  out += "];aug_op=" + aug_op + ";neg=[";
  for (const auto& s : neg_specs) out += s + ",";
  out += "];seeds=[";
  for (uint64_t s : seeds) out += std::to_string(s) + ",";
  out += "]";
  return out;
}

void SweepConfig::validate() const {
  if (scenario != "batch_size" && scenario != "infomin" && scenario != "task_grid" &&
      scenario != "negsample")
    throw std::invalid_argument("sweep: unknown scenario '" + scenario + "'");
  if (seeds.empty()) throw std::invalid_argument("sweep: seeds list is empty");
  if (data_n < 20) throw std::invalid_argument("sweep: dataset too small");
  if (scenario == "batch_size" && k_tr_values.empty())
    throw std::invalid_argument("sweep: k_tr_values is empty");
  if (scenario == "infomin") {
    if (strength_values.empty()) throw std::invalid_argument("sweep: strength_values is empty");
    if (aug_op != "crop" && aug_op != "jitter")
      throw std::invalid_argument("sweep: aug_op must be crop or jitter");
  }
  if (scenario == "negsample") {
    if (neg_specs.empty()) throw std::invalid_argument("sweep: neg_specs is empty");
    for (const auto& s : neg_specs)
      if (s != "related" && s != "noise" && s != "background")
        throw std::invalid_argument("sweep: unknown negative spec '" + s + "'");
  }
}

SweepConfig SweepConfig::from_toml(const config::TomlFile& f) {
  SweepConfig c;
  c.data_n = int(f.get_int("dataset", "n", c.data_n));
  c.data_seed = uint64_t(f.get_int("dataset", "seed", int64_t(c.data_seed)));
  c.data_size = int(f.get_int("dataset", "size", c.data_size));
  c.data_mix = f.get_double("dataset", "mix", c.data_mix);

  auto& t = c.base_train;
  t.k_tr = int(f.get_int("train", "k_tr", t.k_tr));
  t.steps = int(f.get_int("train", "steps", t.steps));
  t.tau = f.get_double("train", "tau", t.tau);
  t.recipe = f.get_str("train", "recipe", t.recipe);
  t.repr_dim = int(f.get_int("train", "repr_dim", t.repr_dim));
  t.proj_dim = int(f.get_int("train", "proj_dim", t.proj_dim));
  t.opt.lr = f.get_double("train", "lr", t.opt.lr);
  t.seed = uint64_t(f.get_int("train", "seed", int64_t(t.seed)));
  t.eval_interval = int(f.get_int("train", "eval_interval", t.eval_interval));
  t.external_negatives = int(f.get_int("train", "external_negatives", t.external_negatives));
  std::string pk = f.get_str("train", "pairing", "same_class");
  cdp::TaskSpec task = cdp::TaskSpec::parse(f.get_str("train", "task", "all"));
  if (pk == "same_class") {
    t.strategy = pairing::Strategy::same_class(task);
  } else if (pk == "augmented") {
    std::vector<pairing::AugOp> ops;
    for (const auto& tok : f.get_str_array("train", "aug")) ops.push_back(parse_aug_token(tok));
    if (ops.empty()) ops.push_back({pairing::AugOp::Kind::crop, 0.5});
    t.strategy = pairing::Strategy::augmented(ops);
  } else {
    throw std::invalid_argument("train.pairing must be same_class or augmented");
  }

  auto& e = c.base_est;
  e.k_est = int(f.get_int("estimate", "k_est", e.k_est));
  e.steps = int(f.get_int("estimate", "steps", e.steps));
  e.eval_batches = int(f.get_int("estimate", "eval_batches", e.eval_batches));
  e.tau = f.get_double("estimate", "tau", e.tau);
  e.opt.lr = f.get_double("estimate", "lr", e.opt.lr);
  e.seed = uint64_t(f.get_int("estimate", "seed", int64_t(e.seed)));
  e.epsilon = f.get_double("estimate", "epsilon", e.epsilon);
  e.aug_pool_pairs = int(f.get_int("estimate", "aug_pool_pairs", e.aug_pool_pairs));
  e.aug_eval_pool_pairs =
      int(f.get_int("estimate", "aug_eval_pool_pairs", e.aug_eval_pool_pairs));

  c.probe.max_iters = int(f.get_int("probe", "max_iters", c.probe.max_iters));
  c.probe.tol = f.get_double("probe", "tol", c.probe.tol);
  c.probe.l2 = f.get_double("probe", "l2", c.probe.l2);
  c.probe.max_train_rows = int(f.get_int("probe", "max_train_rows", c.probe.max_train_rows));

  c.scenario = f.get_str("sweep", "scenario", c.scenario);
  if (f.has("sweep", "k_tr_values")) {
    c.k_tr_values.clear();
    for (int64_t k : f.get_int_array("sweep", "k_tr_values")) c.k_tr_values.push_back(int(k));
  }
  if (f.has("sweep", "strength_values"))
    c.strength_values = f.get_double_array("sweep", "strength_values");
  c.aug_op = f.get_str("sweep", "aug_op", c.aug_op);
  if (f.has("sweep", "neg_specs")) c.neg_specs = f.get_str_array("sweep", "neg_specs");
  if (f.has("sweep", "seeds")) {
    c.seeds.clear();
    for (int64_t s : f.get_int_array("sweep", "seeds")) c.seeds.push_back(uint64_t(s));
  }
  c.validate();
  return c;
}

SweepConfig SweepConfig::from_toml_file(const std::string& path) {
  return from_toml(config::TomlFile::parse_file(path));
}

RunReport run_case_batch_size(const SweepConfig& cfg) {
  if (cfg.k_tr_values.empty()) throw std::invalid_argument("batch_size: k_tr_values is empty");
  cdp::Dataset data = cdp::make_dataset(cfg.data_n, cfg.data_seed, cfg.data_size, cfg.data_mix);
  RunReport rep;
  rep.scenario = "batch_size";
  rep.provenance = hex64(fnv1a64(cfg.canonical() + kVersion));
  const auto all = cdp::TaskSpec::all();
  rep.metadata["h_bits"] = "6";

  const size_t cells = cfg.seeds.size() * cfg.k_tr_values.size();
  std::vector<CellRow> rows(cells);
  std::vector<uint8_t> bad(cells, 0), diverged(cells, 0);
  std::vector<std::function<void()>> jobs;
  for (size_t si = 0; si < cfg.seeds.size(); ++si)
    for (size_t ki = 0; ki < cfg.k_tr_values.size(); ++ki) {
      size_t slot = si * cfg.k_tr_values.size() + ki;
      jobs.push_back([&, si, ki, slot]() {
        train::TrainConfig tc = cfg.base_train;
        tc.k_tr = cfg.k_tr_values[ki];
        tc.seed = cfg.seeds[si];
        tc.strategy = pairing::Strategy::same_class(all);
        Cell cell = train_cell(tc, data);
        estimate::EstimationConfig ec = cfg.base_est;
        ec.strategy = pairing::Strategy::same_class(all);
        estimate::MiEstimate est = estimate::estimate_mi(cell.ckpt, ec, data, &cell.reprs);
        metrics::ProbeResult pr = metrics::linear_probe(cell.ckpt, data, all, cfg.probe,
                                                        &cell.reprs);
        CellRow& r = rows[slot];
        r.config_id = hex64(fnv1a64(cfg.canonical() + ";k_tr=" + std::to_string(tc.k_tr) +
                                    ";seed=" + std::to_string(tc.seed)));
        r.scenario = "batch_size";
        r.k_tr = tc.k_tr;
        r.pairing = tc.strategy.to_string();
        r.task = "all";
        r.acc = pr.eval_acc;
        r.mi_train_bits = cell.ckpt.mi_curve_bits.empty() ? 0.0 : cell.ckpt.mi_curve_bits.back();
        r.mi_bits = est.bits;
        r.k_est = est.k_est;
        r.bound_bits = est.bound_bits;
        r.entropy_bits = est.entropy_bits;
        r.status = cell_status(cell.ckpt, est);
        bad[slot] = !estimate::check_bound(est).pass;
        diverged[slot] = cell.ckpt.diverged;
      });
    }
  run_jobs(jobs);
  rep.rows = std::move(rows);
  for (size_t i = 0; i < cells; ++i) {
    if (bad[i]) rep.invalid = true;
    if (diverged[i])
      rep.findings.push_back("diverged cell: " + rep.rows[i].config_id);
  }
  std::vector<double> acc, mi;
  for (const auto& r : rep.rows) {
    acc.push_back(r.acc);
    mi.push_back(r.mi_bits);
  }
  add_correlation(rep, "acc_mi", acc, mi);
  return rep;
}

RunReport run_case_infomin(const SweepConfig& cfg) {
  if (cfg.strength_values.empty())
    throw std::invalid_argument("infomin: strength_values is empty");
  pairing::AugOp base_op = parse_aug_token(cfg.aug_op);
  cdp::Dataset data = cdp::make_dataset(cfg.data_n, cfg.data_seed, cfg.data_size, cfg.data_mix);
  RunReport rep;
  rep.scenario = "infomin";
  rep.provenance = hex64(fnv1a64(cfg.canonical() + kVersion));
  rep.metadata["strength_axis_note"] =
      "strength is the operator's own scale in [0,1]; it is not calibrated to H(C)";
  const auto& tasks = grid_tasks();

  const size_t n_str = cfg.strength_values.size();
  const size_t cells = cfg.seeds.size() * n_str;
  std::vector<std::vector<CellRow>> cell_rows(cells);
  std::vector<uint8_t> bad(cells, 0);
  std::vector<std::function<void()>> jobs;
  for (size_t si = 0; si < cfg.seeds.size(); ++si)
    for (size_t sti = 0; sti < n_str; ++sti) {
      size_t slot = si * n_str + sti;
      jobs.push_back([&, si, sti, slot]() {
        double strength = cfg.strength_values[sti];
        std::vector<pairing::AugOp> ops = {{base_op.kind, strength}};
        train::TrainConfig tc = cfg.base_train;
        tc.seed = cfg.seeds[si];
        tc.strategy = pairing::Strategy::augmented(ops);
        Cell cell = train_cell(tc, data);
        estimate::EstimationConfig ec = cfg.base_est;
        ec.strategy = pairing::Strategy::augmented(ops);
        estimate::MiEstimate est = estimate::estimate_mi(cell.ckpt, ec, data, nullptr);
        bad[slot] = !estimate::check_bound(est).pass;
        std::string cid =
            hex64(fnv1a64(cfg.canonical() + ";strength=" + std::to_string(strength) +
                          ";seed=" + std::to_string(tc.seed)));
        for (const auto& task : tasks) {
          metrics::ProbeResult pr =
              metrics::linear_probe(cell.ckpt, data, task, cfg.probe, &cell.reprs);
          CellRow r;
          r.config_id = cid;
          r.scenario = "infomin";
          r.k_tr = tc.k_tr;
          r.strength = strength;
          r.pairing = tc.strategy.to_string();
          r.task = task.to_string();
          r.acc = pr.eval_acc;
          r.mi_train_bits =
              cell.ckpt.mi_curve_bits.empty() ? 0.0 : cell.ckpt.mi_curve_bits.back();
          r.mi_bits = est.bits;
          r.k_est = est.k_est;
          r.bound_bits = est.bound_bits;
          r.entropy_bits = est.entropy_bits;  // NaN: augmented pairing has no H(C)
          r.status = cell_status(cell.ckpt, est);
          cell_rows[slot].push_back(std::move(r));
        }
      });
    }
  run_jobs(jobs);
  for (size_t i = 0; i < cells; ++i) {
    if (bad[i]) rep.invalid = true;
    for (auto& r : cell_rows[i]) rep.rows.push_back(std::move(r));
  }
  for (double s : cfg.strength_values)
    if (s == 0.0) {
      rep.findings.push_back("degenerate-pair warning: strength 0 produces identical views for " +
                             std::string(base_op.kind == pairing::AugOp::Kind::crop ? "crop"
                                                                                   : "jitter"));
      break;
    }

  // Peak table: per probe task, the strength with the highest mean accuracy.
  bool first = true;
  size_t common_peak = 0;
  bool same_peak = true;
  for (const auto& task : tasks) {
    std::string tname = task.to_string();
    std::vector<double> acc_by_strength(n_str, 0.0), mi_by_strength(n_str, 0.0);
    for (size_t sti = 0; sti < n_str; ++sti) {
      std::vector<double> accs, mis;
      for (const auto& r : rep.rows)
        if (r.task == tname && r.strength == cfg.strength_values[sti]) {
          accs.push_back(r.acc);
          mis.push_back(r.mi_bits);
        }
      acc_by_strength[sti] = mean_of(accs);
      mi_by_strength[sti] = mean_of(mis);
    }
    size_t peak = size_t(std::max_element(acc_by_strength.begin(), acc_by_strength.end()) -
                         acc_by_strength.begin());
    char buf[96];
    std::snprintf(buf, sizeof(buf), "peak_strength[%s]=%.17g", tname.c_str(),
                  cfg.strength_values[peak]);
    rep.findings.push_back(buf);
    if (first) {
      common_peak = peak;
      first = false;
    } else if (peak != common_peak) {
      same_peak = false;
    }
    add_correlation(rep, "acc_mi_" + tname, acc_by_strength, mi_by_strength);
  }
  rep.findings.push_back(std::string("all_tasks_peak_at_same_strength=") +
                         (same_peak ? "true" : "false"));
  return rep;
}

RunReport run_task_grid(const SweepConfig& cfg) {
  cdp::Dataset data = cdp::make_dataset(cfg.data_n, cfg.data_seed, cfg.data_size, cfg.data_mix);
  RunReport rep;
  rep.scenario = "task_grid";
  rep.provenance = hex64(fnv1a64(cfg.canonical() + kVersion));
  const auto& tasks = grid_tasks();

  const size_t cells = cfg.seeds.size() * tasks.size();
  std::vector<std::vector<CellRow>> cell_rows(cells);
  std::vector<uint8_t> bad(cells, 0);
  std::vector<std::function<void()>> jobs;
  for (size_t si = 0; si < cfg.seeds.size(); ++si)
    for (size_t ti = 0; ti < tasks.size(); ++ti) {
      size_t slot = si * tasks.size() + ti;
      jobs.push_back([&, si, ti, slot]() {
        train::TrainConfig tc = cfg.base_train;
        tc.seed = cfg.seeds[si];
        tc.strategy = pairing::Strategy::same_class(tasks[ti]);
        Cell cell = train_cell(tc, data);
        std::string cid =
            hex64(fnv1a64(cfg.canonical() + ";train_task=" + tasks[ti].to_string() +
                          ";seed=" + std::to_string(tc.seed)));
        for (const auto& col : tasks) {
          estimate::EstimationConfig ec = cfg.base_est;
          ec.strategy = pairing::Strategy::same_class(col);
          estimate::MiEstimate est = estimate::estimate_mi(cell.ckpt, ec, data, &cell.reprs);
          metrics::ProbeResult pr =
              metrics::linear_probe(cell.ckpt, data, col, cfg.probe, &cell.reprs);
          if (!estimate::check_bound(est).pass) bad[slot] = 1;
          CellRow r;
          r.config_id = cid;
          r.scenario = "task_grid";
          r.k_tr = tc.k_tr;
          r.pairing = tc.strategy.to_string();
          r.task = col.to_string();
          r.acc = pr.eval_acc;
          r.mi_train_bits =
              cell.ckpt.mi_curve_bits.empty() ? 0.0 : cell.ckpt.mi_curve_bits.back();
          r.mi_bits = est.bits;
          r.k_est = est.k_est;
          r.bound_bits = est.bound_bits;
          r.entropy_bits = est.entropy_bits;
          r.status = cell_status(cell.ckpt, est);
          cell_rows[slot].push_back(std::move(r));
        }
      });
    }
  run_jobs(jobs);
  for (size_t i = 0; i < cells; ++i) {
    if (bad[i]) rep.invalid = true;
    for (auto& r : cell_rows[i]) rep.rows.push_back(std::move(r));
  }
  return rep;
}

namespace {

cdp::Dataset filter_colors(const cdp::Dataset& base, bool keep_red_green) {
  cdp::Dataset out;
  out.size = base.size;
  out.mix = base.mix;
  out.seed = base.seed;
  for (const auto& s : base.samples) {
    bool rg = s.attrs.color == cdp::Color::red || s.attrs.color == cdp::Color::green;
    if (rg == keep_red_green) out.samples.push_back(s);
  }
  // same split rule as the generator: rank by a per-sample hash, lowest tenth
  // becomes the held-out split
  int n = int(out.samples.size());
  std::vector<int> order(size_t(n), 0);
  for (int i = 0; i < n; ++i) order[size_t(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return hash01(out.seed, 0x5917, uint64_t(out.samples[size_t(a)].source_id), 2) <
           hash01(out.seed, 0x5917, uint64_t(out.samples[size_t(b)].source_id), 2);
  });
  int eval_n = n / 10;
  out.eval_idx.assign(order.begin(), order.begin() + eval_n);
  out.train_idx.assign(order.begin() + eval_n, order.end());
  std::sort(out.eval_idx.begin(), out.eval_idx.end());
  std::sort(out.train_idx.begin(), out.train_idx.end());
  return out;
}

cdp::Dataset synth_negative_set(const std::string& kind, const SweepConfig& cfg, int count) {
  cdp::Dataset out;
  out.size = cfg.data_size;
  out.mix = 1.0;
  out.seed = cfg.data_seed;
  for (int i = 0; i < count; ++i) {
    cdp::Sample s;
    s.source_id = i;
    s.attrs = cdp::sample_attributes(cfg.data_seed ^ 0xB6, i);
    if (kind == "noise") {
      Rng rng = Rng(cfg.data_seed).fork(0xD15E).fork(uint64_t(i));
      s.image = Tensor({3, cfg.data_size, cfg.data_size});
      for (auto& p : s.image.data) p = float(rng.next_double());
    } else {  // background: pure texture, no glyph (mix = 1)
      uint64_t bg = Rng(cfg.data_seed).fork(0xB69).fork(uint64_t(i)).next_u64();
      s.image = cdp::render(s.attrs, bg, cfg.data_size, 1.0);
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

}  // namespace

RunReport run_negative_sampling(const SweepConfig& cfg) {
  if (cfg.neg_specs.empty()) throw std::invalid_argument("negsample: neg_specs is empty");
  cdp::Dataset base = cdp::make_dataset(cfg.data_n, cfg.data_seed, cfg.data_size, cfg.data_mix);
  cdp::Dataset data = filter_colors(base, true);
  if (data.samples.empty() || data.eval_idx.empty())
    throw std::runtime_error("negsample: red/green subset too small");

  std::vector<std::string> variants = {"baseline"};
  for (const auto& s : cfg.neg_specs) variants.push_back(s);
  std::map<std::string, cdp::Dataset> neg_sets;
  int synth_count = std::max(256, cfg.data_n / 8);
  for (const auto& v : cfg.neg_specs) {
    if (v == "related")
      neg_sets[v] = filter_colors(base, false);
    else
      neg_sets[v] = synth_negative_set(v, cfg, synth_count);
    if (neg_sets[v].samples.empty())
      throw std::invalid_argument("negsample: negative sampling dataset '" + v + "' is empty");
  }

  RunReport rep;
  rep.scenario = "negsample";
  rep.provenance = hex64(fnv1a64(cfg.canonical() + kVersion));
  rep.metadata["entropy_note"] =
      "color support is restricted to red/green, so the usual H(C) columns do not apply";
  const auto all = cdp::TaskSpec::all();

  const size_t cells = cfg.seeds.size() * variants.size();
  std::vector<CellRow> rows(cells);
  std::vector<std::function<void()>> jobs;
  for (size_t si = 0; si < cfg.seeds.size(); ++si)
    for (size_t vi = 0; vi < variants.size(); ++vi) {
      size_t slot = si * variants.size() + vi;
      jobs.push_back([&, si, vi, slot]() {
        const std::string& variant = variants[vi];
        train::TrainConfig tc = cfg.base_train;
        tc.seed = cfg.seeds[si];
        tc.strategy = pairing::Strategy::same_class(all);
        const cdp::Dataset* negs = nullptr;
        if (variant != "baseline") {
          tc.external_negatives = cfg.base_train.external_negatives > 0
                                      ? cfg.base_train.external_negatives
                                      : std::max(1, 2 * tc.k_tr - 2);
          negs = &neg_sets.at(variant);
        }
        Cell cell = train_cell(tc, data, negs);
        metrics::ProbeResult pr = metrics::linear_probe(cell.ckpt, data, all, cfg.probe,
                                                        &cell.reprs);
        CellRow& r = rows[slot];
        r.config_id = hex64(fnv1a64(cfg.canonical() + ";neg=" + variant +
                                    ";seed=" + std::to_string(tc.seed)));
        r.scenario = "negsample";
        r.k_tr = tc.k_tr;
        r.pairing = tc.strategy.to_string() +
                    (variant == "baseline" ? "" : "+neg(" + variant + ")");
        r.task = "all";
        r.acc = pr.eval_acc;
        r.mi_train_bits = cell.ckpt.mi_curve_bits.empty() ? 0.0 : cell.ckpt.mi_curve_bits.back();
        r.bound_bits = variant == "baseline"
                           ? objective::bound_bits(tc.k_tr)
                           : std::log2(double(tc.external_negatives) + 1.0);
        r.status = cell.ckpt.diverged ? "Diverged" : "";
      });
    }
  run_jobs(jobs);
  rep.rows = std::move(rows);

  // Orderings are observations at this scale, not assertions.
  for (size_t si = 0; si < cfg.seeds.size(); ++si) {
    double baseline_acc = rep.rows[si * variants.size()].acc;
    for (size_t vi = 1; vi < variants.size(); ++vi) {
      const CellRow& r = rep.rows[si * variants.size() + vi];
      char buf[160];
      std::snprintf(buf, sizeof(buf), "seed %llu: %s acc %+.4f vs baseline",
                    (unsigned long long)cfg.seeds[si], variants[vi].c_str(),
                    r.acc - baseline_acc);
      rep.findings.push_back(buf);
    }
  }
  return rep;
}

RunReport run_scenario(const SweepConfig& cfg) {
  cfg.validate();
  if (cfg.scenario == "batch_size") return run_case_batch_size(cfg);
  if (cfg.scenario == "infomin") return run_case_infomin(cfg);
  if (cfg.scenario == "task_grid") return run_task_grid(cfg);
  return run_negative_sampling(cfg);
}

}  // namespace mirig::harness
