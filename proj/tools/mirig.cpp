// mirig: dataset generation, contrastive training, decoupled MI estimation,
// representation metrics, and the sweep scenarios, all deterministic.
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mirig/harness.hpp"
#include "mirig/metrics.hpp"
#include "mirig/objective.hpp"

using namespace mirig;

namespace {

// Exit codes: 0 success, 1 usage or I/O failure, 2 violated invariant
// (bound-check failure or estimator-violation status).
constexpr int kExitError = 1, kExitInvariant = 2;

harness::SweepConfig load_sweep(const std::string& config_path) {
  if (config_path.empty()) return {};
  harness::SweepConfig cfg =
      harness::SweepConfig::from_toml(config::TomlFile::parse_file(config_path));
  return cfg;
}

std::vector<pairing::AugOp> parse_aug_list(const std::string& csv) {
  std::vector<pairing::AugOp> ops;
  size_t start = 0;
  while (start <= csv.size()) {
    size_t comma = csv.find(',', start);
    std::string tok = csv.substr(start, comma == std::string::npos ? csv.size() - start
                                                                   : comma - start);
    if (!tok.empty()) {
      size_t colon = tok.find(':');
      std::string name = tok.substr(0, colon);
      double strength = colon == std::string::npos ? 0.5 : std::stod(tok.substr(colon + 1));
      if (name == "crop")
        ops.push_back({pairing::AugOp::Kind::crop, strength});
      else if (name == "jitter")
        ops.push_back({pairing::AugOp::Kind::jitter, strength});
      else
        throw std::invalid_argument("unknown augmentation op '" + name + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (ops.empty()) throw std::invalid_argument("empty augmentation list");
  return ops;
}

Tensor normalized_rows(const Tensor& reprs, int* zero_rows) {
  Tensor out = reprs;
  const int n = out.shape[0], d = out.shape[1];
  *zero_rows = 0;
  for (int i = 0; i < n; ++i) {
    float* row = out.data.data() + size_t(i) * size_t(d);
    double norm = 0.0;
    for (int j = 0; j < d; ++j) norm += double(row[j]) * double(row[j]);
    norm = std::sqrt(norm);
    if (norm < 1e-9) {
      ++*zero_rows;
      for (int j = 0; j < d; ++j) row[j] = j == 0 ? 1.0f : 0.0f;
    } else {
      for (int j = 0; j < d; ++j) row[j] = float(double(row[j]) / norm);
    }
  }
  return out;
}

int run_sweep_command(const std::string& scenario, const std::string& config_path,
                      const std::string& out_dir) {
  harness::SweepConfig cfg = load_sweep(config_path);
  cfg.scenario = scenario;
  cfg.validate();
  harness::RunReport rep = harness::run_scenario(cfg);
  auto paths = harness::emit_report(rep, out_dir);
  std::printf("scenario   %s\n", rep.scenario.c_str());
  std::printf("rows       %zu\n", rep.rows.size());
  std::printf("provenance %s\n", rep.provenance.c_str());
  for (const auto& f : rep.findings) std::printf("finding    %s\n", f.c_str());
  for (const auto& [k, v] : rep.correlations) std::printf("corr       %s = %.6f\n", k.c_str(), v);
  for (const auto& p : paths) std::printf("wrote      %s\n", p.c_str());
  if (rep.invalid) {
    std::fprintf(stderr, "error: a sweep cell failed its bound check\n");
    return kExitInvariant;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mutual-information rigor toolkit for contrastive learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(harness::kVersion));

  // ---- gen ----
  auto* gen = app.add_subcommand("gen", "generate a packed synthetic dataset");
  std::string gen_out = "dataset";
  int gen_n = 8192, gen_size = 32;
  uint64_t gen_seed = 1;
  double gen_mix = 0.3;
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--n", gen_n, "sample count");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--size", gen_size, "image size (16|32|64)");
  gen->add_option("--mix", gen_mix, "background mix in [0,1]");

  // ---- train ----
  auto* tr = app.add_subcommand("train", "contrastive training run");
  std::string tr_data, tr_out = "ckpt.bin", tr_config, tr_task, tr_pairing, tr_aug;
  int tr_k = -1, tr_steps = -1;
  double tr_tau = -1, tr_lr = -1;
  int64_t tr_seed = -1;
  std::string tr_recipe;
  tr->add_option("--data", tr_data, "packed dataset directory")->required();
  tr->add_option("--out", tr_out, "checkpoint path");
  tr->add_option("--config", tr_config, "TOML config ([train] section)");
  tr->add_option("--k-tr", tr_k, "positive pairs per batch");
  tr->add_option("--steps", tr_steps, "training steps");
  tr->add_option("--tau", tr_tau, "temperature");
  tr->add_option("--lr", tr_lr, "learning rate");
  tr->add_option("--seed", tr_seed, "training seed");
  tr->add_option("--recipe", tr_recipe, "encoder recipe (small_conv|mlp)");
  tr->add_option("--task", tr_task, "same-class pairing task (color,digit,position|all)");
  tr->add_option("--pairing", tr_pairing, "same_class | augmented");
  tr->add_option("--aug", tr_aug, "augmentation ops, e.g. crop:0.5,jitter:0.25");

  // ---- estimate ----
  auto* es = app.add_subcommand("estimate", "post-training MI estimation");
  std::string es_ckpt, es_data, es_config, es_task, es_aug;
  int es_k = -1, es_steps = -1, es_evalb = -1;
  double es_tau = -1, es_eps = -1;
  int64_t es_seed = -1;
  es->add_option("--ckpt", es_ckpt, "checkpoint path")->required();
  es->add_option("--data", es_data, "packed dataset directory")->required();
  es->add_option("--config", es_config, "TOML config ([estimate] section)");
  es->add_option("--k-est", es_k, "pairs per estimation batch");
  es->add_option("--steps", es_steps, "critic steps");
  es->add_option("--eval-batches", es_evalb, "held-out batches");
  es->add_option("--tau", es_tau, "temperature");
  es->add_option("--epsilon", es_eps, "pinning tolerance");
  es->add_option("--seed", es_seed, "estimation seed");
  es->add_option("--task", es_task, "same-class estimation task");
  es->add_option("--aug", es_aug, "augmented estimation ops");

  // ---- metrics ----
  auto* me = app.add_subcommand("metrics", "linear probe + representation geometry");
  std::string me_ckpt, me_data, me_task = "all";
  int me_iters = -1, me_rows = -1;
  me->add_option("--ckpt", me_ckpt, "checkpoint path")->required();
  me->add_option("--data", me_data, "packed dataset directory")->required();
  me->add_option("--task", me_task, "probe task");
  me->add_option("--max-iters", me_iters, "probe iteration cap");
  me->add_option("--max-rows", me_rows, "probe training-row cap (0 = all)");

  // ---- corr ----
  auto* co = app.add_subcommand("corr", "pearson and kendall tau-b");
  std::vector<double> co_x, co_y;
  std::string co_csv, co_xcol = "acc", co_ycol = "mi_bits";
  co->add_option("--x", co_x, "first series")->delimiter(',');
  co->add_option("--y", co_y, "second series")->delimiter(',');
  co->add_option("--csv", co_csv, "results.csv from a sweep");
  co->add_option("--x-col", co_xcol, "csv column for x");
  co->add_option("--y-col", co_ycol, "csv column for y");

  // ---- sweeps ----
  struct SweepCmd {
    const char* name;
    const char* scenario;
    const char* help;
  };
  const SweepCmd sweeps[] = {
      {"case1", "batch_size", "batch-size sweep: pinning and decoupling"},
      {"infomin", "infomin", "augmentation-strength sweep"},
      {"grid", "task_grid", "pairing-task x probe-task grid"},
      {"negsample", "negsample", "negative-set comparison"},
  };
  std::string sw_config, sw_out = "out";
  for (const auto& s : sweeps) {
    auto* c = app.add_subcommand(s.name, s.help);
    c->add_option("--config", sw_config, "sweep TOML");
    c->add_option("--out", sw_out, "report directory");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      cdp::Dataset ds = cdp::make_dataset(gen_n, gen_seed, gen_size, gen_mix);
      cdp::write_packed(ds, gen_out);
      std::printf("wrote %d samples (size %d, mix %g, seed %llu) to %s\n", int(ds.samples.size()),
                  gen_size, gen_mix, (unsigned long long)gen_seed, gen_out.c_str());
      std::printf("split  train %zu / eval %zu\n", ds.train_idx.size(), ds.eval_idx.size());
      return 0;
    }

    if (*tr) {
      cdp::Dataset ds = cdp::read_packed(tr_data);
      train::TrainConfig tc = load_sweep(tr_config).base_train;
      if (tr_k > 0) tc.k_tr = tr_k;
      if (tr_steps >= 0) tc.steps = tr_steps;
      if (tr_tau > 0) tc.tau = tr_tau;
      if (tr_lr > 0) tc.opt.lr = tr_lr;
      if (tr_seed >= 0) tc.seed = uint64_t(tr_seed);
      if (!tr_recipe.empty()) tc.recipe = tr_recipe;
      if (tr_pairing == "augmented" || !tr_aug.empty())
        tc.strategy = pairing::Strategy::augmented(
            parse_aug_list(tr_aug.empty() ? "crop:0.5" : tr_aug));
      else if (!tr_task.empty() || tr_pairing == "same_class")
        tc.strategy =
            pairing::Strategy::same_class(cdp::TaskSpec::parse(tr_task.empty() ? "all" : tr_task));
      train::TrainResult res = train::train(tc, ds);
      train::save_checkpoint(res.ckpt, tr_out);
      std::printf("pairing     %s\n", tc.strategy.to_string().c_str());
      std::printf("steps       %d (k_tr %d, tau %g)\n", tc.steps, tc.k_tr, tc.tau);
      std::printf("final loss  %.6f nats\n", res.ckpt.final_loss);
      if (!res.ckpt.mi_curve_bits.empty())
        std::printf("train MI    %.4f bits (bound %.4f)\n", res.ckpt.mi_curve_bits.back(),
                    objective::bound_bits(tc.k_tr));
      if (res.ckpt.diverged)
        std::printf("diverged    yes (%s)\n", res.ckpt.diagnostic.c_str());
      std::printf("wrote       %s\n", tr_out.c_str());
      return 0;
    }

    if (*es) {
      cdp::Dataset ds = cdp::read_packed(es_data);
      train::Checkpoint ckpt = train::load_checkpoint(es_ckpt);
      estimate::EstimationConfig ec = load_sweep(es_config).base_est;
      if (es_k > 0) ec.k_est = es_k;
      if (es_steps >= 0) ec.steps = es_steps;
      if (es_evalb > 0) ec.eval_batches = es_evalb;
      if (es_tau > 0) ec.tau = es_tau;
      if (es_eps >= 0) ec.epsilon = es_eps;
      if (es_seed >= 0) ec.seed = uint64_t(es_seed);
      if (!es_aug.empty())
        ec.strategy = pairing::Strategy::augmented(parse_aug_list(es_aug));
      else
        ec.strategy =
            pairing::Strategy::same_class(cdp::TaskSpec::parse(es_task.empty() ? "all" : es_task));
      estimate::MiEstimate est = estimate::estimate_mi(ckpt, ec, ds);
      std::printf("pairing    %s\n", est.pairing_desc.c_str());
      std::printf("estimate   %.4f bits (+/- %.4f over %d held-out batches)\n", est.bits,
                  est.std_bits, ec.eval_batches);
      std::printf("bound      %.4f bits (K_Est %d)\n", est.bound_bits, est.k_est);
      if (!std::isnan(est.entropy_bits))
        std::printf("H(C)       %.4f bits (epsilon %.2f)\n", est.entropy_bits, est.epsilon);
      std::printf("status     %s\n", estimate::status_name(est.status));
      if (est.overfit_flag) std::printf("warning    held-out estimate escaped the training envelope\n");
      estimate::BoundCheck bc = estimate::check_bound(est);
      std::printf("bound ok   %s (margin %.4f bits)\n", bc.pass ? "yes" : "NO", bc.margin_bits);
      if (!bc.pass || est.status == estimate::TheoremStatus::estimator_violation)
        return kExitInvariant;
      return 0;
    }

    if (*me) {
      cdp::Dataset ds = cdp::read_packed(me_data);
      train::Checkpoint ckpt = train::load_checkpoint(me_ckpt);
      cdp::TaskSpec task = cdp::TaskSpec::parse(me_task);
      metrics::ProbeConfig pc;
      if (me_iters > 0) pc.max_iters = me_iters;
      if (me_rows >= 0) pc.max_train_rows = me_rows;
      Tensor reprs = train::encode_dataset(ckpt, ds);
      metrics::ProbeResult pr = metrics::linear_probe(ckpt, ds, task, pc, &reprs);
      std::printf("probe task  %s (%d classes)\n", task.to_string().c_str(), task.num_classes());
      std::printf("train acc   %.4f\n", pr.train_acc);
      std::printf("eval acc    %.4f (%d iters, grad %.2e)\n", pr.eval_acc, pr.iters,
                  pr.final_grad);
      if (pr.degenerate) std::printf("warning     collapsed features; accuracy reflects priors\n");
      int zero_rows = 0;
      Tensor unit = normalized_rows(reprs, &zero_rows);
      std::vector<int> labels;
      for (const auto& s : ds.samples) labels.push_back(task.class_id(s.attrs));
      metrics::RepMetrics rm = metrics::representation_metrics(unit, labels);
      if (zero_rows) std::printf("warning     %d zero-norm representation rows\n", zero_rows);
      std::printf("alignment   %.4f\n", rm.alignment);
      std::printf("uniformity  %.4f\n", rm.uniformity);
      std::printf("tolerance   %.4f\n", rm.tolerance);
      return 0;
    }

    if (*co) {
      std::vector<double> x = co_x, y = co_y;
      if (!co_csv.empty()) {
        auto rows = harness::parse_results_csv(co_csv);
        auto col = [&](const std::string& name, const harness::CellRow& r) -> double {
          if (name == "acc") return r.acc;
          if (name == "mi_bits") return r.mi_bits;
          if (name == "mi_train_bits") return r.mi_train_bits;
          if (name == "bound_bits") return r.bound_bits;
          if (name == "entropy_bits") return r.entropy_bits;
          if (name == "strength") return r.strength;
          if (name == "k_tr") return double(r.k_tr);
          if (name == "k_est") return double(r.k_est);
          throw std::invalid_argument("unknown column '" + name + "'");
        };
        x.clear();
        y.clear();
        for (const auto& r : rows) {
          double xv = col(co_xcol, r), yv = col(co_ycol, r);
          if (!std::isnan(xv) && !std::isnan(yv)) {
            x.push_back(xv);
            y.push_back(yv);
          }
        }
        std::printf("series     %s vs %s, %zu usable rows\n", co_xcol.c_str(), co_ycol.c_str(),
                    x.size());
      }
      std::printf("pearson    %.6f\n", metrics::pearson(x, y));
      std::printf("kendall    %.6f\n", metrics::kendall_tau(x, y));
      return 0;
    }

    for (const auto& s : sweeps)
      if (app.get_subcommand(s.name)->parsed()) return run_sweep_command(s.scenario, sw_config, sw_out);

    std::fprintf(stderr, "error: no subcommand\n");
    return kExitError;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  } catch (const std::out_of_range& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  } catch (const std::logic_error& e) {
    // failed internal invariant (e.g. the MI bound assertion)
    std::fprintf(stderr, "invariant violation: %s\n", e.what());
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
}
