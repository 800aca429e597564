#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mirig/objective.hpp"
#include "mirig/trainer.hpp"

using namespace mirig;


namespace {

train::TrainConfig tiny_config() {
  train::TrainConfig cfg;
  cfg.k_tr = 4;
  cfg.steps = 30;
  cfg.tau = 0.2;
  cfg.recipe = "mlp";
  cfg.repr_dim = 16;
  cfg.proj_dim = 8;
  cfg.eval_interval = 10;
  cfg.seed = 5;
  return cfg;
}

uint64_t params_hash(const diff::ParamSet& ps) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (const auto& e : ps.entries) {
    h = fnv1a64(e.name, h);
    h = fnv1a64(e.value.data.data(), e.value.data.size() * sizeof(float), h);
  }
  return h;
}

}  // namespace

TEST_CASE("training reduces the contrastive loss and records a bounded mi curve") {
  auto ds = cdp::make_dataset(256, 11, 16, 0.2);
  auto cfg = tiny_config();
  train::TrainResult res = train::train(cfg, ds);
  CHECK(!res.ckpt.diverged);
  REQUIRE(res.loss_curve.size() == 30);
  double first = res.loss_curve.front(), last = res.loss_curve.back();
  CHECK(std::isfinite(last));
  CHECK(last < first);
  REQUIRE(res.ckpt.mi_curve_bits.size() == 3);
  for (double b : res.ckpt.mi_curve_bits) CHECK(b <= objective::bound_bits(cfg.k_tr) + 1e-9);
}

TEST_CASE("training is bitwise deterministic in seed and config") {
  auto ds = cdp::make_dataset(128, 3, 16, 0.2);
  auto cfg = tiny_config();
  cfg.steps = 12;
  train::TrainResult a = train::train(cfg, ds);
  train::TrainResult b = train::train(cfg, ds);
  CHECK(params_hash(a.ckpt.params) == params_hash(b.ckpt.params));
  CHECK(a.loss_curve == b.loss_curve);
  cfg.seed = 6;
  train::TrainResult c = train::train(cfg, ds);
  CHECK(params_hash(a.ckpt.params) != params_hash(c.ckpt.params));
}

TEST_CASE("K=1 degenerates to zero loss and zero estimate") {
  auto ds = cdp::make_dataset(64, 3, 16, 0.2);
  auto cfg = tiny_config();
  cfg.k_tr = 1;
  cfg.steps = 5;
  cfg.eval_interval = 1;
  train::TrainResult res = train::train(cfg, ds);
  for (double l : res.loss_curve) CHECK(l == 0.0);
  for (double b : res.ckpt.mi_curve_bits) CHECK(b == 0.0);
}

TEST_CASE("divergent training aborts with the last good snapshot and a diagnostic") {
  auto ds = cdp::make_dataset(64, 3, 16, 0.2);
  auto cfg = tiny_config();
  cfg.steps = 50;
  cfg.opt.algo = diff::OptConfig::Algo::sgd;
  cfg.opt.lr = 1e25;
  train::TrainResult res = train::train(cfg, ds);
  CHECK(res.ckpt.diverged);
  CHECK(!res.ckpt.diagnostic.empty());
  for (const auto& e : res.ckpt.params.entries)
    for (float v : e.value.data) CHECK(std::isfinite(v));
}

TEST_CASE("external-negative training runs and differs from the in-batch variant") {
  auto ds = cdp::make_dataset(96, 3, 16, 0.2);
  auto neg = cdp::make_dataset(64, 77, 16, 0.2);
  auto cfg = tiny_config();
  cfg.steps = 10;
  train::TrainResult base = train::train(cfg, ds);
  cfg.external_negatives = 7;
  train::TrainResult ext = train::train(cfg, ds, &neg);
  CHECK(!ext.ckpt.diverged);
  CHECK(params_hash(base.ckpt.params) != params_hash(ext.ckpt.params));
  for (double b : ext.ckpt.mi_curve_bits) CHECK(b <= std::log2(7 + 1) + 1e-9);
}

TEST_CASE("config hash tracks every field") {
  auto a = tiny_config();
  auto b = tiny_config();
  CHECK(a.hash() == b.hash());
  b.tau = 0.21;
  CHECK(a.hash() != b.hash());
  b = tiny_config();
  b.strategy = pairing::Strategy::augmented({{pairing::AugOp::Kind::crop, 0.5}});
  CHECK(a.hash() != b.hash());
}

TEST_CASE("checkpoint round trip is bit-identical") {
  auto ds = cdp::make_dataset(64, 3, 16, 0.2);
  auto cfg = tiny_config();
  cfg.steps = 8;
  train::TrainResult res = train::train(cfg, ds);
  namespace fs = std::filesystem;
  std::string path = (fs::temp_directory_path() / "mirig_test_ckpt.bin").string();
  train::save_checkpoint(res.ckpt, path);
  train::Checkpoint back = train::load_checkpoint(path);
  CHECK(back.spec.recipe == res.ckpt.spec.recipe);
  CHECK(back.spec.image_size == res.ckpt.spec.image_size);
  CHECK(back.spec.repr_dim == res.ckpt.spec.repr_dim);
  CHECK(back.mi_curve_bits == res.ckpt.mi_curve_bits);
  CHECK(back.final_loss == res.ckpt.final_loss);
  CHECK(back.config_hash == res.ckpt.config_hash);
  CHECK(params_hash(back.params) == params_hash(res.ckpt.params));
  fs::remove(path);
}

TEST_CASE("checkpoint loader rejects corrupted files") {
  auto ds = cdp::make_dataset(64, 3, 16, 0.2);
  auto cfg = tiny_config();
  cfg.steps = 3;
  train::TrainResult res = train::train(cfg, ds);
  namespace fs = std::filesystem;
  std::string path = (fs::temp_directory_path() / "mirig_test_ckpt_bad.bin").string();
  train::save_checkpoint(res.ckpt, path);
  std::ifstream in(path, std::ios::binary);
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  auto write = [&](const std::string& s) {
    std::ofstream(path, std::ios::binary).write(s.data(), std::streamsize(s.size()));
  };
  std::string bad = raw;
  bad[0] = 'Z';
  write(bad);
  CHECK_THROWS_WITH_AS(train::load_checkpoint(path), doctest::Contains("magic"), std::runtime_error);
  write(raw.substr(0, raw.size() - 5));
  CHECK_THROWS_WITH_AS(train::load_checkpoint(path), doctest::Contains("truncated"), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("encode_dataset matches per-image encoding across chunk boundaries") {
  auto ds = cdp::make_dataset(300, 13, 16, 0.2);
  auto cfg = tiny_config();
  cfg.steps = 4;
  train::TrainResult res = train::train(cfg, ds);
  Tensor all = train::encode_dataset(res.ckpt, ds);
  REQUIRE(all.shape == std::vector<int>{300, cfg.repr_dim});
  for (int idx : {0, 255, 256, 299}) {
    Tensor one =
        models::encode_reprs(res.ckpt.spec, res.ckpt.params, {&ds.samples[size_t(idx)].image});
    for (int j = 0; j < cfg.repr_dim; ++j)
      CHECK(one[j] == all[int64_t(idx) * cfg.repr_dim + j]);
  }
}
