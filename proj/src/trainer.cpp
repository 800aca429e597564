#include "mirig/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "mirig/objective.hpp"

namespace mirig::train {

using nlohmann::json;

std::string TrainConfig::canonical() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "k_tr=%d;steps=%d;tau=%.17g;strategy=%s;recipe=%s;repr=%d;proj=%d;"
                "opt=%s;lr=%.17g;momentum=%.17g;seed=%llu;eval=%d;ext_neg=%d",
                k_tr, steps, tau, strategy.to_string().c_str(), recipe.c_str(), repr_dim,
                proj_dim, opt.algo == diff::OptConfig::Algo::adam ? "adam" : "sgd", opt.lr,
                opt.momentum, static_cast<unsigned long long>(seed), eval_interval,
                external_negatives);
  return buf;
}

uint64_t TrainConfig::hash() const { return fnv1a64(canonical()); }

TrainResult train(const TrainConfig& cfg, const cdp::Dataset& data,
                  const cdp::Dataset* negative_source) {
  if (cfg.k_tr < 1) throw std::invalid_argument("train: k_tr must be positive");
  if (cfg.steps < 1) throw std::invalid_argument("train: steps must be positive");
  if (cfg.tau <= 0) throw std::invalid_argument("train: tau must be positive");
  if (cfg.eval_interval < 1) throw std::invalid_argument("train: eval_interval must be positive");
  if (data.train_idx.empty()) throw std::invalid_argument("train: dataset has no training split");
  if (cfg.external_negatives > 0 && !negative_source)
    throw std::invalid_argument("train: external negatives requested without a source dataset");

  models::EncoderSpec spec{cfg.recipe, data.size, cfg.repr_dim, cfg.proj_dim};
  const int k = cfg.k_tr, m = cfg.external_negatives;
  const int batch_rows = 2 * k + m;

  models::EncoderGraph eg = models::build_encoder(spec, batch_rows);
  int per_anchor = -1;
  int loss_node = m > 0
                      ? objective::append_nt_xent_external(eg.g, eg.emb, k, m, cfg.tau, &per_anchor)
                      : objective::append_nt_xent(eg.g, eg.emb, k, cfg.tau, &per_anchor);
  eg.g.set_output(loss_node);

  diff::ParamSet params;
  params.rng_seed = cfg.seed;
  Rng init_rng = Rng(cfg.seed).fork(0x9A7A);
  models::init_encoder_params(params, spec, init_rng);
  diff::Optimizer opt(cfg.opt);

  const int64_t img_stride = int64_t(3) * data.size * data.size;
  Tensor batch({batch_rows, 3, data.size, data.size});

  TrainResult res;
  res.ckpt.spec = spec;
  res.ckpt.config_hash = cfg.hash();
  res.ckpt.seed = cfg.seed;

  diff::ParamSet snapshot = params;
  std::vector<double> snapshot_curve;
  diff::ExecState<float> st;

  for (int step = 0; step < cfg.steps; ++step) {
    Rng step_rng = Rng(cfg.seed).fork(0xBA7C).fork(uint64_t(step));
    pairing::PairBatch pb = pairing::make_pairs(data, data.train_idx, cfg.strategy, k, step_rng);
    std::copy(pb.xs.data.begin(), pb.xs.data.end(), batch.data.begin());
    std::copy(pb.ys.data.begin(), pb.ys.data.end(), batch.data.begin() + int64_t(k) * img_stride);
    if (m > 0) {
      for (int j = 0; j < m; ++j) {
        int idx = int(step_rng.uniform_int(uint64_t(negative_source->n())));
        const Tensor& img = negative_source->samples[size_t(idx)].image;
        if (img.numel() != img_stride)
          throw std::invalid_argument("train: negative source image size mismatch");
        std::copy(img.data.begin(), img.data.end(),
                  batch.data.begin() + int64_t(2 * k + j) * img_stride);
      }
    }

    params.zero_grads();
    run_forward(eg.g, params, {&batch}, st);
    double loss = double(st.value[size_t(loss_node)][0]);
    bool bad = !std::isfinite(loss);
    if (!bad) {
      run_backward(eg.g, params, st);
      try {
        opt.step(params);
      } catch (const std::runtime_error& e) {
        bad = true;
        res.ckpt.diagnostic = e.what();
      }
    } else {
      res.ckpt.diagnostic = "non-finite loss at step " + std::to_string(step);
    }
    if (bad) {
      res.ckpt.diverged = true;
      params = snapshot;  // fall back to the last eval snapshot
      res.ckpt.mi_curve_bits = snapshot_curve;
      break;
    }

    res.loss_curve.push_back(loss);
    res.ckpt.final_loss = loss;
    if ((step + 1) % cfg.eval_interval == 0 || step + 1 == cfg.steps) {
      objective::LossValue lv;
      lv.nats = loss;
      const Tensor& pa = st.value[size_t(per_anchor)];
      lv.per_anchor.assign(pa.data.begin(), pa.data.end());
      double bits = m > 0 ? objective::estimated_mi_bits_external(lv, k, m).bits
                          : objective::estimated_mi_bits(lv, k).bits;
      res.ckpt.mi_curve_bits.push_back(bits);
      snapshot = params;
      snapshot_curve = res.ckpt.mi_curve_bits;
    }
  }

  res.ckpt.params = std::move(params);
  return res;
}

// --- checkpoint io ------------------------------------------------------

namespace {

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

uint32_t get_u32(const std::string& buf, size_t& pos, const char* what) {
  if (pos + 4 > buf.size())
    throw std::runtime_error(std::string("checkpoint truncated while reading ") + what);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos + size_t(i)])) << (8 * i);
  pos += 4;
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json meta = {
      {"recipe", ckpt.spec.recipe},
      {"image_size", ckpt.spec.image_size},
      {"repr_dim", ckpt.spec.repr_dim},
      {"proj_dim", ckpt.spec.proj_dim},
      {"mi_curve_bits", ckpt.mi_curve_bits},
      {"final_loss", ckpt.final_loss},
      {"config_hash", ckpt.config_hash},
      {"seed", ckpt.seed},
      {"diverged", ckpt.diverged},
      {"diagnostic", ckpt.diagnostic},
      {"tensor_count", ckpt.params.entries.size()},
  };
  std::string out = "MIRG";
  put_u32(out, 1);  // format version
  std::string mj = meta.dump();
  put_u32(out, uint32_t(mj.size()));
  out += mj;
  for (const auto& e : ckpt.params.entries) {
    put_u32(out, uint32_t(e.name.size()));
    out += e.name;
    out.push_back(char(uint8_t(e.value.rank())));
    for (int d : e.value.shape) put_u32(out, uint32_t(d));
    size_t bytes = e.value.data.size() * sizeof(float);
    size_t at = out.size();
    out.resize(at + bytes);
    std::memcpy(out.data() + at, e.value.data.data(), bytes);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path);
  f.write(out.data(), std::streamsize(out.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || buf.compare(0, 4, "MIRG") != 0)
    throw std::runtime_error("checkpoint has unknown magic (expected MIRG)");
  size_t pos = 4;
  uint32_t version = get_u32(buf, pos, "version");
  if (version != 1)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  uint32_t meta_len = get_u32(buf, pos, "metadata length");
  if (pos + meta_len > buf.size())
    throw std::runtime_error("checkpoint truncated in metadata");
  json meta = json::parse(buf.substr(pos, meta_len));
  pos += meta_len;

  Checkpoint ckpt;
  ckpt.spec.recipe = meta.at("recipe");
  ckpt.spec.image_size = meta.at("image_size");
  ckpt.spec.repr_dim = meta.at("repr_dim");
  ckpt.spec.proj_dim = meta.at("proj_dim");
  ckpt.mi_curve_bits = meta.at("mi_curve_bits").get<std::vector<double>>();
  ckpt.final_loss = meta.at("final_loss");
  ckpt.config_hash = meta.at("config_hash");
  ckpt.seed = meta.at("seed");
  ckpt.diverged = meta.at("diverged");
  ckpt.diagnostic = meta.at("diagnostic");
  size_t tensor_count = meta.at("tensor_count");

  for (size_t t = 0; t < tensor_count; ++t) {
    uint32_t name_len = get_u32(buf, pos, "tensor name length");
    if (pos + name_len > buf.size()) throw std::runtime_error("checkpoint truncated in name");
    std::string name = buf.substr(pos, name_len);
    pos += name_len;
    if (pos >= buf.size()) throw std::runtime_error("checkpoint truncated at rank");
    int rank = int(uint8_t(buf[pos++]));
    std::vector<int> shape;
    for (int d = 0; d < rank; ++d) shape.push_back(int(get_u32(buf, pos, "dimension")));
    Tensor& dst = ckpt.params.add(name, shape);
    size_t bytes = dst.data.size() * sizeof(float);
    if (pos + bytes > buf.size()) throw std::runtime_error("checkpoint truncated in tensor data");
    std::memcpy(dst.data.data(), buf.data() + pos, bytes);
    pos += bytes;
  }
  if (pos != buf.size()) throw std::runtime_error("checkpoint has trailing bytes");
  ckpt.params.rng_seed = ckpt.seed;
  return ckpt;
}

Tensor encode_dataset(const Checkpoint& ckpt, const cdp::Dataset& data) {
  std::vector<const Tensor*> imgs;
  imgs.reserve(size_t(data.n()));
  for (const auto& s : data.samples) imgs.push_back(&s.image);
  return models::encode_reprs(ckpt.spec, ckpt.params, imgs);
}

}  // namespace mirig::train
