#pragma once
#include <string>
#include <vector>

#include "mirig/cdp.hpp"
#include "mirig/models.hpp"
#include "mirig/optimizer.hpp"
#include "mirig/pairing.hpp"

namespace mirig::train {

struct TrainConfig {
  int k_tr = 16;             // positive pairs per batch
  int steps = 3000;
  double tau = 0.1;
  pairing::Strategy strategy = pairing::Strategy::same_class(cdp::TaskSpec::all());
  std::string recipe = "small_conv";
  int repr_dim = 64, proj_dim = 32;
  diff::OptConfig opt = {};  // adam, lr 1e-3
  uint64_t seed = 1;
  int eval_interval = 100;
  int external_negatives = 0;  // M > 0 switches to the external-negative loss

  std::string canonical() const;  // stable serialization for config hashing
  uint64_t hash() const;
};

struct Checkpoint {
  models::EncoderSpec spec;
  diff::ParamSet params;  // enc.* and head.* tensors
  std::vector<double> mi_curve_bits;
  double final_loss = 0.0;
  uint64_t config_hash = 0;
  uint64_t seed = 0;
  bool diverged = false;
  std::string diagnostic;
};

struct TrainResult {
  Checkpoint ckpt;
  std::vector<double> loss_curve;  // nats per step
};

// Contrastive training; on loss divergence the checkpoint from the latest
// eval snapshot is returned with diverged=true and a diagnostic.
// negative_source provides images for the external-negative variant.
TrainResult train(const TrainConfig& cfg, const cdp::Dataset& data,
                  const cdp::Dataset* negative_source = nullptr);

// Binary checkpoint with embedded JSON metadata; round trips bit-identically.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Frozen-encoder representations for every listed dataset index.
Tensor encode_dataset(const Checkpoint& ckpt, const cdp::Dataset& data);

}  // namespace mirig::train
