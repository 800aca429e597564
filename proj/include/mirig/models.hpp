#pragma once
#include <string>
#include <vector>

#include "mirig/graph.hpp"
#include "mirig/rng.hpp"

namespace mirig::models {

struct EncoderSpec {
  std::string recipe = "small_conv";  // small_conv | mlp
  int image_size = 32;
  int repr_dim = 64;
  int proj_dim = 32;
};

// Encoder + projection head as one chain.  repr taps the pre-projection
// representation used by probes and metrics; emb is the l2-normalized head
// output used by the contrastive loss.
struct EncoderGraph {
  diff::Graph g;
  int input = -1, repr = -1, emb = -1;
};

EncoderGraph build_encoder(const EncoderSpec& spec, int batch);
void init_encoder_params(diff::ParamSet& ps, const EncoderSpec& spec, Rng& rng);

// Estimation-time critic: same shape as the projection head, consuming frozen
// representations.
struct CriticSpec {
  int in_dim = 64;
  int hidden = 64;
  int out_dim = 32;
};

struct CriticGraph {
  diff::Graph g;
  int input = -1, emb = -1;
};

CriticGraph build_critic(const CriticSpec& spec, int batch);
void init_critic_params(diff::ParamSet& ps, const CriticSpec& spec, Rng& rng);

// Chunked forward pass collecting the representation rows for every image.
Tensor encode_reprs(const EncoderSpec& spec, const diff::ParamSet& params,
                    const std::vector<const Tensor*>& images);

}  // namespace mirig::models
