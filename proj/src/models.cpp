#include "mirig/models.hpp"

#include <cmath>
#include <stdexcept>

namespace mirig::models {

namespace {

void he_uniform(Tensor& t, int fan_in, Rng& rng) {
  double limit = std::sqrt(6.0 / fan_in);
  for (auto& v : t.data) v = float(rng.uniform(-limit, limit));
}

// head.fc1 (repr->repr) relu, head.fc2 (repr->proj), l2norm
int append_head(diff::Graph& g, int repr, const EncoderSpec& spec, const std::string& prefix) {
  int w1 = g.param(prefix + ".fc1.w", {spec.repr_dim, spec.repr_dim});
  int b1 = g.param(prefix + ".fc1.b", {spec.repr_dim});
  int w2 = g.param(prefix + ".fc2.w", {spec.repr_dim, spec.proj_dim});
  int b2 = g.param(prefix + ".fc2.b", {spec.proj_dim});
  int h = g.relu(g.affine(repr, w1, b1));
  return g.l2norm(g.affine(h, w2, b2));
}

}  // namespace

EncoderGraph build_encoder(const EncoderSpec& spec, int batch) {
  if (batch < 1) throw std::invalid_argument("build_encoder: batch must be positive");
  int s = spec.image_size;
  if (s != 16 && s != 32 && s != 64)
    throw std::invalid_argument("build_encoder: image_size must be 16, 32 or 64");
  EncoderGraph eg;
  diff::Graph& g = eg.g;
  eg.input = g.input({batch, 3, s, s});

  if (spec.recipe == "small_conv") {
    int c1 = 16, c2 = 32;
    int w1 = g.param("enc.conv1.w", {c1, 3, 3, 3});
    int b1 = g.param("enc.conv1.b", {c1});
    int w2 = g.param("enc.conv2.w", {c2, c1, 3, 3});
    int b2 = g.param("enc.conv2.b", {c2});
    int w3 = g.param("enc.conv3.w", {spec.repr_dim, c2, 3, 3});
    int b3 = g.param("enc.conv3.b", {spec.repr_dim});
    int h = g.relu(g.conv2d(eg.input, w1, b1, 2));
    h = g.relu(g.conv2d(h, w2, b2, 2));
    h = g.relu(g.conv2d(h, w3, b3, 2));
    eg.repr = g.gap(h);
  } else if (spec.recipe == "mlp") {
    int flat = 3 * s * s, hidden = 256;
    int x = g.reshape(eg.input, {batch, flat});
    int w1 = g.param("enc.fc1.w", {flat, hidden});
    int b1 = g.param("enc.fc1.b", {hidden});
    int w2 = g.param("enc.fc2.w", {hidden, spec.repr_dim});
    int b2 = g.param("enc.fc2.b", {spec.repr_dim});
    eg.repr = g.affine(g.relu(g.affine(x, w1, b1)), w2, b2);
  } else {
    throw std::invalid_argument("unknown encoder recipe: " + spec.recipe);
  }
  eg.emb = append_head(g, eg.repr, spec, "head");
  return eg;
}

void init_encoder_params(diff::ParamSet& ps, const EncoderSpec& spec, Rng& rng) {
  if (spec.recipe == "small_conv") {
    int c1 = 16, c2 = 32;
    he_uniform(ps.add("enc.conv1.w", {c1, 3, 3, 3}), 3 * 9, rng);
    ps.add("enc.conv1.b", {c1});
    he_uniform(ps.add("enc.conv2.w", {c2, c1, 3, 3}), c1 * 9, rng);
    ps.add("enc.conv2.b", {c2});
    he_uniform(ps.add("enc.conv3.w", {spec.repr_dim, c2, 3, 3}), c2 * 9, rng);
    ps.add("enc.conv3.b", {spec.repr_dim});
  } else if (spec.recipe == "mlp") {
    int flat = 3 * spec.image_size * spec.image_size, hidden = 256;
    he_uniform(ps.add("enc.fc1.w", {flat, hidden}), flat, rng);
    ps.add("enc.fc1.b", {hidden});
    he_uniform(ps.add("enc.fc2.w", {hidden, spec.repr_dim}), hidden, rng);
    ps.add("enc.fc2.b", {spec.repr_dim});
  } else {
    throw std::invalid_argument("unknown encoder recipe: " + spec.recipe);
  }
  he_uniform(ps.add("head.fc1.w", {spec.repr_dim, spec.repr_dim}), spec.repr_dim, rng);
  ps.add("head.fc1.b", {spec.repr_dim});
  he_uniform(ps.add("head.fc2.w", {spec.repr_dim, spec.proj_dim}), spec.repr_dim, rng);
  ps.add("head.fc2.b", {spec.proj_dim});
}

CriticGraph build_critic(const CriticSpec& spec, int batch) {
  CriticGraph cg;
  diff::Graph& g = cg.g;
  cg.input = g.input({batch, spec.in_dim});
  int w1 = g.param("critic.fc1.w", {spec.in_dim, spec.hidden});
  int b1 = g.param("critic.fc1.b", {spec.hidden});
  int w2 = g.param("critic.fc2.w", {spec.hidden, spec.out_dim});
  int b2 = g.param("critic.fc2.b", {spec.out_dim});
  int h = g.relu(g.affine(cg.input, w1, b1));
  cg.emb = g.l2norm(g.affine(h, w2, b2));
  return cg;
}

void init_critic_params(diff::ParamSet& ps, const CriticSpec& spec, Rng& rng) {
  he_uniform(ps.add("critic.fc1.w", {spec.in_dim, spec.hidden}), spec.in_dim, rng);
  ps.add("critic.fc1.b", {spec.hidden});
  he_uniform(ps.add("critic.fc2.w", {spec.hidden, spec.out_dim}), spec.hidden, rng);
  ps.add("critic.fc2.b", {spec.out_dim});
}

Tensor encode_reprs(const EncoderSpec& spec, const diff::ParamSet& params,
                    const std::vector<const Tensor*>& images) {
  int n = int(images.size());
  if (n == 0) throw std::invalid_argument("encode_reprs: no images");
  Tensor out({n, spec.repr_dim});
  int chunk = std::min(n, 256);

  auto run_chunk = [&](int begin, int count, EncoderGraph& eg, diff::ExecState<float>& st) {
    Tensor batch({count, 3, spec.image_size, spec.image_size});
    int64_t stride = int64_t(3) * spec.image_size * spec.image_size;
    for (int i = 0; i < count; ++i) {
      const Tensor& img = *images[size_t(begin + i)];
      if (img.numel() != stride)
        throw std::invalid_argument("encode_reprs: image shape mismatch");
      std::copy(img.data.begin(), img.data.end(), batch.data.begin() + i * stride);
    }
    run_forward(eg.g, params, {&batch}, st);
    const Tensor& repr = st.value[size_t(eg.repr)];
    std::copy(repr.data.begin(), repr.data.end(),
              out.data.begin() + int64_t(begin) * spec.repr_dim);
  };

  EncoderGraph eg = build_encoder(spec, chunk);
  diff::ExecState<float> st;
  int full = n / chunk;
  for (int c = 0; c < full; ++c) run_chunk(c * chunk, chunk, eg, st);
  int rem = n - full * chunk;
  if (rem > 0) {
    EncoderGraph tail = build_encoder(spec, rem);
    diff::ExecState<float> st2;
    run_chunk(full * chunk, rem, tail, st2);
  }
  return out;
}

}  // namespace mirig::models
