#include "mirig/pairing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mirig::pairing {

std::string Strategy::to_string() const {
  if (kind == Kind::same_class) return "same_class(" + task.to_string() + ")";
  std::string out = "augment(";
  for (size_t i = 0; i < ops.size(); ++i) {
    if (i) out += ",";
    out += ops[i].kind == AugOp::Kind::jitter ? "jitter:" : "crop:";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", ops[i].strength);
    out += buf;
  }
  return out + ")";
}

SameClassIndex::SameClassIndex(const cdp::Dataset& ds, std::span<const int> subset,
                               const cdp::TaskSpec& task) {
  if (task.attr_count() == 0)
    throw std::invalid_argument("same-class pairing needs at least one attribute");
  std::vector<std::vector<int>> by_class(size_t(task.num_classes()));
  for (int idx : subset) {
    if (idx < 0 || idx >= ds.n())
      throw std::invalid_argument("pairing subset index out of range");
    by_class[size_t(task.class_id(ds.samples[size_t(idx)].attrs))].push_back(idx);
  }
  for (auto& g : by_class) {
    if (g.size() >= 2) {
      int64_t pairs = int64_t(g.size()) * (int64_t(g.size()) - 1);
      groups_.push_back(std::move(g));
      total_ += pairs;
      cum_.push_back(total_);
    } else if (!g.empty()) {
      ++excluded_;
    }
  }
  if (total_ == 0)
    throw std::invalid_argument("no class has two or more samples; nothing to pair");
}

std::pair<int, int> SameClassIndex::sample_pair(Rng& rng) const {
  int64_t t = int64_t(rng.uniform_int(uint64_t(total_)));
  size_t g = size_t(std::upper_bound(cum_.begin(), cum_.end(), t) - cum_.begin());
  int64_t base = g == 0 ? 0 : cum_[g - 1];
  int64_t local = t - base;
  const auto& grp = groups_[g];
  int64_t nc = int64_t(grp.size());
  int i = int(local / (nc - 1));
  int r = int(local % (nc - 1));
  int j = r < i ? r : r + 1;
  return {grp[size_t(i)], grp[size_t(j)]};
}

namespace {

void stack_views(PairBatch& b, std::vector<Tensor>& xs, std::vector<Tensor>& ys) {
  const auto& s = xs.front().shape;
  std::vector<int> shape = {int(xs.size())};
  shape.insert(shape.end(), s.begin(), s.end());
  b.xs = Tensor(shape);
  b.ys = Tensor(shape);
  int64_t stride = xs.front().numel();
  for (size_t i = 0; i < xs.size(); ++i) {
    std::copy(xs[i].data.begin(), xs[i].data.end(), b.xs.data.begin() + int64_t(i) * stride);
    std::copy(ys[i].data.begin(), ys[i].data.end(), b.ys.data.begin() + int64_t(i) * stride);
  }
}

}  // namespace

PairBatch pair_same_class_subset(const cdp::Dataset& ds, std::span<const int> subset,
                                 const cdp::TaskSpec& task, int k, Rng& rng) {
  if (k < 1) throw std::invalid_argument("pairing: K must be positive");
  SameClassIndex index(ds, subset, task);
  PairBatch b;
  std::vector<Tensor> xs, ys;
  for (int p = 0; p < k; ++p) {
    auto [i, j] = index.sample_pair(rng);
    xs.push_back(ds.samples[size_t(i)].image);
    ys.push_back(ds.samples[size_t(j)].image);
    b.labels.push_back(ds.samples[size_t(i)].attrs);
    b.sources.push_back({i, j});
  }
  stack_views(b, xs, ys);
  return b;
}

PairBatch pair_same_class(const cdp::Dataset& ds, const cdp::TaskSpec& task, int k, Rng& rng) {
  std::vector<int> all(size_t(ds.n()));
  for (int i = 0; i < ds.n(); ++i) all[size_t(i)] = i;
  return pair_same_class_subset(ds, all, task, k, rng);
}

PairBatch pair_augment(const cdp::Dataset& ds, std::span<const int> subset,
                       const std::vector<AugOp>& ops, int k, Rng& rng) {
  if (k < 1) throw std::invalid_argument("pairing: K must be positive");
  if (subset.empty()) throw std::invalid_argument("pairing: empty subset");
  PairBatch b;
  std::vector<Tensor> xs, ys;
  for (int p = 0; p < k; ++p) {
    int idx = subset[size_t(rng.uniform_int(subset.size()))];
    const auto& s = ds.samples[size_t(idx)];
    xs.push_back(apply_ops(s.image, ops, rng));
    ys.push_back(apply_ops(s.image, ops, rng));
    b.labels.push_back(s.attrs);
    b.sources.push_back({idx, idx});
  }
  stack_views(b, xs, ys);
  return b;
}

PairBatch make_pairs(const cdp::Dataset& ds, std::span<const int> subset, const Strategy& strat,
                     int k, Rng& rng) {
  if (strat.kind == Strategy::Kind::same_class)
    return pair_same_class_subset(ds, subset, strat.task, k, rng);
  return pair_augment(ds, subset, strat.ops, k, rng);
}

Tensor color_jitter(const Tensor& img, double strength, Rng& rng) {
  if (strength < 0 || strength > 1)
    throw std::invalid_argument("color_jitter: strength must lie in [0,1]");
  if (img.rank() != 3 || img.shape[0] != 3)
    throw std::invalid_argument("color_jitter: expected (3,S,S) image");
  double s[3];
  for (double& v : s) v = rng.uniform(1.0 - 0.8 * strength, 1.0 + 0.8 * strength);
  double theta = rng.uniform(-strength * M_PI / 2.0, strength * M_PI / 2.0);

  // Rotation about the gray axis (1,1,1)/sqrt(3) keeps luminance unchanged.
  const double kx = 1.0 / std::sqrt(3.0);
  double ct = std::cos(theta), st = std::sin(theta), oc = 1.0 - ct;
  double R[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) R[i][j] = oc * kx * kx + (i == j ? ct : 0.0);
  // cross-product part: [k]x with k = (kx,kx,kx)
  R[0][1] -= st * kx; R[0][2] += st * kx;
  R[1][0] += st * kx; R[1][2] -= st * kx;
  R[2][0] -= st * kx; R[2][1] += st * kx;

  int64_t plane = int64_t(img.shape[1]) * img.shape[2];
  Tensor out(img.shape);
  for (int64_t p = 0; p < plane; ++p) {
    double c[3];
    for (int ch = 0; ch < 3; ++ch) c[ch] = s[ch] * double(img[ch * plane + p]);
    for (int ch = 0; ch < 3; ++ch) {
      double v = R[ch][0] * c[0] + R[ch][1] * c[1] + R[ch][2] * c[2];
      out[ch * plane + p] = float(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

Tensor random_resized_crop(const Tensor& img, double strength, Rng& rng) {
  if (strength < 0 || strength > 1)
    throw std::invalid_argument("random_resized_crop: strength must lie in [0,1]");
  if (img.rank() != 3 || img.shape[0] != 3 || img.shape[1] != img.shape[2])
    throw std::invalid_argument("random_resized_crop: expected (3,S,S) image");
  int size = img.shape[1];
  double area = rng.uniform(1.0 - 0.92 * strength, 1.0);
  double aspect = rng.uniform(1.0 / (1.0 + strength), 1.0 + strength);
  int cw = std::clamp(int(std::lround(size * std::sqrt(area * aspect))), 1, size);
  int ch = std::clamp(int(std::lround(size * std::sqrt(area / aspect))), 1, size);
  int x0 = int(rng.uniform_int(uint64_t(size - cw + 1)));
  int y0 = int(rng.uniform_int(uint64_t(size - ch + 1)));

  int64_t plane = int64_t(size) * size;
  Tensor out(img.shape);
  for (int c = 0; c < 3; ++c) {
    const float* src = img.data.data() + c * plane;
    float* dst = out.data.data() + c * plane;
    for (int y = 0; y < size; ++y) {
      double v = (y + 0.5) * ch / size - 0.5;
      v = std::clamp(v, 0.0, double(ch - 1));
      int iy = std::min(int(v), ch - 2 >= 0 ? ch - 2 : 0);
      double fy = ch > 1 ? v - iy : 0.0;
      for (int x = 0; x < size; ++x) {
        double u = (x + 0.5) * cw / size - 0.5;
        u = std::clamp(u, 0.0, double(cw - 1));
        int ix = std::min(int(u), cw - 2 >= 0 ? cw - 2 : 0);
        double fx = cw > 1 ? u - ix : 0.0;
        auto at = [&](int yy, int xx) {
          return double(src[int64_t(y0 + yy) * size + (x0 + xx)]);
        };
        double top = at(iy, ix) + (at(iy, std::min(ix + 1, cw - 1)) - at(iy, ix)) * fx;
        int iy1 = std::min(iy + 1, ch - 1);
        double bot = at(iy1, ix) + (at(iy1, std::min(ix + 1, cw - 1)) - at(iy1, ix)) * fx;
        dst[int64_t(y) * size + x] = float(top + (bot - top) * fy);
      }
    }
  }
  return out;
}

Tensor apply_ops(const Tensor& img, const std::vector<AugOp>& ops, Rng& rng) {
  Tensor out = img;
  for (const AugOp& op : ops)
    out = op.kind == AugOp::Kind::jitter ? color_jitter(out, op.strength, rng)
                                         : random_resized_crop(out, op.strength, rng);
  return out;
}

}  // namespace mirig::pairing
