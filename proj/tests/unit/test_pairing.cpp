#include <doctest.h>

#include <cmath>
#include <map>

#include "mirig/pairing.hpp"

using namespace mirig;
using namespace mirig::pairing;

namespace {

cdp::Dataset tiny_dataset(int n, uint64_t seed = 3, double mix = 0.3) {
  return cdp::make_dataset(n, seed, 16, mix);
}

}  // namespace

TEST_CASE("strength zero is the identity for both augmentations") {
  auto ds = tiny_dataset(2);
  const Tensor& img = ds.samples[0].image;
  Rng r1(5), r2(6);
  CHECK(color_jitter(img, 0.0, r1).data == img.data);
  CHECK(random_resized_crop(img, 0.0, r2).data == img.data);
}

TEST_CASE("augmented pixels stay in [0,1]") {
  auto ds = tiny_dataset(8);
  Rng rng(17);
  for (const auto& s : ds.samples) {
    Tensor j = color_jitter(s.image, 1.0, rng);
    Tensor c = random_resized_crop(s.image, 1.0, rng);
    for (float v : j.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    for (float v : c.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("hue rotation preserves luminance (pre-clamp)") {
  // Mid-range pixels cannot clamp at strength 0.4, so per-pixel luminance
  // after the jitter must match the channel-scaled luminance exactly.
  Tensor img({3, 16, 16});
  Rng fill(9);
  for (auto& v : img.data) v = float(fill.uniform(0.3, 0.6));

  Rng rng(31);
  Rng probe = rng;  // the op draws 3 scales then the angle, in this order
  double s[3];
  for (double& v : s) v = probe.uniform(1.0 - 0.8 * 0.4, 1.0 + 0.8 * 0.4);
  Tensor out = color_jitter(img, 0.4, rng);

  int64_t plane = 16 * 16;
  for (int64_t p = 0; p < plane; ++p) {
    double lum_out = 0, lum_scaled = 0;
    for (int ch = 0; ch < 3; ++ch) {
      lum_out += double(out[ch * plane + p]);
      lum_scaled += s[ch] * double(img[ch * plane + p]);
    }
    CHECK(lum_out == doctest::Approx(lum_scaled).epsilon(1e-5));
  }
}

TEST_CASE("augmentations are deterministic under a fixed rng") {
  auto ds = tiny_dataset(1);
  auto run = [&] {
    Rng rng(1234);
    Tensor a = color_jitter(ds.samples[0].image, 0.7, rng);
    Tensor b = random_resized_crop(a, 0.7, rng);
    return tensor_hash(b);
  };
  CHECK(run() == run());
}

TEST_CASE("same-class pairs agree on the task attributes and are distinct") {
  auto ds = tiny_dataset(256);
  Rng rng(8);
  auto task = cdp::TaskSpec::parse("color,position");
  PairBatch b = pair_same_class(ds, task, 32, rng);
  REQUIRE(b.k() == 32);
  CHECK(b.xs.shape == std::vector<int>{32, 3, 16, 16});
  for (int p = 0; p < 32; ++p) {
    auto [i, j] = b.sources[size_t(p)];
    CHECK(i != j);
    const auto& ai = ds.samples[size_t(i)].attrs;
    const auto& aj = ds.samples[size_t(j)].attrs;
    CHECK(task.class_id(ai) == task.class_id(aj));
    CHECK(b.labels[size_t(p)] == ai);
  }
}

TEST_CASE("pair sampling is uniform over valid ordered pairs (chi-square, alpha=0.001)") {
  // Hand-built subset: one class of size 2 (2 ordered pairs) and one of size
  // 3 (6 ordered pairs) -> 8 equally likely outcomes.
  auto ds = tiny_dataset(4096);
  auto task = cdp::TaskSpec::all();
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < ds.n(); ++i)
    by_class[task.class_id(ds.samples[size_t(i)].attrs)].push_back(i);
  auto it = by_class.begin();
  std::vector<int> subset = {it->second[0], it->second[1]};
  ++it;
  subset.insert(subset.end(), {it->second[0], it->second[1], it->second[2]});
  REQUIRE(subset.size() == 5);
  SameClassIndex index(ds, subset, task);
  REQUIRE(index.total_ordered_pairs() == 8);

  std::map<std::pair<int, int>, int> counts;
  Rng rng(77);
  const int draws = 20000;
  for (int t = 0; t < draws; ++t) ++counts[index.sample_pair(rng)];
  REQUIRE(counts.size() == 8);
  double chi2 = 0, e = draws / 8.0;
  for (auto& [pair, c] : counts) chi2 += (c - e) * (c - e) / e;
  CHECK(chi2 < 24.322);  // dof 7, alpha=0.001
}

TEST_CASE("singleton classes are excluded and counted; all-singleton fails") {
  auto ds = tiny_dataset(512);
  auto task = cdp::TaskSpec::all();
  // build a subset with exactly one singleton class and one pairable class
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < ds.n(); ++i)
    by_class[task.class_id(ds.samples[size_t(i)].attrs)].push_back(i);
  auto it = by_class.begin();
  std::vector<int> subset = {it->second[0]};  // singleton
  ++it;
  subset.push_back(it->second[0]);
  subset.push_back(it->second[1]);  // pairable

  SameClassIndex index(ds, subset, task);
  CHECK(index.excluded_classes() == 1);
  CHECK(index.usable_classes() == 1);
  CHECK(index.total_ordered_pairs() == 2);

  std::vector<int> singletons = {subset[0]};
  CHECK_THROWS_AS(SameClassIndex(ds, singletons, task), std::invalid_argument);
}

TEST_CASE("augmented pairing draws two independent views of one source") {
  auto ds = tiny_dataset(64);
  Rng rng(5);
  std::vector<AugOp> ops = {{AugOp::Kind::crop, 0.5}, {AugOp::Kind::jitter, 0.5}};
  PairBatch b = pair_augment(ds, ds.train_idx, ops, 16, rng);
  REQUIRE(b.k() == 16);
  int64_t stride = int64_t(3) * 16 * 16;
  int differing = 0;
  for (int p = 0; p < 16; ++p) {
    auto [i, j] = b.sources[size_t(p)];
    CHECK(i == j);
    CHECK(std::find(ds.train_idx.begin(), ds.train_idx.end(), i) != ds.train_idx.end());
    CHECK(b.labels[size_t(p)] == ds.samples[size_t(i)].attrs);
    bool same = std::equal(b.xs.data.begin() + p * stride, b.xs.data.begin() + (p + 1) * stride,
                           b.ys.data.begin() + p * stride);
    if (!same) ++differing;
  }
  CHECK(differing >= 14);  // independent draws collide only by chance
}

TEST_CASE("strategy descriptions are stable") {
  CHECK(Strategy::same_class(cdp::TaskSpec::all()).to_string() == "same_class(all)");
  CHECK(Strategy::same_class(cdp::TaskSpec::parse("digit")).to_string() == "same_class(digit)");
  auto s = Strategy::augmented({{AugOp::Kind::crop, 0.5}, {AugOp::Kind::jitter, 0.25}});
  CHECK(s.to_string() == "augment(crop:0.5,jitter:0.25)");
}

TEST_CASE("strength outside [0,1] is rejected") {
  auto ds = tiny_dataset(1);
  Rng rng(1);
  CHECK_THROWS_AS(color_jitter(ds.samples[0].image, 1.2, rng), std::invalid_argument);
  CHECK_THROWS_AS(random_resized_crop(ds.samples[0].image, -0.1, rng), std::invalid_argument);
}
