#pragma once
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mirig/cdp.hpp"
#include "mirig/rng.hpp"
#include "mirig/tensor.hpp"

namespace mirig::pairing {

// Augmentation operators.  strength in [0,1] scales every perturbation range;
// strength 0 is the identity for both.
struct ColorJitter {
  double strength = 0.5;
};
struct RandomResizedCrop {
  double strength = 0.5;
};

struct AugOp {
  enum class Kind { jitter, crop } kind;
  double strength;
};

struct Strategy {
  enum class Kind { same_class, augmented } kind = Kind::same_class;
  cdp::TaskSpec task = cdp::TaskSpec::all();  // same_class only
  std::vector<AugOp> ops;                     // augmented only
  std::string to_string() const;

  static Strategy same_class(cdp::TaskSpec t) { return {Kind::same_class, t, {}}; }
  static Strategy augmented(std::vector<AugOp> ops) {
    return {Kind::augmented, cdp::TaskSpec::all(), std::move(ops)};
  }
};

// Uniform sampler over ordered distinct same-class pairs within an index
// subset.  Classes with fewer than two members cannot be paired; they are
// excluded and counted.
class SameClassIndex {
 public:
  SameClassIndex(const cdp::Dataset& ds, std::span<const int> subset, const cdp::TaskSpec& task);

  int64_t total_ordered_pairs() const { return total_; }
  int excluded_classes() const { return excluded_; }
  int usable_classes() const { return int(groups_.size()); }

  // dataset indices (i, j), i != j, same class, uniform over all valid pairs
  std::pair<int, int> sample_pair(Rng& rng) const;

 private:
  std::vector<std::vector<int>> groups_;
  std::vector<int64_t> cum_;  // cumulative ordered-pair counts
  int64_t total_ = 0;
  int excluded_ = 0;
};

struct PairBatch {
  Tensor xs, ys;                             // (K, ...) stacked views
  std::vector<cdp::Attributes> labels;       // per pair, from the x-side source
  std::vector<std::pair<int, int>> sources;  // dataset indices behind each view
  int k() const { return xs.shape.empty() ? 0 : xs.shape[0]; }
};

// K same-class image pairs drawn over the whole dataset (spec-level helper;
// the trainer passes an explicit subset).
PairBatch pair_same_class(const cdp::Dataset& ds, const cdp::TaskSpec& task, int k, Rng& rng);
PairBatch pair_same_class_subset(const cdp::Dataset& ds, std::span<const int> subset,
                                 const cdp::TaskSpec& task, int k, Rng& rng);

// K augmented-view pairs; sources drawn uniformly from subset.
PairBatch pair_augment(const cdp::Dataset& ds, std::span<const int> subset,
                       const std::vector<AugOp>& ops, int k, Rng& rng);

PairBatch make_pairs(const cdp::Dataset& ds, std::span<const int> subset, const Strategy& strat,
                     int k, Rng& rng);

// Single-image operators (exposed for tests and the estimation pools).
Tensor color_jitter(const Tensor& img, double strength, Rng& rng);
Tensor random_resized_crop(const Tensor& img, double strength, Rng& rng);
Tensor apply_ops(const Tensor& img, const std::vector<AugOp>& ops, Rng& rng);

}  // namespace mirig::pairing
