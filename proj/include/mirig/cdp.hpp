#pragma once
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mirig/tensor.hpp"

namespace mirig::cdp {

enum class Color : uint8_t { red, green, blue, white };
enum class Digit : uint8_t { two, three, four, five };
enum class Position : uint8_t { upper_left, upper_right, lower_left, lower_right };

struct Attributes {
  Color color;
  Digit digit;
  Position position;
  bool operator==(const Attributes&) const = default;
};

int digit_value(Digit d);  // 2..5
const char* color_name(Color c);
const char* position_name(Position p);

// Which attributes a task observes.  Class labels enumerate the cross product
// of the selected attributes in (color, digit, position) order.
struct TaskSpec {
  bool color = false, digit = false, position = false;

  static TaskSpec all() { return {true, true, true}; }
  static TaskSpec parse(const std::string& csv);  // "color,digit" or "all"
  int attr_count() const { return int(color) + int(digit) + int(position); }
  int num_classes() const { return 1 << (2 * attr_count()); }
  int class_id(const Attributes& a) const;
  std::string to_string() const;
  bool operator==(const TaskSpec&) const = default;
};

// Each selected attribute is uniform over four values, independently of the
// others, so the class entropy is exactly 2 bits per attribute.
double class_entropy_bits(const TaskSpec& task);

Attributes sample_attributes(uint64_t seed, int64_t index);
uint64_t background_seed(uint64_t seed, int64_t index);

// Rasterized glyph masks on the full canvas: interior (colored pixels) and a
// one-pixel outline ring around it.
struct GlyphMask {
  int size;
  std::vector<uint8_t> interior, ring;
};
GlyphMask glyph_mask(Digit digit, Position position, int size);
const std::array<uint8_t, 7>& digit_bitmap(Digit d);  // 5x7, MSB-left rows

// Procedural value-noise texture, (3,size,size) in [0,1].
Tensor value_noise(uint64_t seed, int size);

// (3,size,size) float image: (1-mix)*glyph_layer + mix*background.
// size must be one of 16/32/64, mix in [0,1].
Tensor render(const Attributes& attrs, uint64_t bg_seed, int size, double mix);

struct Sample {
  Tensor image;
  Attributes attrs;
  int64_t source_id;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<int> train_idx, eval_idx;  // deterministic 90/10 split
  int size = 0;
  double mix = 0.0;
  uint64_t seed = 0;

  int n() const { return int(samples.size()); }
};

Dataset make_dataset(int n, uint64_t seed, int size, double mix);

// Recovers the declared attributes from pixels alone.  Exact when mix=0 and
// stays exact for the default textures up to mix=0.5: thresholding any
// channel at 0.5 isolates the glyph interior because background contributes
// at most mix and glyph pixels carry at least 1-mix.
Attributes classify_by_pixel_rules(const Tensor& image);

// Packed binary + JSON manifest, bit-identical across round trips.
void write_packed(const Dataset& ds, const std::string& dir);
Dataset read_packed(const std::string& dir);

}  // namespace mirig::cdp
