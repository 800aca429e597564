#include "mirig/cdp.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "mirig/rng.hpp"

namespace mirig::cdp {

namespace fs = std::filesystem;
using nlohmann::json;

int digit_value(Digit d) { return 2 + int(d); }

const char* color_name(Color c) {
  switch (c) {
    case Color::red: return "red";
    case Color::green: return "green";
    case Color::blue: return "blue";
    case Color::white: return "white";
  }
  return "?";
}

const char* position_name(Position p) {
  switch (p) {
    case Position::upper_left: return "UL";
    case Position::upper_right: return "UR";
    case Position::lower_left: return "LL";
    case Position::lower_right: return "LR";
  }
  return "?";
}

TaskSpec TaskSpec::parse(const std::string& csv) {
  if (csv == "all") return all();
  TaskSpec t;
  size_t pos = 0;
  while (pos <= csv.size()) {
    size_t comma = csv.find(',', pos);
    std::string tok = csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (tok == "color") t.color = true;
    else if (tok == "digit") t.digit = true;
    else if (tok == "position") t.position = true;
    else throw std::invalid_argument("unknown attribute in task spec: '" + tok + "'");
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return t;
}

int TaskSpec::class_id(const Attributes& a) const {
  int id = 0;
  if (color) id = id * 4 + int(a.color);
  if (digit) id = id * 4 + int(a.digit);
  if (position) id = id * 4 + int(a.position);
  return id;
}

std::string TaskSpec::to_string() const {
  if (color && digit && position) return "all";
  std::string out;
  auto app = [&](const char* s) {
    if (!out.empty()) out += ",";
    out += s;
  };
  if (color) app("color");
  if (digit) app("digit");
  if (position) app("position");
  return out.empty() ? "none" : out;
}

double class_entropy_bits(const TaskSpec& task) {
  if (task.attr_count() == 0)
    throw std::invalid_argument("class_entropy_bits: task selects no attributes");
  return 2.0 * task.attr_count();
}

Attributes sample_attributes(uint64_t seed, int64_t index) {
  Rng rng = Rng(seed).fork(uint64_t(index)).fork(0);
  Attributes a;
  a.color = Color(rng.uniform_int(4));
  a.digit = Digit(rng.uniform_int(4));
  a.position = Position(rng.uniform_int(4));
  return a;
}

uint64_t background_seed(uint64_t seed, int64_t index) {
  return Rng(seed).fork(uint64_t(index)).fork(1).next_u64();
}

const std::array<uint8_t, 7>& digit_bitmap(Digit d) {
  static const std::array<std::array<uint8_t, 7>, 4> bitmaps = {{
      // 2
      {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111},
      // 3
      {0b01110, 0b10001, 0b00001, 0b00110, 0b00001, 0b10001, 0b01110},
      // 4
      {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010},
      // 5
      {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110},
  }};
  return bitmaps[size_t(d)];
}

GlyphMask glyph_mask(Digit digit, Position position, int size) {
  GlyphMask m;
  m.size = size;
  m.interior.assign(size_t(size) * size, 0);
  m.ring.assign(size_t(size) * size, 0);

  int q = size / 2;
  int th = int(std::lround(0.7 * q));            // glyph height: 70% of the quadrant
  int tw = int(std::lround(th * 5.0 / 7.0));     // keep the 5:7 cell aspect
  th = std::max(th, 1);
  tw = std::max(tw, 1);
  int row0 = (int(position) / 2) * q + (q - th) / 2;
  int col0 = (int(position) % 2) * q + (q - tw) / 2;

  const auto& bmp = digit_bitmap(digit);
  for (int r = 0; r < th; ++r) {
    int br = std::min(6, int((r + 0.5) * 7.0 / th));
    for (int c = 0; c < tw; ++c) {
      int bc = std::min(4, int((c + 0.5) * 5.0 / tw));
      if (bmp[size_t(br)] >> (4 - bc) & 1)
        m.interior[size_t(row0 + r) * size + (col0 + c)] = 1;
    }
  }
  // one-pixel ring: 8-neighbourhood dilation minus the interior
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      if (m.interior[size_t(r) * size + c]) continue;
      bool near = false;
      for (int dr = -1; dr <= 1 && !near; ++dr)
        for (int dc = -1; dc <= 1 && !near; ++dc) {
          int rr = r + dr, cc = c + dc;
          if (rr >= 0 && rr < size && cc >= 0 && cc < size &&
              m.interior[size_t(rr) * size + cc])
            near = true;
        }
      if (near) m.ring[size_t(r) * size + c] = 1;
    }
  return m;
}

Tensor value_noise(uint64_t seed, int size) {
  Tensor out({3, size, size});
  for (int ch = 0; ch < 3; ++ch) {
    double amp_sum = 0.0;
    std::vector<double> acc(size_t(size) * size, 0.0);
    for (int oct = 0; oct < 4; ++oct) {
      int cells = 4 << oct;
      if (cells > size) break;
      double amp = std::pow(0.5, oct);
      amp_sum += amp;
      for (int y = 0; y < size; ++y) {
        double v = double(y) * cells / size;
        int iy = std::min(cells - 1, int(v));
        double fy = v - iy;
        fy = fy * fy * (3.0 - 2.0 * fy);
        for (int x = 0; x < size; ++x) {
          double u = double(x) * cells / size;
          int ix = std::min(cells - 1, int(u));
          double fx = u - ix;
          fx = fx * fx * (3.0 - 2.0 * fx);
          double v00 = hash01(seed, uint64_t(ch * 8 + oct), uint64_t(ix), uint64_t(iy));
          double v10 = hash01(seed, uint64_t(ch * 8 + oct), uint64_t(ix + 1), uint64_t(iy));
          double v01 = hash01(seed, uint64_t(ch * 8 + oct), uint64_t(ix), uint64_t(iy + 1));
          double v11 = hash01(seed, uint64_t(ch * 8 + oct), uint64_t(ix + 1), uint64_t(iy + 1));
          double top = v00 + (v10 - v00) * fx;
          double bot = v01 + (v11 - v01) * fx;
          acc[size_t(y) * size + x] += amp * (top + (bot - top) * fy);
        }
      }
    }
    for (int64_t i = 0; i < int64_t(size) * size; ++i)
      out[int64_t(ch) * size * size + i] = float(acc[size_t(i)] / amp_sum);
  }
  return out;
}

static void check_size(int size) {
  if (size != 16 && size != 32 && size != 64)
    throw std::invalid_argument("canvas size must be 16, 32 or 64; got " + std::to_string(size));
}

Tensor render(const Attributes& attrs, uint64_t bg_seed, int size, double mix) {
  check_size(size);
  if (!(mix >= 0.0 && mix <= 1.0))
    throw std::invalid_argument("mix must lie in [0,1]; got " + std::to_string(mix));

  static const float palette[4][3] = {
      {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}};
  const float* rgb = palette[size_t(attrs.color)];

  GlyphMask m = glyph_mask(attrs.digit, attrs.position, size);
  Tensor bg = value_noise(bg_seed, size);
  Tensor img({3, size, size});
  int64_t plane = int64_t(size) * size;
  float fm = float(mix), fl = float(1.0 - mix);
  for (int ch = 0; ch < 3; ++ch)
    for (int64_t i = 0; i < plane; ++i) {
      float layer = m.interior[size_t(i)] ? rgb[ch] : 0.0f;  // ring stays dark in the layer
      img[ch * plane + i] = fl * layer + fm * bg[ch * plane + i];
    }
  return img;
}

// Split: rank sample indices by a per-index hash, lowest 10% become eval.
static void assign_split(Dataset& ds) {
  int n = ds.n();
  std::vector<int> order(size_t(n), 0);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> key(size_t(n), 0.0);
  for (int i = 0; i < n; ++i) key[size_t(i)] = hash01(ds.seed, 0x5917, uint64_t(i), 2);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return key[size_t(a)] < key[size_t(b)]; });
  int n_eval = n / 10;
  ds.eval_idx.assign(order.begin(), order.begin() + n_eval);
  ds.train_idx.assign(order.begin() + n_eval, order.end());
  std::sort(ds.eval_idx.begin(), ds.eval_idx.end());
  std::sort(ds.train_idx.begin(), ds.train_idx.end());
}

Dataset make_dataset(int n, uint64_t seed, int size, double mix) {
  if (n < 1) throw std::invalid_argument("make_dataset: n must be positive");
  check_size(size);
  Dataset ds;
  ds.size = size;
  ds.mix = mix;
  ds.seed = seed;
  ds.samples.reserve(size_t(n));
  for (int64_t i = 0; i < n; ++i) {
    Attributes a = sample_attributes(seed, i);
    ds.samples.push_back({render(a, background_seed(seed, i), size, mix), a, i});
  }
  assign_split(ds);
  return ds;
}

Attributes classify_by_pixel_rules(const Tensor& image) {
  if (image.rank() != 3 || image.shape[0] != 3 || image.shape[1] != image.shape[2])
    throw std::invalid_argument("classify_by_pixel_rules: expected (3,S,S) image");
  int size = image.shape[1];
  check_size(size);
  int64_t plane = int64_t(size) * size;
  int q = size / 2;

  std::vector<uint8_t> bright(size_t(plane), 0);
  int quad_count[4] = {0, 0, 0, 0};
  double mean_c[3] = {0, 0, 0};
  int n_bright = 0;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      int64_t i = int64_t(r) * size + c;
      float mx = std::max({image[i], image[plane + i], image[2 * plane + i]});
      if (mx > 0.5f) {
        bright[size_t(i)] = 1;
        ++n_bright;
        ++quad_count[(r / q) * 2 + (c / q)];
        for (int ch = 0; ch < 3; ++ch) mean_c[ch] += image[ch * plane + i];
      }
    }
  if (n_bright == 0)
    throw std::invalid_argument("classify_by_pixel_rules: no glyph pixels above threshold");

  int best_q = 0;
  for (int k = 1; k < 4; ++k)
    if (quad_count[k] > quad_count[best_q]) best_q = k;
  Position pos = Position(best_q);

  for (double& v : mean_c) v /= n_bright;
  Color col;
  if (mean_c[0] > 0.5 && mean_c[1] > 0.5 && mean_c[2] > 0.5) {
    col = Color::white;
  } else {
    int best = 0;
    for (int ch = 1; ch < 3; ++ch)
      if (mean_c[ch] > mean_c[best]) best = ch;
    col = Color(best);
  }

  // Template match within the detected quadrant against each digit mask.
  int r0 = (best_q / 2) * q, c0 = (best_q % 2) * q;
  int best_d = 0, best_score = -1;
  for (int d = 0; d < 4; ++d) {
    GlyphMask m = glyph_mask(Digit(d), pos, size);
    int score = 0;
    for (int r = r0; r < r0 + q; ++r)
      for (int c = c0; c < c0 + q; ++c) {
        int64_t i = int64_t(r) * size + c;
        if (bright[size_t(i)] == m.interior[size_t(i)]) ++score;
      }
    if (score > best_score) {
      best_score = score;
      best_d = d;
    }
  }
  return {col, Digit(best_d), pos};
}

// --- packed binary io ---------------------------------------------------

namespace {

void put_u16(std::string& out, uint16_t v) {
  out.push_back(char(v & 0xFF));
  out.push_back(char(v >> 8));
}
void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}
void put_f32(std::string& out, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(out, u);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  explicit Reader(const std::string& b) : buf(b) {}
  void need(size_t n, const char* what) {
    if (pos + n > buf.size())
      throw std::runtime_error(std::string("packed dataset truncated while reading ") + what);
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return uint8_t(buf[pos++]);
  }
  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = uint16_t(uint8_t(buf[pos])) | uint16_t(uint8_t(buf[pos + 1])) << 8;
    pos += 2;
    return v;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos + size_t(i)])) << (8 * i);
    pos += 4;
    return v;
  }
  float f32(const char* what) {
    uint32_t u = u32(what);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

}  // namespace

void write_packed(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  std::string out;
  out.reserve(16 + ds.samples.size() * (3 + size_t(ds.size) * ds.size * 12));
  out += "CDP1";
  put_u32(out, uint32_t(ds.samples.size()));
  put_u16(out, uint16_t(ds.size));
  for (const auto& s : ds.samples) {
    out.push_back(char(uint8_t(s.attrs.color)));
    out.push_back(char(uint8_t(s.attrs.digit)));
    out.push_back(char(uint8_t(s.attrs.position)));
    for (float v : s.image.data) put_f32(out, v);
  }
  std::ofstream f(fs::path(dir) / "data.cdp", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + dir + "/data.cdp");
  f.write(out.data(), std::streamsize(out.size()));

  json manifest = {{"format", "CDP1"}, {"version", 1},     {"n", ds.samples.size()},
                   {"seed", ds.seed},  {"size", ds.size},  {"mix", ds.mix}};
  std::ofstream mf(fs::path(dir) / "manifest.json");
  mf << manifest.dump(2) << "\n";
}

Dataset read_packed(const std::string& dir) {
  json manifest = json::parse(slurp(fs::path(dir) / "manifest.json"));
  std::string raw = slurp(fs::path(dir) / "data.cdp");
  Reader r(raw);
  r.need(4, "magic");
  if (raw.compare(0, 4, "CDP1") != 0)
    throw std::runtime_error("packed dataset has unknown magic (expected CDP1)");
  r.pos = 4;
  uint32_t count = r.u32("count");
  uint16_t size = r.u16("size");
  check_size(size);

  Dataset ds;
  ds.size = size;
  ds.mix = manifest.value("mix", 0.0);
  ds.seed = manifest.value("seed", uint64_t(0));
  int64_t plane = int64_t(size) * size * 3;
  ds.samples.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    Sample s;
    uint8_t cv = r.u8("color"), dv = r.u8("digit"), pv = r.u8("position");
    if (cv > 3 || dv > 3 || pv > 3)
      throw std::runtime_error("attribute byte out of range in sample " + std::to_string(i));
    s.attrs = {Color(cv), Digit(dv), Position(pv)};
    s.image = Tensor({3, size, size});
    for (int64_t j = 0; j < plane; ++j) s.image[j] = r.f32("pixels");
    s.source_id = i;
    ds.samples.push_back(std::move(s));
  }
  if (r.pos != raw.size())
    throw std::runtime_error("packed dataset has trailing bytes");
  if (manifest.contains("n") && uint64_t(manifest["n"]) != count)
    throw std::runtime_error("manifest sample count disagrees with payload");
  assign_split(ds);
  return ds;
}

}  // namespace mirig::cdp
