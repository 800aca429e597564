#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "mirig/cdp.hpp"
#include "mirig/tensor.hpp"

using namespace mirig;
using namespace mirig::cdp;

TEST_CASE("task specs: parsing, class counts, entropy") {
  CHECK(TaskSpec::parse("all") == TaskSpec::all());
  auto cd = TaskSpec::parse("color,digit");
  CHECK(cd.color);
  CHECK(cd.digit);
  CHECK(!cd.position);
  CHECK(cd.num_classes() == 16);
  CHECK(class_entropy_bits(cd) == 4.0);
  CHECK(class_entropy_bits(TaskSpec::all()) == 6.0);
  CHECK(class_entropy_bits(TaskSpec::parse("position")) == 2.0);
  CHECK_THROWS_AS(TaskSpec::parse("colour"), std::invalid_argument);
  CHECK_THROWS_AS(class_entropy_bits(TaskSpec{}), std::invalid_argument);

  // class ids enumerate the selected cross product in (color,digit,position) order
  Attributes a{Color::blue, Digit::four, Position::lower_left};
  CHECK(TaskSpec::all().class_id(a) == (2 * 16 + 2 * 4 + 2));
  CHECK(cd.class_id(a) == (2 * 4 + 2));
  CHECK(TaskSpec::parse("position").class_id(a) == 2);
}

TEST_CASE("attribute sampling is deterministic and uniform (chi-square, alpha=0.001)") {
  const int n = 4096;
  int count_c[4] = {}, count_d[4] = {}, count_p[4] = {};
  for (int i = 0; i < n; ++i) {
    Attributes a = sample_attributes(1, i);
    CHECK(a == sample_attributes(1, i));
    ++count_c[int(a.color)];
    ++count_d[int(a.digit)];
    ++count_p[int(a.position)];
  }
  auto chi2 = [&](int* c) {
    double e = n / 4.0, s = 0;
    for (int k = 0; k < 4; ++k) s += (c[k] - e) * (c[k] - e) / e;
    return s;
  };
  // dof 3 critical value at alpha=0.001
  CHECK(chi2(count_c) < 16.266);
  CHECK(chi2(count_d) < 16.266);
  CHECK(chi2(count_p) < 16.266);
}

TEST_CASE("make_dataset(4096, seed=1) covers all 64 joint classes and splits 90/10") {
  Dataset ds = make_dataset(4096, 1, 16, 0.0);
  std::set<int> classes;
  for (const auto& s : ds.samples) classes.insert(TaskSpec::all().class_id(s.attrs));
  CHECK(classes.size() == 64);

  CHECK(ds.eval_idx.size() == 409);
  CHECK(ds.train_idx.size() == 4096 - 409);
  std::set<int> all(ds.train_idx.begin(), ds.train_idx.end());
  all.insert(ds.eval_idx.begin(), ds.eval_idx.end());
  CHECK(all.size() == 4096);

  Dataset ds2 = make_dataset(4096, 1, 16, 0.0);
  CHECK(ds.eval_idx == ds2.eval_idx);

  Dataset other_seed = make_dataset(4096, 2, 16, 0.0);
  CHECK(ds.eval_idx != other_seed.eval_idx);  // split is seed-derived
}

TEST_CASE("render at mix=0: exact glyph color inside, zero elsewhere, quadrant containment") {
  for (int pos = 0; pos < 4; ++pos) {
    Attributes a{Color::green, Digit::five, Position(pos)};
    Tensor img = render(a, 77, 32, 0.0);
    GlyphMask m = glyph_mask(a.digit, a.position, 32);
    int64_t plane = 32 * 32;
    int r0 = (pos / 2) * 16, c0 = (pos % 2) * 16;
    int interior_count = 0;
    for (int r = 0; r < 32; ++r)
      for (int c = 0; c < 32; ++c) {
        int64_t i = int64_t(r) * 32 + c;
        if (m.interior[size_t(i)]) {
          ++interior_count;
          CHECK(img[i] == 0.0f);
          CHECK(img[plane + i] == 1.0f);
          CHECK(img[2 * plane + i] == 0.0f);
          bool in_quad = r >= r0 && r < r0 + 16 && c >= c0 && c < c0 + 16;
          CHECK(in_quad);
        } else {
          CHECK(img[i] == 0.0f);
          CHECK(img[plane + i] == 0.0f);
          CHECK(img[2 * plane + i] == 0.0f);
        }
      }
    CHECK(interior_count > 10);
  }
}

TEST_CASE("render at mix=1 equals the background texture bitwise") {
  Attributes a{Color::red, Digit::two, Position::upper_right};
  Tensor img = render(a, 123, 16, 1.0);
  Tensor bg = value_noise(123, 16);
  CHECK(img.data == bg.data);
}

TEST_CASE("render validates size and mix") {
  Attributes a{Color::red, Digit::two, Position::upper_left};
  CHECK_THROWS_AS(render(a, 1, 24, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(render(a, 1, 32, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(render(a, 1, 32, 1.5), std::invalid_argument);
}

TEST_CASE("value noise is deterministic and stays in [0,1]") {
  Tensor a = value_noise(5, 32), b = value_noise(5, 32);
  CHECK(a.data == b.data);
  for (float v : a.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  Tensor c = value_noise(6, 32);
  CHECK(a.data != c.data);
}

TEST_CASE("pixel-rule oracle is exact at mix=0 for every attribute combo and size") {
  for (int size : {16, 32, 64})
    for (int cc = 0; cc < 4; ++cc)
      for (int dd = 0; dd < 4; ++dd)
        for (int pp = 0; pp < 4; ++pp) {
          Attributes a{Color(cc), Digit(dd), Position(pp)};
          Tensor img = render(a, uint64_t(size * 100 + cc * 16 + dd * 4 + pp), size, 0.0);
          CHECK(classify_by_pixel_rules(img) == a);
        }
}

TEST_CASE("pixel-rule oracle survives background mixing up to 0.5") {
  for (double mix : {0.3, 0.5}) {
    Dataset ds = make_dataset(128, 42, 32, mix);
    for (const auto& s : ds.samples) CHECK(classify_by_pixel_rules(s.image) == s.attrs);
  }
}

TEST_CASE("packed round trip is bit-identical") {
  namespace fs = std::filesystem;
  Dataset ds = make_dataset(40, 9, 16, 0.3);
  std::string dir = (fs::temp_directory_path() / "mirig_cdp_test").string();
  write_packed(ds, dir);
  Dataset back = read_packed(dir);
  REQUIRE(back.n() == ds.n());
  CHECK(back.size == ds.size);
  CHECK(back.seed == ds.seed);
  CHECK(back.mix == ds.mix);
  for (int i = 0; i < ds.n(); ++i) {
    CHECK(back.samples[size_t(i)].attrs == ds.samples[size_t(i)].attrs);
    CHECK(back.samples[size_t(i)].image.data == ds.samples[size_t(i)].image.data);
  }
  CHECK(back.train_idx == ds.train_idx);
  CHECK(back.eval_idx == ds.eval_idx);
  fs::remove_all(dir);
}

TEST_CASE("packed reader rejects corrupted inputs") {
  namespace fs = std::filesystem;
  Dataset ds = make_dataset(4, 9, 16, 0.0);
  std::string dir = (fs::temp_directory_path() / "mirig_cdp_corrupt").string();
  write_packed(ds, dir);
  auto path = fs::path(dir) / "data.cdp";

  auto load = [&] { return read_packed(dir); };
  std::ifstream in(path, std::ios::binary);
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  {  // bad magic
    std::string bad = raw;
    bad[0] = 'X';
    std::ofstream(path, std::ios::binary).write(bad.data(), std::streamsize(bad.size()));
    CHECK_THROWS_WITH_AS(load(), doctest::Contains("magic"), std::runtime_error);
  }
  {  // truncated payload
    std::string bad = raw.substr(0, raw.size() - 7);
    std::ofstream(path, std::ios::binary).write(bad.data(), std::streamsize(bad.size()));
    CHECK_THROWS_WITH_AS(load(), doctest::Contains("truncated"), std::runtime_error);
  }
  {  // attribute byte out of range
    std::string bad = raw;
    bad[10] = char(9);  // first sample's color byte
    std::ofstream(path, std::ios::binary).write(bad.data(), std::streamsize(bad.size()));
    CHECK_THROWS_WITH_AS(load(), doctest::Contains("attribute"), std::runtime_error);
  }
  fs::remove_all(dir);
}
