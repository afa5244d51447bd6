// Copyright 2026 The dualseg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <fstream>
#include <set>

#include "doctest.h"
#include "dseg/data.hpp"
#include "dseg/image_io.hpp"
#include "oracles.hpp"

using namespace dseg;

namespace {

Image8 gray(int64_t w, int64_t h, uint8_t v) { return Image8{w, h, 1, std::vector<uint8_t>(static_cast<std::size_t>(w * h), v)}; }

Image8 rgb(int64_t w, int64_t h, Rng& rng) {
  Image8 img{w, h, 3, std::vector<uint8_t>(static_cast<std::size_t>(3 * w * h))};
  for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.below(256));
  return img;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("png round trip") {
  oracle::TempDir dir("png");
  Rng rng(31);
  const Image8 a = rgb(7, 5, rng);
  write_png(dir.path() / "a.png", a);
  const Image8 back = read_png(dir.path() / "a.png", 3);
  CHECK(back.width == 7);
  CHECK(back.height == 5);
  CHECK(back.pixels == a.pixels);
  CHECK(read_png_size(dir.path() / "a.png") == std::pair<int64_t, int64_t>{7, 5});
  CHECK(encode_png(a) == slurp(dir.path() / "a.png"));

  Image8 g = gray(3, 4, 0);
  g.at(1, 2) = 200;
  write_png(dir.path() / "g.png", g);
  const Image8 g3 = read_png(dir.path() / "g.png", 3);
  CHECK(g3.at(1, 2, 0) == 200);
  CHECK(g3.at(1, 2, 2) == 200);

  std::ofstream(dir.path() / "bad.png") << "not a png";
  CHECK_THROWS_AS(read_png(dir.path() / "bad.png", 3), ImageError);
  CHECK_THROWS_AS(read_png(dir.path() / "missing.png", 3), ImageError);
  CHECK_THROWS_AS(read_png(dir.path() / "a.png", 2), ImageError);
}

TEST_CASE("mask pixels threshold at 128") {
  Rng rng(32);
  Image8 m = gray(2, 1, 127);
  m.at(0, 1) = 128;
  const SegSample s = sample_from_images("x", rgb(2, 1, rng), m);
  CHECK(s.mask == std::vector<uint8_t>{0, 1});
  CHECK_THROWS_AS(sample_from_images("x", rgb(2, 2, rng), m), DataError);
}

TEST_CASE("image conversion round trip") {
  Rng rng(33);
  const Image8 a = rgb(4, 3, rng);
  const SegSample s = sample_from_images("x", a, gray(4, 3, 255));
  CHECK(image_to_rgb8(s).pixels == a.pixels);
  CHECK(s.image[1] == static_cast<float>(a.pixels[3]) / 255.0f);  // planar layout
  CHECK(mask_to_gray8(s).pixels == std::vector<uint8_t>(12, 255));
}

TEST_CASE("resize") {
  SegSample s{"r", 4, 4, std::vector<float>(48), std::vector<uint8_t>(16, 0)};
  for (int64_t i = 0; i < 48; ++i) s.image[static_cast<std::size_t>(i)] = static_cast<float>(i % 16) / 16.0f;
  s.mask[5] = 1;
  CHECK(resize(s, 4, 4).image == s.image);
  const SegSample half = resize(s, 2, 2);
  // Half-pixel bilinear 2x reduction averages each 2x2 block.
  CHECK(half.image[0] == doctest::Approx((0 + 1 + 4 + 5) / 64.0));
  CHECK(half.image[3] == doctest::Approx((10 + 11 + 14 + 15) / 64.0));
  const SegSample big = resize(s, 9, 7);
  CHECK(big.width == 9);
  CHECK(big.height == 7);
  for (uint8_t v : big.mask) CHECK(v <= 1);
  for (float v : big.image) CHECK((v >= 0.0f && v <= 1.0f));
  CHECK_THROWS_AS(resize(s, 0, 3), DataError);
}

TEST_CASE("batches") {
  SegSample a{"a", 2, 3, std::vector<float>(18, 0.25f), std::vector<uint8_t>(6, 1)};
  SegSample b{"b", 2, 3, std::vector<float>(18, 0.75f), std::vector<uint8_t>(6, 0)};
  const SegSample* both[] = {&a, &b};
  const auto [x, y] = make_batch(both);
  CHECK(x.shape() == Shape{2, 3, 2, 3});
  CHECK(y.shape() == Shape{2, 1, 2, 3});
  CHECK(x.at(1, 2, 1, 2) == 0.75f);
  CHECK(y.at(0, 0, 0, 0) == 1.0f);
  CHECK(y.at(1, 0, 0, 0) == 0.0f);
  SegSample c{"c", 3, 3, std::vector<float>(27), std::vector<uint8_t>(9)};
  const SegSample* mixed[] = {&a, &c};
  CHECK_THROWS_AS(make_batch(mixed), DataError);
  CHECK_THROWS_AS(make_batch({}), DataError);
}

TEST_CASE("synthetic generator") {
  SynthConfig cfg;
  const auto [img, mask] = generate_synthetic(7, 3, cfg);
  CHECK(img.width == 80);
  CHECK(img.height == 64);
  CHECK(img.channels == 3);
  CHECK(mask.channels == 1);
  const auto [img2, mask2] = generate_synthetic(7, 3, cfg);
  CHECK(img.pixels == img2.pixels);
  CHECK(mask.pixels == mask2.pixels);
  CHECK(generate_synthetic(8, 3, cfg).first.pixels != img.pixels);
  CHECK(generate_synthetic(7, 4, cfg).first.pixels != img.pixels);

  double total = 0;
  for (int64_t i = 0; i < 40; ++i) {
    const SegSample s = generate_synthetic_sample(11, i, cfg);
    for (uint8_t v : mask_to_gray8(s).pixels) REQUIRE((v == 0 || v == 255));
    const double fg = static_cast<double>(s.foreground()) / static_cast<double>(s.plane());
    CHECK(fg > 0.0);
    CHECK(fg < 0.6);
    total += fg;
  }
  CHECK(total / 40 > 0.02);
  CHECK(synthetic_id(12) == "synth_00012");
}

TEST_CASE("dataset scan, split and manifest") {
  oracle::TempDir dir("ds");
  gen_synthetic(dir.path(), 100, SynthConfig{}, 5);
  CHECK_THROWS_AS(gen_synthetic(dir.path() / "x", 0, SynthConfig{}, 5), DataError);
  // Orphans on both sides and one size mismatch.
  Rng rng(34);
  write_png(dir.path() / "images" / "lonely.png", rgb(4, 4, rng));
  write_png(dir.path() / "masks" / "ghost.png", gray(4, 4, 0));
  write_png(dir.path() / "images" / "odd.png", rgb(4, 4, rng));
  write_png(dir.path() / "masks" / "odd.png", gray(5, 4, 0));

  const DatasetManifest m = load_dataset(dir.path());
  CHECK(m.ids.size() == 101);
  CHECK(std::is_sorted(m.ids.begin(), m.ids.end()));
  CHECK(m.warnings.size() == 2);
  CHECK(m.size_mismatches == std::vector<std::string>{"odd"});

  const DatasetManifest s = split(m, SplitFractions{}, 9);
  CHECK(s.ids_in(Split::kTrain).size() == 82);  // round(81.81)
  CHECK(s.ids_in(Split::kVal).size() == 9);
  CHECK(s.ids_in(Split::kTest).size() == 10);
  std::set<std::string> seen;
  for (Split sp : {Split::kTrain, Split::kVal, Split::kTest})
    for (const auto& id : s.ids_in(sp)) CHECK(seen.insert(id).second);
  CHECK(seen.size() == 101);
  CHECK(split(m, SplitFractions{}, 9).splits == s.splits);
  CHECK(split(m, SplitFractions{}, 10).splits != s.splits);
  CHECK_THROWS_AS(split(m, SplitFractions{0.5, 0.5, 0.5}, 1), DataError);
  CHECK_THROWS_AS(split(m, SplitFractions{1.2, -0.2, 0.0}, 1), DataError);

  const DatasetManifest back = manifest_from_text(dir.path(), manifest_to_text(s));
  CHECK(back.ids == s.ids);
  CHECK(back.splits == s.splits);
  CHECK(back.seed == 9);
  CHECK(back.fractions.train == 0.81);
  CHECK(back.fractions.test == 0.10);
  CHECK_THROWS_AS(manifest_from_text(dir.path(), "a train\n"), DataError);
  CHECK_THROWS_AS(manifest_from_text(dir.path(), "a\tbogus\n"), DataError);

  // Put the mismatched pair in train and check it is reported, not loaded.
  DatasetManifest forced = s;
  for (std::size_t i = 0; i < forced.ids.size(); ++i)
    if (forced.ids[i] == "odd") forced.splits[i] = Split::kTrain;
  std::vector<std::pair<std::string, std::string>> skipped;
  const auto train = load_split(forced, Split::kTrain, 40, 32, &skipped);
  REQUIRE(skipped.size() == 1);
  CHECK(skipped[0].first == "odd");
  CHECK(train.size() == forced.ids_in(Split::kTrain).size() - 1);
  for (const SegSample& t : train) {
    CHECK(t.width == 40);
    CHECK(t.height == 32);
  }
  CHECK_THROWS_AS(load_split(forced, Split::kTrain, 40, 32, nullptr), DataError);
}

TEST_CASE("empty or missing dataset roots are errors") {
  oracle::TempDir dir("empty");
  CHECK_THROWS_AS(load_dataset(dir.path() / "nope"), DataError);
  std::filesystem::create_directories(dir.path() / "images");
  std::filesystem::create_directories(dir.path() / "masks");
  CHECK_THROWS_AS(load_dataset(dir.path()), DataError);
}

TEST_CASE("split names") {
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) CHECK(parse_split(to_string(s)) == s);
  CHECK_THROWS_AS(parse_split("validation"), DataError);
}
