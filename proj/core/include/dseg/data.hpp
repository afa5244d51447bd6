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


#ifndef DSEG_DATA_HPP_
#define DSEG_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dseg/image_io.hpp"
#include "dseg/tensor.hpp"

namespace dseg {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One image/mask pair. `image` is planar RGB (3 x h x w) in [0, 1];
/// `mask` is h x w in {0, 1}.
struct SegSample {
  std::string id;
  int64_t height = 0;
  int64_t width = 0;
  std::vector<float> image;
  std::vector<uint8_t> mask;

  int64_t plane() const { return height * width; }
  int64_t foreground() const;
};

/// Stacks samples into an (n, 3, h, w) image batch and an (n, 1, h, w) target.
/// All samples must share the same size.
std::pair<Tensorf, Tensorf> make_batch(std::span<const SegSample* const> samples);
Tensorf image_tensor(const SegSample& s);  // (1, 3, h, w)

SegSample sample_from_images(std::string id, const Image8& rgb, const Image8& mask);
Image8 image_to_rgb8(const SegSample& s);
Image8 mask_to_gray8(const SegSample& s);  // {0, 255}

/// Bilinear (half-pixel centres) for the image, nearest for the mask.
SegSample resize(const SegSample& s, int64_t width, int64_t height);

enum class Split { kTrain, kVal, kTest, kNone };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct SplitFractions {
  double train = 0.81;
  double val = 0.09;
  double test = 0.10;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::string> ids;         // sorted
  std::vector<Split> splits;            // parallel to ids; kNone before split()
  uint64_t seed = 0;
  SplitFractions fractions;
  std::vector<std::string> warnings;    // unmatched files
  std::vector<std::string> size_mismatches;

  std::vector<std::string> ids_in(Split s) const;
  std::filesystem::path image_path(const std::string& id) const;
  std::filesystem::path mask_path(const std::string& id) const;
};

/// Scans root/images and root/masks for PNG files with matching basenames.
DatasetManifest load_dataset(const std::filesystem::path& root);

/// Seeded permutation of the sorted ids followed by contiguous assignment:
/// the first round(train*n) go to train, the next round(val*n) to val, the
/// rest to test.
DatasetManifest split(const DatasetManifest& m, SplitFractions fractions, uint64_t seed);

/// `id<TAB>split` lines preceded by `# seed=` and `# fractions=` comments.
std::string manifest_to_text(const DatasetManifest& m);
DatasetManifest manifest_from_text(const std::filesystem::path& root, const std::string& text);

/// Reads one pair. The mask is thresholded at 128. Throws DataError when the
/// two files differ in size.
SegSample load_sample(const DatasetManifest& m, const std::string& id);

/// Loads the ids of one split, resizing to (width, height) when both are
/// positive. Pairs that fail to load are reported through `skipped`.
std::vector<SegSample> load_split(const DatasetManifest& m, Split s, int64_t width, int64_t height,
                                  std::vector<std::pair<std::string, std::string>>* skipped);

struct SynthConfig {
  int64_t width = 80;
  int64_t height = 64;
  int min_lesions = 1;
  int max_lesions = 3;
  double min_diameter = 0.08;  // fraction of image width
  double max_diameter = 0.35;
  int max_highlights = 5;
  double noise_sigma = 0.03;
};

/// Synthetic colonoscopy-like frame, fully determined by (seed, index).
/// Returns the 8-bit RGB image and its {0, 255} mask.
std::pair<Image8, Image8> generate_synthetic(uint64_t seed, int64_t index, const SynthConfig& cfg);
SegSample generate_synthetic_sample(uint64_t seed, int64_t index, const SynthConfig& cfg);
std::string synthetic_id(int64_t index);

/// Writes n pairs to root/images and root/masks.
void gen_synthetic(const std::filesystem::path& root, int64_t n, const SynthConfig& cfg, uint64_t seed);

}  // namespace dseg

#endif  // DSEG_DATA_HPP_
