// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atmosconv/tensor.hpp"

namespace atmosconv {

/// Labeled image set. Images are [C,H,W] tensors; clean data lives in [0,1],
/// corrupted floats may leave that range.
struct Dataset {
  int C = 0, H = 0, W = 0;
  int num_classes = 10;
  std::vector<Tensor> images;
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
  /// Shape/label consistency; throws on violation.
  void validate() const;
};

/// Seeded 10-class procedural-shapes set (disk, ring, square, diamond, cross,
/// horizontal stripes, vertical stripes, triangle, quadrant checker, corner L)
/// on dark backgrounds, RGB [0,1], label = index mod 10. Image `index` uses
/// RNG stream `index` under `seed`, so any image is reproducible in
/// isolation. Geometry is jittered per image; light pixel noise keeps
/// contrast statistics spread out.
Dataset generate_synthetic(int n, std::uint64_t seed, int H = 20, int W = 20);

/// CIFAR-10 binary batches: 3073-byte records, 1 label byte then three
/// 1024-byte row-major channel planes; bytes scaled to [0,1] by /255.
Dataset read_cifar10(const std::vector<std::string>& bin_paths);
void write_cifar10(const std::string& path, const Dataset& data);

/// Directory of 8-bit PNGs plus labels.csv (filename,label per line; an
/// optional "filename,label" header is skipped). Images load as RGB [3,H,W].
Dataset read_png_dir(const std::string& dir);
void write_png_dir(const std::string& dir, const Dataset& data);

/// Exact float persistence: u32le n,C,H,W, then n i32le labels, then
/// n*C*H*W f64le image values in dataset order. Round-trips bit-exactly.
void save_raw(const std::string& path, const Dataset& data);
Dataset load_raw(const std::string& path);

/// Single PNG helpers. Reading always yields RGB [3,H,W] in [0,1] (gray and
/// palette files are expanded); writing accepts [1,H,W] or [3,H,W] and clamps
/// to [0,1] at the 8-bit encode.
Tensor read_png(const std::string& path);
void write_png(const std::string& path, const Tensor& image);

}  // namespace atmosconv
