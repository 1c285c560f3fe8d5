// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "atmosconv/tensor.hpp"

namespace atmosconv {

/// Per-pixel affine corruption field: x -> gain * x + bias, broadcast across
/// channels. Regenerating from (variant, seed, index) reproduces the field
/// bit-exactly; `params` records the sampled scalars in draw order so a
/// manifest can rebuild the field without the generator's RNG.
struct AtfField {
  Tensor gain;  // [H, W]
  Tensor bias;  // [H, W]
  std::vector<std::pair<std::string, double>> params;
  std::uint64_t seed = 0;
};

/// Scalars of the shifted-bias variant; application is
/// clamp(alpha * x + beta + gamma, 0, 1).
struct ShiftParams {
  double alpha = 1.0;
  double beta = 0.0;
  double gamma = 0.0;
};

enum class Variant { C, L, B, S };

Variant variant_from_string(const std::string& s);
std::string variant_name(Variant v);

/// gain * x + bias per pixel. Image is [C,H,W] or [H,W]; field extents must
/// match the image's. No clipping here: the affine structure is the point.
Tensor atf_apply(const Tensor& image, const AtfField& field);

/// Shifted-bias application with saturation to [0,1].
Tensor shift_apply(const Tensor& image, const ShiftParams& p);

// Generators. Image `index` selects the RNG stream under `seed`, so any
// image's field can be regenerated without touching the others. `severity`
// widens the sampling intervals linearly about their neutral points; severity
// 0 collapses every interval to the identity corruption.

/// Spatially constant gain/bias: alpha ~ U(1 - 0.3s, 1 + 0.3s),
/// beta ~ U(-0.3s, 0.3s). Draw order: alpha, beta.
AtfField gen_constant_field(std::uint64_t seed, std::uint64_t index, int H, int W,
                            double severity = 1.0);

/// Linear gain/bias ramps sharing one random direction. Endpoints
/// alpha0, alpha1 ~ U(1 - 0.5s, 1 + 0.5s), beta0, beta1 ~ U(-0.5s, 0.5s),
/// theta ~ U[0, 2pi). Draw order: alpha0, alpha1, beta0, beta1, theta. The
/// interpolation parameter is the pixel's projection onto the direction,
/// mapped so the minimum projection is 0 and the maximum is 1.
AtfField gen_linear_field(std::uint64_t seed, std::uint64_t index, int H, int W,
                          double severity = 1.0);

/// Radial blob: center uniform over the pixel grid, radius 0.8 * max(H, W),
/// weight(rho) = clamp(1 - rho^3, 0, 1); gain = 1 + (alpha - 1) * weight,
/// bias = beta * weight with alpha ~ U(1 - 0.5s, 1 + 0.5s),
/// beta ~ U(-0.5s, 0.5s). Draw order: cx, cy, alpha, beta.
AtfField gen_blob_field(std::uint64_t seed, std::uint64_t index, int H, int W,
                        double severity = 1.0);

/// Shifted strong bias: alpha ~ U(1 - 0.3s, 1 + 0.3s), beta ~ U(-0.3s, 0.3s),
/// gamma = s. Draw order: alpha, beta.
ShiftParams gen_shift_corruption(std::uint64_t seed, std::uint64_t index, double severity = 1.0);

/// One corrupted image plus the record of sampled scalars for the manifest.
struct CorruptedImage {
  Tensor image;
  std::vector<std::pair<std::string, double>> params;
};

/// Applies `variant` at (seed, index, severity) to one [C,H,W] image.
CorruptedImage corrupt_image(const Tensor& image, Variant variant, std::uint64_t seed,
                             std::uint64_t index, double severity = 1.0);

/// Rebuilds the corruption of one image from recorded scalars (no RNG);
/// bit-identical to the generator's output for the same record.
Tensor replay_image(const Tensor& image, Variant variant,
                    const std::vector<std::pair<std::string, double>>& params);

/// Everything needed to reproduce a corrupted set exactly.
struct CorruptionManifest {
  Variant variant = Variant::C;
  std::uint64_t seed = 0;
  double severity = 1.0;
  std::vector<std::vector<std::pair<std::string, double>>> records;

  std::string to_json() const;
  static CorruptionManifest from_json(const std::string& text);
  void save(const std::string& path) const;
  static CorruptionManifest load(const std::string& path);
};

/// Corrupts every image (labels and order untouched), recording a manifest.
std::pair<std::vector<Tensor>, CorruptionManifest> corrupt_dataset(
    const std::vector<Tensor>& images, Variant variant, std::uint64_t seed,
    double severity = 1.0);

/// Replays a manifest over the original images; bit-identical to the set the
/// manifest was recorded from.
std::vector<Tensor> replay_dataset(const std::vector<Tensor>& images,
                                   const CorruptionManifest& manifest);

}  // namespace atmosconv
