// SPDX-License-Identifier: Apache-2.0
#include "atmosconv/atf.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "atmosconv/rng.hpp"

namespace atmosconv {
namespace {

void check_image_shape(const Tensor& image, const char* op) {
  if (image.ndim() != 2 && image.ndim() != 3) {
    throw std::invalid_argument(std::string(op) + ": image must be [H,W] or [C,H,W], got " +
                                shape_str(image.shape()));
  }
}

// Field builders are shared by the RNG generators and manifest replay so both
// paths produce bit-identical pixels from the same scalars.

AtfField build_constant(double alpha, double beta, int H, int W) {
  AtfField f;
  f.gain = Tensor::full({H, W}, alpha);
  f.bias = Tensor::full({H, W}, beta);
  f.params = {{"alpha", alpha}, {"beta", beta}};
  return f;
}

AtfField build_linear(double a0, double a1, double b0, double b1, double theta, int H, int W) {
  AtfField f;
  f.gain = Tensor::zeros({H, W});
  f.bias = Tensor::zeros({H, W});
  const double ux = std::cos(theta), uy = std::sin(theta);
  const double px = ux * (W - 1), py = uy * (H - 1);
  const double pmin = std::min(0.0, px) + std::min(0.0, py);
  const double pmax = std::max(0.0, px) + std::max(0.0, py);
  const double span = pmax - pmin;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double p = ux * x + uy * y;
      const double t = span > 0.0 ? (p - pmin) / span : 0.0;
      const Eigen::Index i = static_cast<Eigen::Index>(y) * W + x;
      f.gain.values()[i] = a0 + (a1 - a0) * t;
      f.bias.values()[i] = b0 + (b1 - b0) * t;
    }
  f.params = {{"alpha0", a0}, {"alpha1", a1}, {"beta0", b0}, {"beta1", b1}, {"theta", theta}};
  return f;
}

AtfField build_blob(double cx, double cy, double alpha, double beta, int H, int W) {
  AtfField f;
  f.gain = Tensor::zeros({H, W});
  f.bias = Tensor::zeros({H, W});
  const double R = 0.8 * static_cast<double>(std::max(H, W));
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double rho = std::sqrt(dx * dx + dy * dy) / R;
      const double w = std::clamp(1.0 - rho * rho * rho, 0.0, 1.0);
      const Eigen::Index i = static_cast<Eigen::Index>(y) * W + x;
      f.gain.values()[i] = 1.0 + (alpha - 1.0) * w;
      f.bias.values()[i] = beta * w;
    }
  f.params = {{"cx", cx}, {"cy", cy}, {"alpha", alpha}, {"beta", beta}};
  return f;
}

double param(const std::vector<std::pair<std::string, double>>& params, const char* name) {
  for (const auto& [k, v] : params)
    if (k == name) return v;
  throw std::invalid_argument("manifest record is missing scalar '" + std::string(name) + "'");
}

}  // namespace

Variant variant_from_string(const std::string& s) {
  if (s == "C") return Variant::C;
  if (s == "L") return Variant::L;
  if (s == "B") return Variant::B;
  if (s == "S") return Variant::S;
  throw std::invalid_argument("unknown corruption variant '" + s + "' (expected C, L, B, or S)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::C: return "C";
    case Variant::L: return "L";
    case Variant::B: return "B";
    case Variant::S: return "S";
  }
  throw std::logic_error("unreachable");
}

Tensor atf_apply(const Tensor& image, const AtfField& field) {
  check_image_shape(image, "atf_apply");
  const int H = image.dim(image.ndim() - 2);
  const int W = image.dim(image.ndim() - 1);
  if (field.gain.shape() != Shape{H, W} || field.bias.shape() != Shape{H, W}) {
    throw std::invalid_argument("atf_apply: field extents " + shape_str(field.gain.shape()) +
                                " do not match image " + shape_str(image.shape()));
  }
  const int C = image.ndim() == 3 ? image.dim(0) : 1;
  const Eigen::Index HW = static_cast<Eigen::Index>(H) * W;
  Tensor out = Tensor::from_array(image.shape(), image.values());
  for (int c = 0; c < C; ++c) {
    auto seg = out.values().segment(static_cast<Eigen::Index>(c) * HW, HW);
    seg = seg * field.gain.values() + field.bias.values();
  }
  return out;
}

Tensor shift_apply(const Tensor& image, const ShiftParams& p) {
  check_image_shape(image, "shift_apply");
  Tensor out = Tensor::from_array(
      image.shape(), (image.values() * p.alpha + p.beta + p.gamma).max(0.0).min(1.0));
  return out;
}

AtfField gen_constant_field(std::uint64_t seed, std::uint64_t index, int H, int W,
                            double severity) {
  Xoshiro256pp rng(seed, index);
  const double alpha = rng.uniform(1.0 - 0.3 * severity, 1.0 + 0.3 * severity);
  const double beta = rng.uniform(-0.3 * severity, 0.3 * severity);
  AtfField f = build_constant(alpha, beta, H, W);
  f.seed = seed;
  return f;
}

AtfField gen_linear_field(std::uint64_t seed, std::uint64_t index, int H, int W,
                          double severity) {
  Xoshiro256pp rng(seed, index);
  const double a0 = rng.uniform(1.0 - 0.5 * severity, 1.0 + 0.5 * severity);
  const double a1 = rng.uniform(1.0 - 0.5 * severity, 1.0 + 0.5 * severity);
  const double b0 = rng.uniform(-0.5 * severity, 0.5 * severity);
  const double b1 = rng.uniform(-0.5 * severity, 0.5 * severity);
  const double theta = rng.uniform(0.0, 2.0 * M_PI);
  AtfField f = build_linear(a0, a1, b0, b1, theta, H, W);
  f.seed = seed;
  return f;
}

AtfField gen_blob_field(std::uint64_t seed, std::uint64_t index, int H, int W, double severity) {
  Xoshiro256pp rng(seed, index);
  const double cx = static_cast<double>(rng.below(static_cast<std::uint64_t>(W)));
  const double cy = static_cast<double>(rng.below(static_cast<std::uint64_t>(H)));
  const double alpha = rng.uniform(1.0 - 0.5 * severity, 1.0 + 0.5 * severity);
  const double beta = rng.uniform(-0.5 * severity, 0.5 * severity);
  AtfField f = build_blob(cx, cy, alpha, beta, H, W);
  f.seed = seed;
  return f;
}

ShiftParams gen_shift_corruption(std::uint64_t seed, std::uint64_t index, double severity) {
  Xoshiro256pp rng(seed, index);
  ShiftParams p;
  p.alpha = rng.uniform(1.0 - 0.3 * severity, 1.0 + 0.3 * severity);
  p.beta = rng.uniform(-0.3 * severity, 0.3 * severity);
  p.gamma = severity;
  return p;
}

CorruptedImage corrupt_image(const Tensor& image, Variant variant, std::uint64_t seed,
                             std::uint64_t index, double severity) {
  check_image_shape(image, "corrupt_image");
  const int H = image.dim(image.ndim() - 2);
  const int W = image.dim(image.ndim() - 1);
  CorruptedImage out;
  switch (variant) {
    case Variant::C: {
      AtfField f = gen_constant_field(seed, index, H, W, severity);
      out.image = atf_apply(image, f);
      out.params = std::move(f.params);
      break;
    }
    case Variant::L: {
      AtfField f = gen_linear_field(seed, index, H, W, severity);
      out.image = atf_apply(image, f);
      out.params = std::move(f.params);
      break;
    }
    case Variant::B: {
      AtfField f = gen_blob_field(seed, index, H, W, severity);
      out.image = atf_apply(image, f);
      out.params = std::move(f.params);
      break;
    }
    case Variant::S: {
      ShiftParams p = gen_shift_corruption(seed, index, severity);
      out.image = shift_apply(image, p);
      out.params = {{"alpha", p.alpha}, {"beta", p.beta}, {"gamma", p.gamma}};
      break;
    }
  }
  return out;
}

Tensor replay_image(const Tensor& image, Variant variant,
                    const std::vector<std::pair<std::string, double>>& params) {
  check_image_shape(image, "replay_image");
  const int H = image.dim(image.ndim() - 2);
  const int W = image.dim(image.ndim() - 1);
  switch (variant) {
    case Variant::C:
      return atf_apply(image, build_constant(param(params, "alpha"), param(params, "beta"), H, W));
    case Variant::L:
      return atf_apply(image,
                       build_linear(param(params, "alpha0"), param(params, "alpha1"),
                                    param(params, "beta0"), param(params, "beta1"),
                                    param(params, "theta"), H, W));
    case Variant::B:
      return atf_apply(image, build_blob(param(params, "cx"), param(params, "cy"),
                                         param(params, "alpha"), param(params, "beta"), H, W));
    case Variant::S: {
      ShiftParams p{param(params, "alpha"), param(params, "beta"), param(params, "gamma")};
      return shift_apply(image, p);
    }
  }
  throw std::logic_error("unreachable");
}

std::string CorruptionManifest::to_json() const {
  nlohmann::json j;
  j["variant"] = variant_name(variant);
  j["seed"] = seed;
  j["severity"] = severity;
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& rec : records) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& [name, value] : rec) r.push_back({name, value});
    recs.push_back(std::move(r));
  }
  j["records"] = std::move(recs);
  return j.dump(2);
}

CorruptionManifest CorruptionManifest::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  CorruptionManifest m;
  m.variant = variant_from_string(j.at("variant").get<std::string>());
  m.seed = j.at("seed").get<std::uint64_t>();
  m.severity = j.at("severity").get<double>();
  for (const auto& rec : j.at("records")) {
    std::vector<std::pair<std::string, double>> r;
    for (const auto& entry : rec) {
      r.emplace_back(entry.at(0).get<std::string>(), entry.at(1).get<double>());
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

void CorruptionManifest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest to " + path);
  out << to_json() << '\n';
}

CorruptionManifest CorruptionManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest from " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(text);
}

std::pair<std::vector<Tensor>, CorruptionManifest> corrupt_dataset(
    const std::vector<Tensor>& images, Variant variant, std::uint64_t seed, double severity) {
  if (severity < 0.0) throw std::invalid_argument("corrupt_dataset: severity must be >= 0");
  CorruptionManifest manifest;
  manifest.variant = variant;
  manifest.seed = seed;
  manifest.severity = severity;
  std::vector<Tensor> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    CorruptedImage ci = corrupt_image(images[i], variant, seed, i, severity);
    out.push_back(std::move(ci.image));
    manifest.records.push_back(std::move(ci.params));
  }
  return {std::move(out), std::move(manifest)};
}

std::vector<Tensor> replay_dataset(const std::vector<Tensor>& images,
                                   const CorruptionManifest& manifest) {
  if (images.size() != manifest.records.size()) {
    throw std::invalid_argument("replay_dataset: manifest has " +
                                std::to_string(manifest.records.size()) + " records for " +
                                std::to_string(images.size()) + " images");
  }
  std::vector<Tensor> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back(replay_image(images[i], manifest.variant, manifest.records[i]));
  }
  return out;
}

}  // namespace atmosconv
