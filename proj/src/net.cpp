// SPDX-License-Identifier: Apache-2.0
#include "atmosconv/net.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "atmosconv/filter_algebra.hpp"
#include "atmosconv/ops.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace atmosconv {

// ---------------------------------------------------------------- ModelConfig

namespace {

void check_choice(const std::string& field, const std::string& value,
                  std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (value == a) return;
  std::string msg = "model config: " + field + " = '" + value + "', expected one of {";
  bool first = true;
  for (const char* a : allowed) {
    if (!first) msg += ", ";
    msg += a;
    first = false;
  }
  throw std::invalid_argument(msg + "}");
}

}  // namespace

void ModelConfig::validate() const {
  check_choice("architecture", architecture, {"tiny_cnn", "mini_resnet"});
  check_choice("conv_mode", conv_mode, {"vanilla", "normalized"});
  check_choice("norm_layer", norm_layer, {"none", "batch", "instance"});
  check_choice("use_affine", use_affine, {"auto", "on", "off"});
  if (width < 1 || depth < 1 || classes < 2 || in_channels < 1) {
    throw std::invalid_argument("model config: extents must be positive (width " +
                                std::to_string(width) + ", depth " + std::to_string(depth) +
                                ", classes " + std::to_string(classes) + ", in_channels " +
                                std::to_string(in_channels) + ")");
  }
}

bool ModelConfig::conv_affine() const {
  if (use_affine == "on") return true;
  if (use_affine == "off") return false;
  // A following normalization layer re-centers per channel, which makes a
  // conv-level bias (or scale/shift) redundant; parity between conv modes is
  // kept by dropping it from both.
  return norm_layer == "none";
}

std::string model_config_kv(const ModelConfig& c) {
  std::ostringstream out;
  out << "architecture=" << c.architecture << '\n'
      << "conv_mode=" << c.conv_mode << '\n'
      << "norm_layer=" << c.norm_layer << '\n'
      << "use_affine=" << c.use_affine << '\n'
      << "width=" << c.width << '\n'
      << "depth=" << c.depth << '\n'
      << "classes=" << c.classes << '\n'
      << "in_channels=" << c.in_channels << '\n'
      << "init_seed=" << c.init_seed << '\n';
  return out.str();
}

ModelConfig model_config_from_kv(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("model config: malformed line '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "architecture") c.architecture = val;
    else if (key == "conv_mode") c.conv_mode = val;
    else if (key == "norm_layer") c.norm_layer = val;
    else if (key == "use_affine") c.use_affine = val;
    else if (key == "width") c.width = std::stoi(val);
    else if (key == "depth") c.depth = std::stoi(val);
    else if (key == "classes") c.classes = std::stoi(val);
    else if (key == "in_channels") c.in_channels = std::stoi(val);
    else if (key == "init_seed") c.init_seed = std::stoull(val);
    else throw std::invalid_argument("model config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

// ------------------------------------------------------------------ ConvLayer

ConvLayer::ConvLayer(std::string name, bool normalized, bool affine, int in_ch, int out_ch,
                     int ksize, int stride, int pad)
    : name_(std::move(name)),
      normalized_(normalized),
      affine_(affine),
      oc_(out_ch),
      fan_in_(in_ch * ksize * ksize),
      stride_(stride),
      pad_(pad) {
  weight_ = Tensor::zeros({out_ch, in_ch, ksize, ksize});
  weight_.set_requires_grad(true);
  if (affine_) {
    if (normalized_) {
      scale_ = Tensor::full({out_ch}, 1.0);
      shift_ = Tensor::zeros({out_ch});
      scale_.set_requires_grad(true);
      shift_.set_requires_grad(true);
    } else {
      bias_ = Tensor::zeros({out_ch});
      bias_.set_requires_grad(true);
    }
  }
}

Tensor ConvLayer::forward(const Tensor& x) const {
  if (!normalized_) return conv2d(x, weight_, bias_, stride_, pad_);
  Tensor k = normalize_rows(weight_, oc_, eps_);
  Tensor y = conv2d(x, k, Tensor(), stride_, pad_);
  if (affine_) y = channel_affine(y, scale_, shift_);
  return y;
}

void ConvLayer::init(Xoshiro256pp& rng) {
  const double bound = std::sqrt(3.0 / fan_in_);
  Array& w = weight_.values();
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
  // bias / scale / shift take fixed values and draw nothing, keeping the RNG
  // stream identical across conv modes.
  if (affine_) {
    if (normalized_) {
      scale_.values().setOnes();
      shift_.values().setZero();
    } else {
      bias_.values().setZero();
    }
  }
}

void ConvLayer::append_params(std::vector<Param>& out) const {
  out.push_back({name_ + ".weight", weight_, true, true});
  if (!affine_) return;
  if (normalized_) {
    out.push_back({name_ + ".scale", scale_, true, false});
    out.push_back({name_ + ".shift", shift_, true, false});
  } else {
    out.push_back({name_ + ".bias", bias_, true, false});
  }
}

Tensor ConvLayer::effective_kernel() const {
  if (!normalized_) return weight_;
  NoGradScope off;
  return normalize_rows(weight_, oc_, eps_);
}

// ------------------------------------------------------------------- NormUnit

NormUnit::NormUnit(std::string kind, std::string name, int channels)
    : kind_(std::move(kind)), name_(std::move(name)) {
  if (kind_ == "none") return;
  gamma_ = Tensor::full({channels}, 1.0);
  beta_ = Tensor::zeros({channels});
  gamma_.set_requires_grad(true);
  beta_.set_requires_grad(true);
  if (kind_ == "batch") {
    run_mean_ = Tensor::zeros({channels});
    run_var_ = Tensor::full({channels}, 1.0);
  }
}

Tensor NormUnit::forward(const Tensor& x, bool training) {
  if (kind_ == "none") return x;
  if (kind_ == "batch") {
    if (training && x.dim(0) < 2) {
      throw std::invalid_argument("batch norm needs batch size >= 2 in training, got " +
                                  std::to_string(x.dim(0)));
    }
    return batch_norm(x, gamma_, beta_, run_mean_, run_var_, training);
  }
  return instance_norm(x, gamma_, beta_);
}

void NormUnit::append_params(std::vector<Param>& out) const {
  if (kind_ == "none") return;
  out.push_back({name_ + ".gamma", gamma_, true, false});
  out.push_back({name_ + ".beta", beta_, true, false});
  if (kind_ == "batch") {
    out.push_back({name_ + ".running_mean", run_mean_, false, false});
    out.push_back({name_ + ".running_var", run_var_, false, false});
  }
}

// ----------------------------------------------------------------- DenseLayer

DenseLayer::DenseLayer(std::string name, int in_features, int out_features)
    : name_(std::move(name)), in_(in_features), out_(out_features) {
  weight_ = Tensor::zeros({in_, out_});
  bias_ = Tensor::zeros({out_});
  weight_.set_requires_grad(true);
  bias_.set_requires_grad(true);
}

Tensor DenseLayer::forward(const Tensor& x) const {
  return bias_add_cols(matmul(x, weight_), bias_);
}

void DenseLayer::init(Xoshiro256pp& rng) {
  const double bound = std::sqrt(3.0 / in_);
  Array& w = weight_.values();
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
  bias_.values().setZero();
}

void DenseLayer::append_params(std::vector<Param>& out) const {
  out.push_back({name_ + ".weight", weight_, true, true});
  out.push_back({name_ + ".bias", bias_, true, false});
}

// ---------------------------------------------------------------------- Model

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  const bool normed = config_.conv_mode == "normalized";
  const bool affine = config_.conv_affine();
  const int w = config_.width;

  if (config_.architecture == "tiny_cnn") {
    const int widths[6] = {w, w, 2 * w, 2 * w, 4 * w, 4 * w};
    int in_ch = config_.in_channels;
    for (int i = 0; i < 6; ++i) {
      const std::string id = std::to_string(i + 1);
      convs_.push_back(std::make_unique<ConvLayer>("conv" + id, normed, affine, in_ch, widths[i],
                                                   3, 1, 1));
      norms_.emplace_back(config_.norm_layer, "norm" + id, widths[i]);
      in_ch = widths[i];
    }
    head_ = std::make_unique<DenseLayer>("head", 4 * w, config_.classes);
    return;
  }

  // mini_resnet
  stem_ = std::make_unique<ConvLayer>("stem", normed, affine, config_.in_channels, w, 3, 1, 1);
  stem_norm_ = NormUnit(config_.norm_layer, "stem_norm", w);
  int in_ch = w;
  for (int stage = 0; stage < 3; ++stage) {
    const int out_ch = w << stage;
    for (int b = 0; b < config_.depth; ++b) {
      const bool down = stage > 0 && b == 0;
      const int stride = down ? 2 : 1;
      const std::string id = "s" + std::to_string(stage + 1) + "b" + std::to_string(b + 1);
      Block blk;
      blk.c1 = std::make_unique<ConvLayer>(id + "c1", normed, affine, in_ch, out_ch, 3, stride, 1);
      blk.n1 = NormUnit(config_.norm_layer, id + "n1", out_ch);
      blk.c2 = std::make_unique<ConvLayer>(id + "c2", normed, affine, out_ch, out_ch, 3, 1, 1);
      blk.n2 = NormUnit(config_.norm_layer, id + "n2", out_ch);
      if (in_ch != out_ch || stride != 1) {
        blk.proj = std::make_unique<ConvLayer>(id + "proj", normed, affine, in_ch, out_ch, 1,
                                               stride, 0);
        blk.proj_norm = NormUnit(config_.norm_layer, id + "projn", out_ch);
      }
      blocks_.push_back(std::move(blk));
      in_ch = out_ch;
    }
  }
  head_ = std::make_unique<DenseLayer>("head", 4 * w, config_.classes);
}

Tensor Model::forward(const Tensor& x, bool training, std::vector<Tensor>* conv_outputs) {
  auto record = [conv_outputs](const Tensor& t) {
    if (conv_outputs) conv_outputs->push_back(t);
  };

  if (config_.architecture == "tiny_cnn") {
    Tensor h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      h = convs_[i]->forward(h);
      record(h);
      h = norms_[i].forward(h, training);
      h = relu(h);
      if (i % 2 == 1) h = maxpool2x2(h);
    }
    return head_->forward(global_avg_pool(h));
  }

  Tensor h = stem_->forward(x);
  record(h);
  h = relu(stem_norm_.forward(h, training));
  for (Block& blk : blocks_) {
    Tensor skip = h;
    Tensor y = blk.c1->forward(h);
    record(y);
    y = relu(blk.n1.forward(y, training));
    y = blk.c2->forward(y);
    record(y);
    y = blk.n2.forward(y, training);
    if (blk.proj) {
      skip = blk.proj->forward(skip);
      record(skip);
      skip = blk.proj_norm.forward(skip, training);
    }
    h = relu(add(y, skip));
  }
  return head_->forward(global_avg_pool(h));
}

template <typename Self, typename ConvFn, typename NormFn, typename DenseFn>
void Model::visit_units(Self& self, ConvFn conv_fn, NormFn norm_fn, DenseFn dense_fn) {
  if (self.config_.architecture == "tiny_cnn") {
    for (std::size_t i = 0; i < self.convs_.size(); ++i) {
      conv_fn(*self.convs_[i]);
      norm_fn(self.norms_[i]);
    }
  } else {
    conv_fn(*self.stem_);
    norm_fn(self.stem_norm_);
    for (auto& blk : self.blocks_) {
      conv_fn(*blk.c1);
      norm_fn(blk.n1);
      conv_fn(*blk.c2);
      norm_fn(blk.n2);
      if (blk.proj) {
        conv_fn(*blk.proj);
        norm_fn(blk.proj_norm);
      }
    }
  }
  dense_fn(*self.head_);
}

void Model::init_params(std::uint64_t seed) {
  config_.init_seed = seed;
  Xoshiro256pp rng(seed, 0);
  visit_units(
      *this, [&rng](ConvLayer& c) { c.init(rng); }, [](NormUnit&) {},
      [&rng](DenseLayer& d) { d.init(rng); });
}

std::vector<Param> Model::parameters() const {
  std::vector<Param> out;
  visit_units(
      *this, [&out](const ConvLayer& c) { c.append_params(out); },
      [&out](const NormUnit& n) { n.append_params(out); },
      [&out](const DenseLayer& d) { d.append_params(out); });
  return out;
}

std::vector<Param> Model::trainable_params() const {
  std::vector<Param> out;
  for (const Param& p : parameters())
    if (p.trainable) out.push_back(p);
  return out;
}

std::int64_t Model::num_params(bool trainable_only) const {
  std::int64_t n = 0;
  for (const Param& p : parameters())
    if (!trainable_only || p.trainable) n += p.value.size();
  return n;
}

std::vector<const ConvLayer*> Model::conv_layers() const {
  std::vector<const ConvLayer*> out;
  visit_units(
      *this, [&out](const ConvLayer& c) { out.push_back(&c); }, [](const NormUnit&) {},
      [](const DenseLayer&) {});
  return out;
}

// ----------------------------------------------------------------- checkpoint

void Model::save_checkpoint(const std::string& path) const {
  nlohmann::json header;
  header["format"] = "atmosconv-checkpoint-v1";
  header["config"] = {{"architecture", config_.architecture},
                      {"conv_mode", config_.conv_mode},
                      {"norm_layer", config_.norm_layer},
                      {"use_affine", config_.use_affine},
                      {"width", config_.width},
                      {"depth", config_.depth},
                      {"classes", config_.classes},
                      {"in_channels", config_.in_channels},
                      {"init_seed", config_.init_seed}};
  nlohmann::json entries = nlohmann::json::array();
  const std::vector<Param> ps = parameters();
  for (const Param& p : ps) {
    entries.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  }
  header["entries"] = std::move(entries);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot create " + path);
  out << header.dump() << '\n';
  for (const Param& p : ps) {
    out.write(reinterpret_cast<const char*>(p.value.values().data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p.value.size())));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Model Model::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("checkpoint: missing header in " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("checkpoint: malformed header in " + path + ": " + e.what());
  }
  if (header.value("format", "") != "atmosconv-checkpoint-v1") {
    throw std::invalid_argument("checkpoint: unrecognized format in " + path);
  }
  ModelConfig config;
  try {
    const nlohmann::json& jc = header.at("config");
    config.architecture = jc.at("architecture").get<std::string>();
    config.conv_mode = jc.at("conv_mode").get<std::string>();
    config.norm_layer = jc.at("norm_layer").get<std::string>();
    config.use_affine = jc.at("use_affine").get<std::string>();
    config.width = jc.at("width").get<int>();
    config.depth = jc.at("depth").get<int>();
    config.classes = jc.at("classes").get<int>();
    config.in_channels = jc.at("in_channels").get<int>();
    config.init_seed = jc.at("init_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("checkpoint: incomplete header in " + path + ": " + e.what());
  }

  Model model(config);
  const std::vector<Param> ps = model.parameters();
  if (!header.contains("entries")) {
    throw std::invalid_argument("checkpoint: incomplete header in " + path + ": no entries");
  }
  const nlohmann::json& entries = header.at("entries");
  if (entries.size() != ps.size()) {
    throw std::invalid_argument("checkpoint: " + std::to_string(entries.size()) +
                             " entries for a model with " + std::to_string(ps.size()) +
                             " parameters");
  }
  for (std::size_t i = 0; i < ps.size(); ++i) {
    std::string name;
    Shape shape;
    try {
      name = entries[i].at("name").get<std::string>();
      shape = entries[i].at("shape").get<Shape>();
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("checkpoint: malformed entry " + std::to_string(i) + " in " +
                                  path + ": " + e.what());
    }
    if (name != ps[i].name || shape != ps[i].value.shape()) {
      throw std::invalid_argument("checkpoint: entry " + std::to_string(i) + " is " + name + " " +
                               shape_str(shape) + ", model expects " + ps[i].name + " " +
                               shape_str(ps[i].value.shape()));
    }
    in.read(reinterpret_cast<char*>(ps[i].value.values().data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(ps[i].value.size())));
  }
  if (!in) throw std::invalid_argument("checkpoint: truncated payload in " + path);
  return model;
}

Model build_model(const ModelConfig& config) {
  Model m(config);
  m.init_params(config.init_seed);
  return m;
}

}  // namespace atmosconv
