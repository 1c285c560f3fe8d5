// SPDX-License-Identifier: Apache-2.0
#include "atmosconv/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "atmosconv/filter_algebra.hpp"
#include "atmosconv/ops.hpp"
#include "atmosconv/rng.hpp"

namespace atmosconv {

void TrainHyper::validate() const {
  if (lr < 0.0) throw std::invalid_argument("train: lr must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("train: momentum must be in [0, 1)");
  if (schedule != "cosine" && schedule != "step" && schedule != "constant")
    throw std::invalid_argument("train: unknown schedule '" + schedule + "'");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (step_every < 1) throw std::invalid_argument("train: step_every must be >= 1");
  if (weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be >= 0");
  if (reg_strength < 0.0) throw std::invalid_argument("train: reg_strength must be >= 0");
  if (augment_fraction < 0.0 || augment_fraction > 1.0)
    throw std::invalid_argument("train: augment_fraction must be in [0, 1]");
}

double TrainHyper::lr_at(int epoch) const {
  if (schedule == "cosine") {
    return lr * 0.5 * (1.0 + std::cos(M_PI * epoch / epochs));
  }
  if (schedule == "step") {
    return lr * std::pow(step_gamma, epoch / step_every);
  }
  return lr;
}

Tensor make_batch(const Dataset& data, const std::vector<int>& indices) {
  const int B = static_cast<int>(indices.size());
  Tensor batch = Tensor::zeros({B, data.C, data.H, data.W});
  const Eigen::Index per = static_cast<Eigen::Index>(data.C) * data.H * data.W;
  for (int b = 0; b < B; ++b) {
    batch.values().segment(b * per, per) =
        data.images[static_cast<std::size_t>(indices[b])].values();
  }
  return batch;
}

namespace {

/// Cross-entropy plus the optional part-sum regularizer, built on the tape.
Tensor batch_loss(Model& model, const Tensor& batch, const std::vector<int>& labels,
                  double reg_strength, Tensor* logits_out) {
  Tensor logits = model.forward(batch, /*training=*/true);
  if (logits_out) *logits_out = logits;
  Tensor loss = softmax_cross_entropy(logits, labels);
  if (reg_strength > 0.0) {
    Tensor reg;
    for (const ConvLayer* l : model.conv_layers()) {
      Tensor term = soft_reg_rows(l->raw_weights(), l->out_channels());
      reg = reg.defined() ? add(reg, term) : term;
    }
    loss = add(loss, scale(reg, reg_strength));
  }
  return loss;
}

}  // namespace

TrainResult train(Model& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainHyper& hyper) {
  hyper.validate();
  train_set.validate();
  if (train_set.size() == 0) throw std::invalid_argument("train: empty training set");
  if (train_set.num_classes != model.config().classes) {
    throw std::invalid_argument("train: dataset has " + std::to_string(train_set.num_classes) +
                                " classes, model expects " +
                                std::to_string(model.config().classes));
  }

  const std::vector<Param> params = model.trainable_params();
  std::vector<Array> velocity(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = Array::Zero(params[i].value.size());
  }

  // Separate streams so data order and augmentation stay aligned between
  // paired runs: both depend only on hyper.seed and the epoch/batch schedule.
  Xoshiro256pp order_rng(hyper.seed, 1);
  Xoshiro256pp aug_rng(hyper.seed, 2);

  const int n = static_cast<int>(train_set.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const double lr = hyper.lr_at(epoch);
    // Fisher-Yates on the index array; one RNG carried across epochs.
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(order_rng.below(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }

    double loss_sum = 0.0;
    int batches = 0;
    int correct = 0;
    for (int start = 0; start < n; start += hyper.batch_size) {
      const int end = std::min(n, start + hyper.batch_size);
      std::vector<int> idx(order.begin() + start, order.begin() + end);
      std::vector<int> labels(idx.size());
      for (std::size_t b = 0; b < idx.size(); ++b)
        labels[b] = train_set.labels[static_cast<std::size_t>(idx[b])];

      Tensor batch = make_batch(train_set, idx);
      if (hyper.augment_fraction > 0.0) {
        const double f = hyper.augment_fraction;
        const Eigen::Index per = static_cast<Eigen::Index>(train_set.C) * train_set.H * train_set.W;
        for (std::size_t b = 0; b < idx.size(); ++b) {
          const double alpha = aug_rng.uniform(1.0 - f, 1.0 + f);
          const double beta = aug_rng.uniform(-f, f);
          auto seg = batch.values().segment(static_cast<Eigen::Index>(b) * per, per);
          seg = alpha * seg + beta;
        }
      }

      for (const Param& p : params) p.value.zero_grad();
      double loss_value;
      {
        Tape tape;
        TapeScope scope(tape);
        Tensor logits;
        Tensor loss = batch_loss(model, batch, labels, hyper.reg_strength, &logits);
        loss_value = loss.values()[0];
        if (!std::isfinite(loss_value)) {
          throw std::runtime_error("train: loss diverged to " + std::to_string(loss_value) +
                                   " at epoch " + std::to_string(epoch + 1) + ", batch " +
                                   std::to_string(batches + 1) +
                                   " (try a lower learning rate)");
        }
        tape.backward(loss);
        const std::vector<int> preds = argmax_rows(logits);
        for (std::size_t b = 0; b < preds.size(); ++b)
          if (preds[b] == labels[b]) ++correct;
      }

      {
        NoGradScope off;
        for (std::size_t i = 0; i < params.size(); ++i) {
          const Param& p = params[i];
          Array g = p.value.grad();
          if (hyper.weight_decay > 0.0 && p.decay) g += hyper.weight_decay * p.value.values();
          velocity[i] = hyper.momentum * velocity[i] + g;
          p.value.values() -= lr * velocity[i];
        }
      }
      loss_sum += loss_value;
      ++batches;
    }

    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.lr = lr;
    entry.train_loss = loss_sum / batches;
    entry.train_acc = static_cast<double>(correct) / n;
    entry.val_acc = val_set.size() > 0 ? evaluate(model, val_set)
                                       : std::numeric_limits<double>::quiet_NaN();
    result.log.push_back(entry);
  }
  return result;
}

void write_train_log(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("train log: cannot create " + path);
  out << "epoch,lr,train_loss,train_acc,val_acc\n";
  for (const EpochLog& e : log) {
    out << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.train_acc << ','
        << e.val_acc << '\n';
  }
}

std::vector<int> predict(Model& model, const Dataset& data, int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("predict: batch_size must be >= 1");
  data.validate();
  NoGradScope off;
  std::vector<int> preds;
  preds.reserve(data.size());
  const int n = static_cast<int>(data.size());
  for (int start = 0; start < n; start += batch_size) {
    const int end = std::min(n, start + batch_size);
    std::vector<int> idx(static_cast<std::size_t>(end - start));
    std::iota(idx.begin(), idx.end(), start);
    Tensor logits = model.forward(make_batch(data, idx), /*training=*/false);
    for (int p : argmax_rows(logits)) preds.push_back(p);
  }
  return preds;
}

double evaluate(Model& model, const Dataset& data, int batch_size) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  if (data.num_classes != model.config().classes) {
    throw std::invalid_argument("evaluate: dataset has " + std::to_string(data.num_classes) +
                                " classes, model expects " +
                                std::to_string(model.config().classes));
  }
  const std::vector<int> preds = predict(model, data, batch_size);
  int correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == data.labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

Dataset low_shot_subsample(const Dataset& data, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw std::invalid_argument("low_shot_subsample: fraction must be in (0, 1]");
  data.validate();
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(data.num_classes));
  for (std::size_t i = 0; i < data.size(); ++i)
    by_class[static_cast<std::size_t>(data.labels[i])].push_back(static_cast<int>(i));

  std::vector<int> keep;
  for (int c = 0; c < data.num_classes; ++c) {
    std::vector<int>& idx = by_class[static_cast<std::size_t>(c)];
    if (idx.empty()) {
      throw std::invalid_argument("low_shot_subsample: class " + std::to_string(c) +
                                  " has no samples");
    }
    Xoshiro256pp rng(seed, static_cast<std::uint64_t>(c));
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    const auto m = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(idx.size())) + 0.5);
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(m, idx.size())));
  }
  std::sort(keep.begin(), keep.end());

  Dataset out;
  out.C = data.C;
  out.H = data.H;
  out.W = data.W;
  out.num_classes = data.num_classes;
  for (int i : keep) {
    out.images.push_back(data.images[static_cast<std::size_t>(i)]);
    out.labels.push_back(data.labels[static_cast<std::size_t>(i)]);
  }
  return out;
}

double mean_part_sum_deviation(const Model& model) {
  double total = 0.0;
  int filters = 0;
  for (const ConvLayer* l : model.conv_layers()) {
    const Tensor& w = l->raw_weights();
    const Eigen::Index block = w.size() / l->out_channels();
    for (int oc = 0; oc < l->out_channels(); ++oc) {
      const auto seg = w.values().segment(oc * block, block);
      const double sp = seg.max(0.0).sum();
      const double sn = (-seg).max(0.0).sum();
      total += std::abs(1.0 - sp) + std::abs(1.0 - sn);
      ++filters;
    }
  }
  return total / filters;
}

}  // namespace atmosconv
