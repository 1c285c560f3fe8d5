// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atmosconv/dataset.hpp"
#include "atmosconv/net.hpp"

namespace atmosconv {

struct TrainHyper {
  double lr = 0.1;
  double momentum = 0.9;
  std::string schedule = "cosine";  // cosine | step | constant
  int step_every = 10;              // step schedule: epochs between drops
  double step_gamma = 0.1;
  int epochs = 30;
  int batch_size = 64;
  double weight_decay = 0.0;   // applied to conv/dense weights only
  double reg_strength = 0.0;   // part-sum regularizer weight; 0 disables
  double augment_fraction = 0.0;  // gain-bias augmentation max variation; 0 disables
  std::uint64_t seed = 0;         // drives data order and augmentation draws

  void validate() const;
  /// Learning rate for a 0-based epoch index.
  double lr_at(int epoch) const;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;  // NaN when no validation set was given
};

struct TrainResult {
  std::vector<EpochLog> log;
};

/// Mini-batch SGD with momentum on softmax cross-entropy, plus the optional
/// part-sum regularizer on every conv layer's raw weights. Deterministic per
/// (model init seed, hyper.seed): paired runs that share both see identical
/// data order and augmentation draws regardless of conv_mode. Throws
/// std::runtime_error with a diagnostic when the loss stops being finite.
TrainResult train(Model& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainHyper& hyper);

/// "epoch,lr,train_loss,train_acc,val_acc" CSV.
void write_train_log(const std::string& path, const std::vector<EpochLog>& log);

/// Top-1 predictions in dataset order; eval mode, batched, grad-free.
std::vector<int> predict(Model& model, const Dataset& data, int batch_size = 128);

/// Top-1 accuracy; independent of batch partitioning.
double evaluate(Model& model, const Dataset& data, int batch_size = 128);

/// Class-stratified subsample keeping ceil(fraction * n_c) per class, in
/// original dataset order; deterministic per seed. fraction 1 is the
/// identity. Throws if some class has no samples.
Dataset low_shot_subsample(const Dataset& data, double fraction, std::uint64_t seed);

/// Mean over conv layers and filters of |1 - |w+|| + |1 - |w-|| on raw
/// weights: the quantity the part-sum regularizer drives toward zero.
double mean_part_sum_deviation(const Model& model);

/// Stacks dataset images [indices] into one [B,C,H,W] batch tensor.
Tensor make_batch(const Dataset& data, const std::vector<int>& indices);

}  // namespace atmosconv
