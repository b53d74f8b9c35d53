#pragma once

// Minibatch Adam training with validation early stopping, and stratified
// k-fold cross-validation.

#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>
#include <vector>

#include "egc2/log.hpp"
#include "egc2/model.hpp"
#include "egc2/optim.hpp"

namespace egc2 {

// Stops once the validation loss has failed to improve on its best value for
// more than `patience` consecutive epochs.
struct EarlyStopping {
  int patience = 100;
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int since_best = 0;

  // Returns true if training should stop after this epoch.
  bool update(int epoch, double val_loss) {
    if (val_loss < best) {
      best = val_loss;
      best_epoch = epoch;
      since_best = 0;
      return false;
    }
    ++since_best;
    return since_best > patience;
  }

  bool improved_at(int epoch) const { return best_epoch == epoch; }
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;  // mean per-graph loss over the epoch's minibatches
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double seconds = 0.0;  // wall time of the optimisation pass only
};

struct TrainResult {
  EgcModel model;  // parameters of the best-validation-loss epoch
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_loss = 0.0;
};

struct Evaluation {
  double loss = 0.0;  // mean cross-entropy
  double accuracy = 0.0;
  std::vector<int> predictions;
};

inline Evaluation evaluate(const EgcModel& model, const GraphDataset& data) {
  Evaluation e;
  if (data.graphs.empty()) return e;
  int correct = 0;
  for (const Graph& g : data.graphs) {
    ad::Tape tape;
    auto fv = record_forward(tape, g, g.adjacency, model, false, false);
    e.loss += ad::cross_entropy(fv.probabilities, g.label).value()(0, 0);
    const int p = argmax_row(fv.probabilities.value());
    e.predictions.push_back(p);
    correct += p == g.label;
  }
  e.loss /= static_cast<double>(data.size());
  e.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return e;
}

inline ModelConfig config_for(const GraphDataset& data, ModelConfig base) {
  base.n0 = data.max_nodes();
  base.feature_dim = data.feature_dim;
  base.num_classes = data.num_classes;
  return base;
}

struct TrainOptions {
  std::function<void(const EpochLog&)> on_epoch;  // optional progress hook
};

// Trains from the seeded initialisation. Each epoch shuffles the training
// graphs and takes one Adam step per minibatch on the summed loss.
inline TrainResult train(const GraphDataset& train_set, const GraphDataset& val_set, const ModelConfig& config,
                         std::uint64_t seed, const TrainOptions& options = {}) {
  if (train_set.graphs.empty()) throw ContractError("training set is empty");
  if (val_set.graphs.empty()) throw ContractError("validation set is empty");
  EgcModel model = make_model(config, seed);
  OptimizerState opt = make_adam(model.parameter_pointers(), AdamConfig{config.learning_rate});
  EarlyStopping stop{config.patience};
  TrainResult result;
  result.model = model;

  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Matrix> grads;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_seed(seed, Stream::Shuffle, static_cast<std::uint64_t>(epoch)));
    shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop_at = std::min(order.size(), start + config.batch_size);
      grads.assign(model.params.size(), Matrix());
      for (std::size_t b = start; b < stop_at; ++b) {
        const Graph& g = train_set.graphs[order[b]];
        LossGradient lg;
        try {
          lg = loss_gradient(g, model, true, false);
        } catch (const DivergenceError& e) {
          throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + " on graph " +
                                std::to_string(g.id) + ": " + e.what());
        }
        if (!std::isfinite(lg.loss))
          throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + " on graph " +
                                std::to_string(g.id));
        epoch_loss += lg.loss;
        for (std::size_t p = 0; p < grads.size(); ++p) {
          if (grads[p].size() == 0)
            grads[p] = std::move(lg.params[p]);
          else
            grads[p] += lg.params[p];
        }
      }
      adam_step(model.parameter_pointers(), grads, opt);
      for (const auto& p : model.params)
        if (!p.allFinite()) throw DivergenceError("parameters became non-finite at epoch " + std::to_string(epoch));
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const Evaluation val = evaluate(model, val_set);
    EpochLog entry{epoch, epoch_loss / static_cast<double>(order.size()), val.loss, val.accuracy, seconds};
    result.log.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);
    const bool halt = stop.update(epoch, val.loss);
    if (stop.improved_at(epoch)) result.model = model;
    if (halt) break;
  }
  result.best_epoch = stop.best_epoch;
  result.best_val_loss = stop.best;
  result.model.trained = true;
  return result;
}

struct FoldSplit {
  std::vector<int> train, val, test;
};

// Assigns every graph to one of `folds` folds. Each class is shuffled and
// dealt round-robin, continuing the deal across classes, so fold sizes differ
// by at most one and class ratios are preserved. Falls back to an
// unstratified deal when some class has fewer graphs than folds.
inline std::vector<int> assign_folds(const GraphDataset& data, int folds, std::uint64_t seed) {
  if (folds < 2) throw ContractError("need at least 2 folds");
  if (static_cast<int>(data.size()) < folds) throw ContractError("fewer graphs than folds");
  Rng rng(derive_seed(seed, Stream::Folds));
  std::vector<int> fold(data.size(), 0);
  const auto counts = data.class_counts();
  bool stratify = true;
  for (int c : counts)
    if (c < folds) stratify = false;
  std::vector<std::vector<int>> groups;
  if (stratify) {
    groups.resize(data.num_classes);
    for (std::size_t i = 0; i < data.size(); ++i) groups[data.graphs[i].label].push_back(static_cast<int>(i));
  } else {
    log::warn(data.name + ": a class has fewer than " + std::to_string(folds) +
              " graphs; using unstratified folds");
    groups.emplace_back(data.size());
    std::iota(groups[0].begin(), groups[0].end(), 0);
  }
  int next = 0;
  for (auto& grp : groups) {
    shuffle(grp.begin(), grp.end(), rng);
    for (int i : grp) fold[i] = next++ % folds;
  }
  return fold;
}

// Fold f is the test fold, fold (f + 1) mod folds validates, the rest train.
inline FoldSplit fold_split(const std::vector<int>& fold_of, int folds, int f) {
  FoldSplit s;
  const int v = (f + 1) % folds;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    const int fi = fold_of[i];
    (fi == f ? s.test : fi == v ? s.val : s.train).push_back(static_cast<int>(i));
  }
  return s;
}

struct FoldResult {
  int fold = 0;
  FoldSplit split;
  TrainResult training;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  double mean_epoch_seconds = 0.0;
};

struct CvResult {
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population standard deviation over folds

  std::vector<double> accuracies() const {
    std::vector<double> a;
    for (const auto& f : folds) a.push_back(f.test_accuracy);
    return a;
  }
};

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, std::sqrt(v / static_cast<double>(xs.size()))};
}

struct CvOptions {
  int folds = 10;
  int jobs = 1;
  // Optional per-fold transform of the training and validation splits (for
  // example compression); the test split is passed through `test_transform`.
  std::function<GraphDataset(const GraphDataset&)> train_transform;
  std::function<GraphDataset(const GraphDataset&)> test_transform;
  std::function<void(int fold, const EpochLog&)> on_epoch;
};

inline std::uint64_t fold_seed(std::uint64_t master, int fold) {
  return derive_seed(master, Stream::Init, static_cast<std::uint64_t>(fold));
}

// Trains one model per fold. The model config's n0, feature_dim and
// num_classes are taken from `data` (after `train_transform` when given, so
// they reflect the compressed dataset).
inline CvResult cross_validate(const GraphDataset& data, const ModelConfig& base, std::uint64_t seed,
                               const CvOptions& options = {}) {
  const int folds = options.folds;
  const auto fold_of = assign_folds(data, folds, seed);
  const GraphDataset transformed = options.train_transform ? options.train_transform(data) : data;
  const ModelConfig config = config_for(transformed, base);
  CvResult cv;
  cv.folds.resize(folds);
  std::mutex err_mu;
  std::exception_ptr first_error;

  auto run_fold = [&](int f) {
    try {
      FoldResult& fr = cv.folds[f];
      fr.fold = f;
      fr.split = fold_split(fold_of, folds, f);
      TrainOptions topt;
      if (options.on_epoch) topt.on_epoch = [&, f](const EpochLog& e) { options.on_epoch(f, e); };
      fr.training = train(transformed.subset(fr.split.train), transformed.subset(fr.split.val), config,
                          fold_seed(seed, f), topt);
      const GraphDataset test_raw = data.subset(fr.split.test);
      const GraphDataset test = options.test_transform ? options.test_transform(test_raw)
                                : options.train_transform ? transformed.subset(fr.split.test)
                                                          : test_raw;
      const Evaluation ev = evaluate(fr.training.model, test);
      fr.test_accuracy = ev.accuracy;
      fr.test_loss = ev.loss;
      double total = 0.0;
      for (const auto& e : fr.training.log) total += e.seconds;
      fr.mean_epoch_seconds = fr.training.log.empty() ? 0.0 : total / fr.training.log.size();
    } catch (...) {
      std::lock_guard lock(err_mu);
      if (!first_error) first_error = std::current_exception();
    }
  };

  const int jobs = std::max(1, std::min(options.jobs, folds));
  if (jobs == 1) {
    for (int f = 0; f < folds; ++f) run_fold(f);
  } else {
    std::vector<std::thread> workers;
    std::atomic<int> next{0};
    for (int w = 0; w < jobs; ++w)
      workers.emplace_back([&] {
        for (int f = next++; f < folds; f = next++) run_fold(f);
      });
    for (auto& t : workers) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  const auto [m, s] = mean_std(cv.accuracies());
  cv.mean_accuracy = m;
  cv.std_accuracy = s;
  return cv;
}

}  // namespace egc2
