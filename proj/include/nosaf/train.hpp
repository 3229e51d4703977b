#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "nosaf/adam.hpp"
#include "nosaf/model.hpp"

namespace nosaf {

struct TrainConfig {
  ModelConfig model;
  AdamConfig adam;  // lr 0.01, betas 0.9/0.999, eps 1e-8, weight decay 5e-4
  int epochs = 500;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::uint64_t split_seed = 0;
  SplitRatios ratios;                 // 60 / 20 / 20 stratified
  int record_smoothness_every = 100;  // epochs between D_avg snapshots; 0 = off
  double divergence_limit = 1e6;      // abort when train loss exceeds this

  void validate() const;
};

// Accuracies computed on one eval-mode pass. Epochs are numbered from 1.
struct EpochMetrics {
  double train_loss = 0;
  double train_acc = 0;
  double val_acc = 0;
  double test_acc = 0;
};

struct GammaStats {
  double mean = 0, min = 0, max = 0;
};

struct RunRecord {
  std::uint64_t seed = 0;
  std::vector<EpochMetrics> epochs;  // length = cfg.epochs
  int best_val_epoch = 0;            // 1-based; earliest epoch on ties
  double best_val_acc = 0;
  double test_acc = 0;  // at the best-validation parameters
  // (epoch, per-stage D_avg) snapshots taken every record_smoothness_every.
  std::vector<std::pair<int, std::vector<double>>> davg_series;
  // Captured from one eval-mode pass with the best-validation parameters:
  std::vector<double> stage_davg;       // layers + 1 entries
  std::vector<GammaStats> stage_gamma;  // filter-weight spread per stage
  double final_davg = 0;                // stage_davg.back()
};

struct ExperimentSummary {
  double mean_test_acc = 0;
  double std_test_acc = 0;  // sample std (n-1); 0 for a single seed
  std::vector<RunRecord> runs;  // ordered by seed value
};

// Fraction of masked rows whose argmax (lowest index on ties) matches the
// label. mask must be non-empty with valid indices.
double accuracy_from_logits(const Mat& logits, const std::vector<int>& labels,
                            const std::vector<int>& mask);

struct AccuracySplit {
  double train = 0, val = 0, test = 0;
};

// One eval-mode forward; accuracy on each mask.
AccuracySplit evaluate(const Graph& g, const SparseCsr& adj, const ModelConfig& cfg,
                       ModelParams& params, const SplitMasks& masks);

// Full-batch training: fresh tape per epoch, Adam step per epoch, metrics
// per epoch, best-by-validation selection (earliest tie). Deterministic:
// same graph + masks + config + seed give bit-identical records. Throws
// TrainError (naming the epoch) when the loss diverges. best_params_out,
// when given, receives the best-validation parameter snapshot.
RunRecord train_once(const Graph& g, const SplitMasks& masks, const TrainConfig& cfg,
                     std::uint64_t seed, ModelParams* best_params_out = nullptr);

// train_once per cfg.seeds entry; summary mean +/- sample std over seeds.
// Runs are reduced in seed-value order regardless of list order. on_run
// fires as each run completes (the CLI streams per-run logs through it).
// first_best_params, when given, receives the best-validation parameters
// of the lowest-valued seed.
ExperimentSummary run_experiment(const Graph& g, const SplitMasks& masks, const TrainConfig& cfg,
                                 const std::function<void(const RunRecord&)>& on_run = nullptr,
                                 ModelParams* first_best_params = nullptr);

// Convenience overload: stratified split from cfg.ratios / cfg.split_seed.
ExperimentSummary run_experiment(const Graph& g, const TrainConfig& cfg,
                                 const std::function<void(const RunRecord&)>& on_run = nullptr);

// One experiment per depth, model.layers overridden per entry.
std::vector<std::pair<int, ExperimentSummary>> depth_sweep(const Graph& g,
                                                           const SplitMasks& masks,
                                                           const TrainConfig& base,
                                                           const std::vector<int>& depths);

}  // namespace nosaf
