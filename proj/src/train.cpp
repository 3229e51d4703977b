#include "nosaf/train.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nosaf/errors.hpp"

namespace nosaf {

void TrainConfig::validate() const {
  model.validate();
  if (epochs < 1) throw ArgumentError("TrainConfig: epochs must be >= 1");
  if (seeds.empty()) throw ArgumentError("TrainConfig: seed list is empty");
  if (record_smoothness_every < 0)
    throw ArgumentError("TrainConfig: record_smoothness_every must be >= 0");
  if (divergence_limit <= 0.0) throw ArgumentError("TrainConfig: divergence_limit must be > 0");
  if (adam.lr <= 0.0) throw ArgumentError("TrainConfig: lr must be > 0");
}

double accuracy_from_logits(const Mat& logits, const std::vector<int>& labels,
                            const std::vector<int>& mask) {
  if (mask.empty()) throw ArgumentError("accuracy_from_logits: empty mask");
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows())
    throw ArgumentError("accuracy_from_logits: " + std::to_string(labels.size()) +
                        " labels for " + std::to_string(logits.rows()) + " rows");
  int hits = 0;
  for (int i : mask) {
    if (i < 0 || i >= logits.rows())
      throw ArgumentError("accuracy_from_logits: mask index " + std::to_string(i) +
                          " out of range");
    int best = 0;  // lowest index wins ties
    for (int c = 1; c < logits.cols(); ++c)
      if (logits(i, c) > logits(i, best)) best = c;
    if (best == labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(mask.size());
}

AccuracySplit evaluate(const Graph& g, const SparseCsr& adj, const ModelConfig& cfg,
                       ModelParams& params, const SplitMasks& masks) {
  Tape tape;
  ForwardOptions opt;
  opt.mode = Mode::kEval;
  Mat oracle;
  if (cfg.canonical().variant == Variant::kOracleH) {
    oracle = oracle_homophily_weights(g);
    opt.oracle_weights = &oracle;
  }
  const Tensor logits = model_forward(tape, g.features, adj, cfg, params, opt);
  return {accuracy_from_logits(logits.value(), g.labels, masks.train),
          accuracy_from_logits(logits.value(), g.labels, masks.val),
          accuracy_from_logits(logits.value(), g.labels, masks.test)};
}

RunRecord train_once(const Graph& g, const SplitMasks& masks, const TrainConfig& cfg,
                     std::uint64_t seed, ModelParams* best_params_out) {
  cfg.validate();
  g.validate();
  masks.validate(g.n);

  const SparseCsr adj = normalize_adjacency(g);
  ModelParams params = init_params(cfg.model, g.feature_dim(), g.num_classes, seed);
  Mat oracle;
  const bool needs_oracle = cfg.model.canonical().variant == Variant::kOracleH;
  if (needs_oracle) oracle = oracle_homophily_weights(g);
  Adam optimizer(cfg.adam);
  Rng dropout_rng(mix_seed(seed, 0xd209));

  RunRecord rec;
  rec.seed = seed;
  rec.epochs.reserve(static_cast<std::size_t>(cfg.epochs));
  ModelParams best;
  bool have_best = false;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Optimization pass: fresh tape, train-mode forward, one Adam step.
    Tape tape;
    BoundParams bound;
    ForwardOptions opt;
    opt.mode = Mode::kTrain;
    opt.bound = &bound;
    if (needs_oracle) opt.oracle_weights = &oracle;
    if (cfg.model.dropout > 0.0) opt.dropout_rng = &dropout_rng;
    const Tensor logits = model_forward(tape, g.features, adj, cfg.model, params, opt);
    const Tensor loss = masked_softmax_cross_entropy(logits, g.labels, masks.train);
    const double loss_value = loss.value()(0, 0);
    if (!std::isfinite(loss_value) || loss_value > cfg.divergence_limit)
      throw TrainError("training diverged at epoch " + std::to_string(epoch) + " (loss " +
                       std::to_string(loss_value) + ", seed " + std::to_string(seed) + ")");
    tape.backward(loss);
    std::vector<Mat> grads;
    grads.reserve(bound.leaves.size());
    for (const Tensor& leaf : bound.leaves) grads.push_back(tape.grad_or_zero(leaf));
    optimizer.step(bound.storage, grads);

    // Metrics pass: eval-mode forward with the updated parameters.
    Tape eval_tape;
    ForwardOptions eval_opt;
    eval_opt.mode = Mode::kEval;
    if (needs_oracle) eval_opt.oracle_weights = &oracle;
    ForwardTrace trace;
    const bool record_davg =
        cfg.record_smoothness_every > 0 && epoch % cfg.record_smoothness_every == 0;
    if (record_davg) eval_opt.trace = &trace;
    const Tensor eval_logits =
        model_forward(eval_tape, g.features, adj, cfg.model, params, eval_opt);

    EpochMetrics em;
    em.train_loss = loss_value;
    em.train_acc = accuracy_from_logits(eval_logits.value(), g.labels, masks.train);
    em.val_acc = accuracy_from_logits(eval_logits.value(), g.labels, masks.val);
    em.test_acc = accuracy_from_logits(eval_logits.value(), g.labels, masks.test);
    rec.epochs.push_back(em);
    if (record_davg) {
      std::vector<double> davg;
      davg.reserve(trace.stages.size());
      for (const auto& st : trace.stages) davg.push_back(st.davg);
      rec.davg_series.emplace_back(epoch, std::move(davg));
    }

    if (!have_best || em.val_acc > rec.best_val_acc) {  // strict: earliest tie wins
      have_best = true;
      rec.best_val_epoch = epoch;
      rec.best_val_acc = em.val_acc;
      best = params;  // includes batch-norm running statistics
    }
  }

  // Diagnostics at the selected parameters.
  Tape tape;
  ForwardTrace trace;
  ForwardOptions opt;
  opt.mode = Mode::kEval;
  opt.trace = &trace;
  if (needs_oracle) opt.oracle_weights = &oracle;
  model_forward(tape, g.features, adj, cfg.model, best, opt);
  rec.test_acc = accuracy_from_logits(trace.logits, g.labels, masks.test);
  rec.stage_davg.reserve(trace.stages.size());
  rec.stage_gamma.reserve(trace.stages.size());
  for (const auto& st : trace.stages) {
    rec.stage_davg.push_back(st.davg);
    rec.stage_gamma.push_back(
        {st.gamma.mean(), st.gamma.minCoeff(), st.gamma.maxCoeff()});
  }
  rec.final_davg = rec.stage_davg.back();
  if (best_params_out) *best_params_out = std::move(best);
  return rec;
}

ExperimentSummary run_experiment(const Graph& g, const SplitMasks& masks, const TrainConfig& cfg,
                                 const std::function<void(const RunRecord&)>& on_run,
                                 ModelParams* first_best_params) {
  cfg.validate();
  std::vector<std::uint64_t> seeds = cfg.seeds;
  std::sort(seeds.begin(), seeds.end());

  ExperimentSummary summary;
  summary.runs.reserve(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const bool wants_params = first_best_params != nullptr && i == 0;
    RunRecord rec =
        train_once(g, masks, cfg, seeds[i], wants_params ? first_best_params : nullptr);
    if (on_run) on_run(rec);
    summary.runs.push_back(std::move(rec));
  }

  const auto k = static_cast<double>(summary.runs.size());
  double mean = 0.0;
  for (const auto& r : summary.runs) mean += r.test_acc;
  mean /= k;
  double var = 0.0;
  if (summary.runs.size() > 1) {
    for (const auto& r : summary.runs) var += (r.test_acc - mean) * (r.test_acc - mean);
    var /= (k - 1.0);
  }
  summary.mean_test_acc = mean;
  summary.std_test_acc = std::sqrt(var);
  return summary;
}

ExperimentSummary run_experiment(const Graph& g, const TrainConfig& cfg,
                                 const std::function<void(const RunRecord&)>& on_run) {
  const SplitMasks masks = make_split(g, cfg.ratios, cfg.split_seed);
  return run_experiment(g, masks, cfg, on_run);
}

std::vector<std::pair<int, ExperimentSummary>> depth_sweep(const Graph& g,
                                                           const SplitMasks& masks,
                                                           const TrainConfig& base,
                                                           const std::vector<int>& depths) {
  std::vector<std::pair<int, ExperimentSummary>> out;
  out.reserve(depths.size());
  for (int depth : depths) {
    TrainConfig cfg = base;
    cfg.model.layers = depth;
    out.emplace_back(depth, run_experiment(g, masks, cfg));
  }
  return out;
}

}  // namespace nosaf
