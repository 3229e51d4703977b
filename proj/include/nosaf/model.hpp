#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nosaf/graph.hpp"
#include "nosaf/rng.hpp"
#include "nosaf/tensor.hpp"

namespace nosaf {

// nosaf: every stage output passes a learned per-node filter and accumulates
//   into a codebank; the classifier reads the final codebank.
// nosaf_d: nosaf plus compensation - the filtered-away complement of the
//   codebank is fed back into the next stage's input.
// plain_gcn / res_gcn: stacked aggregation blocks, optionally with identity
//   residuals; classifier reads the last hidden state.
// jk_sum: stacked blocks, classifier reads the sum of all stage outputs.
// oracle_h: res_gcn whose per-node residual weights are the true label
//   homophily ratios (diagnostic upper bound, not learnable).
enum class Variant { kNosaf, kNosafD, kPlainGcn, kResGcn, kJkSum, kOracleH };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);  // throws ArgumentError

struct ModelConfig {
  Variant variant = Variant::kNosaf;
  int layers = 4;  // L aggregation blocks (>= 0); L+1 filter stages
  int hidden = 64;
  int filter_proj = 0;    // projection width inside the filter; 0 = hidden
  int filter_hidden = 0;  // hidden width inside the filter; 0 = hidden/2 (min 1)
  double leaky_slope = 0.2;
  double dropout = 0.0;  // 0 = off; train mode only
  bool disable_cpm = false;           // nosaf_d only: drop compensation
  bool disable_node_weights = false;  // force filter weights to 1
  bool disable_codebank = false;      // drop the codebank entirely

  int filter_proj_dim() const;
  int filter_hidden_dim() const;

  // Ablation-flag reduction: nosaf_d + disable_cpm is exactly nosaf, and a
  // codebank variant with disable_codebank is exactly plain_gcn. forward()
  // runs the canonical form, so those identities hold bit for bit.
  ModelConfig canonical() const;

  void validate() const;  // throws ArgumentError
};

// One aggregation block: relu(batch_norm(spmm(adj, h) * weight)).
struct GcnBlock {
  Mat weight;  // d x d
  BatchNormState bn;
};

// Parameters of one filter stage:
// beta  = concat(z * agg_proj, bank * bank_proj)
// gamma = sigmoid(leaky_relu(beta * hidden_w + hidden_b) * score_w + score_b)
struct FilterStage {
  Mat agg_proj;   // d x d'
  Mat bank_proj;  // d x d'
  Mat hidden_w;   // 2d' x d''
  Mat hidden_b;   // 1 x d''
  Mat score_w;    // d'' x 1
  Mat score_b;    // 1 x 1
};

// All fields are allocated for every variant, so parameters transfer
// unchanged between variants (the ablation equivalence tests rely on this).
struct ModelParams {
  int feature_dim = 0;
  int num_classes = 0;
  Mat input_w, input_b;    // D x d, 1 x d   (affine map into hidden space)
  std::vector<GcnBlock> blocks;      // L
  std::vector<FilterStage> filters;  // L + 1
  Mat output_w, output_b;  // d x K, 1 x K  (affine map to class scores)

  int layer_count() const { return static_cast<int>(blocks.size()); }

  // Visits every field in a fixed order as (path, matrix, learnable).
  // Learnable excludes the batch-norm running statistics.
  void visit_fields(const std::function<void(const std::string&, Mat&, bool)>& fn);
  void visit_fields(const std::function<void(const std::string&, const Mat&, bool)>& fn) const;
};

// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases,
// batch-norm gamma 1 / beta 0 / running mean 0 / running var 1. One seed,
// fixed draw order: fully deterministic.
ModelParams init_params(const ModelConfig& cfg, int feature_dim, int num_classes,
                        std::uint64_t seed);

// Per-stage intermediates captured by a traced forward pass.
struct StageTrace {
  Mat z;        // stage output (stage 0: the input map; else the block output)
  Mat gamma;    // n x 1 filter weights; all-ones when the variant has none
  Mat bank;     // codebank after this stage's accumulation; empty otherwise
  Mat hidden;   // representation handed to the next stage
  double davg;  // smoothness of hidden
};

struct ForwardTrace {
  std::vector<StageTrace> stages;  // layers + 1
  Mat logits;
};

// Parameter storage bound to the tape leaves of one forward pass, in
// visit_fields order restricted to learnables. grads come off leaves[i],
// updates go into *storage[i].
struct BoundParams {
  std::vector<Mat*> storage;
  std::vector<Tensor> leaves;
};

struct ForwardOptions {
  Mode mode = Mode::kEval;
  const Mat* oracle_weights = nullptr;  // n x 1; required by oracle_h
  Rng* dropout_rng = nullptr;           // required when dropout active in train mode
  ForwardTrace* trace = nullptr;        // optional capture
  BoundParams* bound = nullptr;         // optional parameter binding
};

// Full pass: input map, L aggregation blocks, per-variant stage update,
// output map. Returns the n x K class-score tensor. Train mode updates
// batch-norm running statistics in params.
Tensor model_forward(Tape& tape, const Mat& features, const SparseCsr& adj,
                     const ModelConfig& cfg, ModelParams& params, const ForwardOptions& opt);

// True-label homophily ratio per node as an n x 1 column; nodes without
// neighbors get weight 1 (pass-through).
Mat oracle_homophily_weights(const Graph& g);

// ---- stage primitives (exposed for direct testing) ----------------------

Tensor gcn_block(const SparseCsr& adj, const Tensor& h, const Tensor& weight,
                 const Tensor& bn_gamma, const Tensor& bn_beta, BatchNormState& bn, Mode mode);

// Filter-stage parameters as tape leaves.
struct FilterStageTensors {
  Tensor agg_proj, bank_proj, hidden_w, hidden_b, score_w, score_b;
};

// Per-node filter weights in (0, 1), shape n x 1. Row i depends only on
// row i of z and bank (permutation-equivariant).
Tensor filter_weights(const Tensor& z, const Tensor& bank, const FilterStageTensors& f,
                      double leaky_slope);

// z scaled per node: z o broadcast(gamma).
Tensor apply_filter(const Tensor& z, const Tensor& gamma);

// bank + filtered.
Tensor codebank_update(const Tensor& bank, const Tensor& filtered);

// filtered + bank o broadcast(1 - gamma): what the next stage receives
// under compensation.
Tensor compensate(const Tensor& filtered, const Tensor& bank, const Tensor& gamma);

}  // namespace nosaf
