#include "nosaf/model.hpp"

#include <cmath>
#include <string>

#include "nosaf/errors.hpp"

namespace nosaf {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kNosaf: return "nosaf";
    case Variant::kNosafD: return "nosaf_d";
    case Variant::kPlainGcn: return "plain_gcn";
    case Variant::kResGcn: return "res_gcn";
    case Variant::kJkSum: return "jk_sum";
    case Variant::kOracleH: return "oracle_h";
  }
  throw ArgumentError("variant_name: bad enum value");
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::kNosaf, Variant::kNosafD, Variant::kPlainGcn, Variant::kResGcn,
                    Variant::kJkSum, Variant::kOracleH})
    if (variant_name(v) == name) return v;
  throw ArgumentError("unknown variant '" + name + "'");
}

int ModelConfig::filter_proj_dim() const { return filter_proj > 0 ? filter_proj : hidden; }

int ModelConfig::filter_hidden_dim() const {
  return filter_hidden > 0 ? filter_hidden : std::max(hidden / 2, 1);
}

ModelConfig ModelConfig::canonical() const {
  ModelConfig c = *this;
  const bool has_bank = c.variant == Variant::kNosaf || c.variant == Variant::kNosafD;
  if (has_bank && c.disable_codebank) {
    c.variant = Variant::kPlainGcn;
  } else if (c.variant == Variant::kNosafD && c.disable_cpm) {
    c.variant = Variant::kNosaf;
  }
  return c;
}

void ModelConfig::validate() const {
  if (layers < 0) throw ArgumentError("ModelConfig: layers must be >= 0");
  if (hidden < 1) throw ArgumentError("ModelConfig: hidden must be >= 1");
  if (filter_proj < 0 || filter_hidden < 0)
    throw ArgumentError("ModelConfig: filter widths must be >= 0 (0 = default)");
  if (leaky_slope < 0.0 || leaky_slope >= 1.0)
    throw ArgumentError("ModelConfig: leaky_slope outside [0, 1)");
  if (dropout < 0.0 || dropout >= 1.0) throw ArgumentError("ModelConfig: dropout outside [0, 1)");
}

namespace {

template <typename Params, typename MatRef, typename Fn>
void visit_impl(Params& p, const Fn& fn) {
  fn("input.w", static_cast<MatRef>(p.input_w), true);
  fn("input.b", static_cast<MatRef>(p.input_b), true);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const std::string base = "block." + std::to_string(i) + ".";
    fn(base + "w", static_cast<MatRef>(p.blocks[i].weight), true);
    fn(base + "bn.gamma", static_cast<MatRef>(p.blocks[i].bn.gamma), true);
    fn(base + "bn.beta", static_cast<MatRef>(p.blocks[i].bn.beta), true);
    fn(base + "bn.running_mean", static_cast<MatRef>(p.blocks[i].bn.running_mean), false);
    fn(base + "bn.running_var", static_cast<MatRef>(p.blocks[i].bn.running_var), false);
  }
  for (std::size_t i = 0; i < p.filters.size(); ++i) {
    const std::string base = "filter." + std::to_string(i) + ".";
    fn(base + "agg_proj", static_cast<MatRef>(p.filters[i].agg_proj), true);
    fn(base + "bank_proj", static_cast<MatRef>(p.filters[i].bank_proj), true);
    fn(base + "hidden_w", static_cast<MatRef>(p.filters[i].hidden_w), true);
    fn(base + "hidden_b", static_cast<MatRef>(p.filters[i].hidden_b), true);
    fn(base + "score_w", static_cast<MatRef>(p.filters[i].score_w), true);
    fn(base + "score_b", static_cast<MatRef>(p.filters[i].score_b), true);
  }
  fn("output.w", static_cast<MatRef>(p.output_w), true);
  fn("output.b", static_cast<MatRef>(p.output_b), true);
}

}  // namespace

void ModelParams::visit_fields(const std::function<void(const std::string&, Mat&, bool)>& fn) {
  visit_impl<ModelParams, Mat&>(*this, fn);
}

void ModelParams::visit_fields(
    const std::function<void(const std::string&, const Mat&, bool)>& fn) const {
  visit_impl<const ModelParams, const Mat&>(*this, fn);
}

ModelParams init_params(const ModelConfig& cfg, int feature_dim, int num_classes,
                        std::uint64_t seed) {
  cfg.validate();
  if (feature_dim < 1) throw ArgumentError("init_params: feature_dim must be >= 1");
  if (num_classes < 1) throw ArgumentError("init_params: num_classes must be >= 1");

  Rng rng(seed);
  auto glorot = [&rng](int rows, int cols) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    return m;
  };

  const int d = cfg.hidden;
  const int dp = cfg.filter_proj_dim();
  const int dh = cfg.filter_hidden_dim();

  ModelParams p;
  p.feature_dim = feature_dim;
  p.num_classes = num_classes;
  p.input_w = glorot(feature_dim, d);
  p.input_b = Mat::Zero(1, d);
  p.blocks.resize(static_cast<std::size_t>(cfg.layers));
  for (auto& blk : p.blocks) {
    blk.weight = glorot(d, d);
    blk.bn = BatchNormState::init(d);
  }
  p.filters.resize(static_cast<std::size_t>(cfg.layers) + 1);
  for (auto& f : p.filters) {
    f.agg_proj = glorot(d, dp);
    f.bank_proj = glorot(d, dp);
    f.hidden_w = glorot(2 * dp, dh);
    f.hidden_b = Mat::Zero(1, dh);
    f.score_w = glorot(dh, 1);
    f.score_b = Mat::Zero(1, 1);
  }
  p.output_w = glorot(d, num_classes);
  p.output_b = Mat::Zero(1, num_classes);
  return p;
}

Mat oracle_homophily_weights(const Graph& g) {
  const auto adj = g.adjacency_lists();
  Mat w = Mat::Ones(g.n, 1);  // isolated nodes pass through unweighted
  for (int i = 0; i < g.n; ++i) {
    const auto& nb = adj[static_cast<std::size_t>(i)];
    if (nb.empty()) continue;
    int same = 0;
    for (int j : nb)
      if (g.labels[static_cast<std::size_t>(j)] == g.labels[static_cast<std::size_t>(i)]) ++same;
    w(i, 0) = static_cast<double>(same) / static_cast<double>(nb.size());
  }
  return w;
}

Tensor gcn_block(const SparseCsr& adj, const Tensor& h, const Tensor& weight,
                 const Tensor& bn_gamma, const Tensor& bn_beta, BatchNormState& bn, Mode mode) {
  Tensor agg = spmm(adj, h);
  Tensor lin = matmul(agg, weight);
  Tensor norm = batch_norm(lin, bn_gamma, bn_beta, bn, mode);
  return relu(norm);
}

Tensor filter_weights(const Tensor& z, const Tensor& bank, const FilterStageTensors& f,
                      double leaky_slope) {
  const int n = z.rows();
  Tensor beta = concat_cols(matmul(z, f.agg_proj), matmul(bank, f.bank_proj));
  Tensor hidden =
      leaky_relu(add(matmul(beta, f.hidden_w), broadcast_row(f.hidden_b, n)), leaky_slope);
  Tensor score = add(matmul(hidden, f.score_w), broadcast_row(f.score_b, n));
  return sigmoid(score);
}

Tensor apply_filter(const Tensor& z, const Tensor& gamma) {
  return hadamard(z, broadcast_col(gamma, z.cols()));
}

Tensor codebank_update(const Tensor& bank, const Tensor& filtered) {
  return add(bank, filtered);
}

Tensor compensate(const Tensor& filtered, const Tensor& bank, const Tensor& gamma) {
  Tensor ones = gamma.tape->constant(Mat::Ones(gamma.rows(), 1));
  Tensor complement = sub(ones, gamma);
  return add(filtered, hadamard(bank, broadcast_col(complement, bank.cols())));
}

Tensor model_forward(Tape& tape, const Mat& features, const SparseCsr& adj,
                     const ModelConfig& raw_cfg, ModelParams& params,
                     const ForwardOptions& opt) {
  const ModelConfig cfg = raw_cfg.canonical();
  cfg.validate();
  const int n = static_cast<int>(features.rows());
  if (n < 1) throw ArgumentError("model_forward: empty feature matrix");
  if (adj.rows != n || adj.cols != n)
    throw DimensionError("model_forward: adjacency is " + std::to_string(adj.rows) + "x" +
                         std::to_string(adj.cols) + " for " + std::to_string(n) + " nodes");
  if (params.feature_dim != features.cols())
    throw DimensionError("model_forward: params built for feature_dim " +
                         std::to_string(params.feature_dim) + ", input has " +
                         std::to_string(features.cols()));
  if (params.layer_count() != cfg.layers)
    throw DimensionError("model_forward: params hold " + std::to_string(params.layer_count()) +
                         " blocks, config wants " + std::to_string(cfg.layers));
  if (params.filters.size() != static_cast<std::size_t>(cfg.layers) + 1)
    throw DimensionError("model_forward: params hold " + std::to_string(params.filters.size()) +
                         " filter stages, config wants " + std::to_string(cfg.layers + 1));
  const bool has_bank = cfg.variant == Variant::kNosaf || cfg.variant == Variant::kNosafD;
  if (cfg.variant == Variant::kOracleH &&
      (opt.oracle_weights == nullptr || opt.oracle_weights->rows() != n ||
       opt.oracle_weights->cols() != 1))
    throw ArgumentError("model_forward: oracle_h needs an n x 1 weight column");
  const bool dropping = cfg.dropout > 0.0 && opt.mode == Mode::kTrain;
  if (dropping && opt.dropout_rng == nullptr)
    throw ArgumentError("model_forward: dropout active but no rng supplied");

  auto bind = [&](Mat& m) {
    Tensor t = tape.leaf(m, true);
    if (opt.bound) {
      opt.bound->storage.push_back(&m);
      opt.bound->leaves.push_back(t);
    }
    return t;
  };
  auto drop = [&](Tensor t) {
    if (!dropping) return t;
    const double keep = 1.0 - cfg.dropout;
    Mat mask(t.rows(), t.cols());
    for (int i = 0; i < t.rows(); ++i)
      for (int j = 0; j < t.cols(); ++j)
        mask(i, j) = opt.dropout_rng->uniform() < cfg.dropout ? 0.0 : 1.0 / keep;
    return hadamard(t, tape.constant(std::move(mask)));
  };

  Tensor x = drop(tape.constant(features));
  Tensor input_w = bind(params.input_w);
  Tensor input_b = bind(params.input_b);
  Tensor stage_out = add(matmul(x, input_w), broadcast_row(input_b, n));  // stage-0 output

  Tensor ones_col = tape.constant(Mat::Ones(n, 1));
  Tensor bank = has_bank ? tape.constant(Mat::Zero(n, cfg.hidden)) : Tensor{};
  Tensor oracle = cfg.variant == Variant::kOracleH ? tape.constant(*opt.oracle_weights)
                                                   : Tensor{};
  Tensor jk_acc{};
  Tensor hidden{};  // representation handed to the next stage

  for (int l = 0; l <= cfg.layers; ++l) {
    Tensor z = stage_out;
    if (l > 0) {
      auto& blk = params.blocks[static_cast<std::size_t>(l - 1)];
      Tensor w = bind(blk.weight);
      Tensor bg = bind(blk.bn.gamma);
      Tensor bb = bind(blk.bn.beta);
      z = drop(gcn_block(adj, hidden, w, bg, bb, blk.bn, opt.mode));
    }

    Tensor gamma{};
    switch (cfg.variant) {
      case Variant::kNosaf:
      case Variant::kNosafD: {
        if (cfg.disable_node_weights) {
          gamma = ones_col;
        } else {
          auto& f = params.filters[static_cast<std::size_t>(l)];
          FilterStageTensors ft{bind(f.agg_proj), bind(f.bank_proj), bind(f.hidden_w),
                                bind(f.hidden_b), bind(f.score_w),   bind(f.score_b)};
          gamma = filter_weights(z, bank, ft, cfg.leaky_slope);
        }
        Tensor filtered = apply_filter(z, gamma);
        hidden = cfg.variant == Variant::kNosafD ? compensate(filtered, bank, gamma) : filtered;
        bank = codebank_update(bank, filtered);
        break;
      }
      case Variant::kPlainGcn:
        hidden = z;
        break;
      case Variant::kResGcn:
        hidden = (l == 0) ? z : add(z, hidden);
        break;
      case Variant::kJkSum:
        jk_acc = (l == 0) ? z : add(jk_acc, z);
        hidden = z;
        break;
      case Variant::kOracleH:
        hidden = (l == 0) ? z
                          : add(hadamard(z, broadcast_col(oracle, z.cols())), hidden);
        break;
    }

    if (opt.trace) {
      StageTrace st;
      st.z = z.value();
      st.gamma = gamma.tape != nullptr ? gamma.value() : Mat::Ones(n, 1);
      if (has_bank) st.bank = bank.value();
      st.hidden = hidden.value();
      st.davg = n >= 2 ? smoothness_davg(st.hidden) : 0.0;
      opt.trace->stages.push_back(std::move(st));
    }
  }

  Tensor head = has_bank ? bank : (cfg.variant == Variant::kJkSum ? jk_acc : hidden);
  Tensor output_w = bind(params.output_w);
  Tensor output_b = bind(params.output_b);
  Tensor logits = add(matmul(head, output_w), broadcast_row(output_b, n));
  if (opt.trace) opt.trace->logits = logits.value();
  return logits;
}

}  // namespace nosaf
