#include "nosaf/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "nosaf/errors.hpp"
#include "nosaf/rng.hpp"

namespace nosaf {

std::vector<std::vector<int>> Graph::adjacency_lists() const {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  // Edges are sorted by (u, v), so both directions come out ascending.
  for (const auto& [u, v] : edges) {
    adj[static_cast<std::size_t>(u)].push_back(v);
    adj[static_cast<std::size_t>(v)].push_back(u);
  }
  return adj;
}

void Graph::validate() const {
  if (n < 0) throw IntegrityError("Graph: negative node count");
  if (num_classes < 1) throw IntegrityError("Graph: num_classes must be at least 1");
  if (static_cast<int>(labels.size()) != n)
    throw IntegrityError("Graph: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " nodes");
  if (features.rows() != n)
    throw IntegrityError("Graph: feature matrix has " + std::to_string(features.rows()) +
                         " rows for " + std::to_string(n) + " nodes");
  for (int i = 0; i < n; ++i)
    if (labels[static_cast<std::size_t>(i)] < 0 ||
        labels[static_cast<std::size_t>(i)] >= num_classes)
      throw IntegrityError("Graph: node " + std::to_string(i) + " has label " +
                           std::to_string(labels[static_cast<std::size_t>(i)]) +
                           " outside [0, " + std::to_string(num_classes) + ")");
  if (!features.allFinite()) throw IntegrityError("Graph: non-finite feature value");
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& [u, v] = edges[e];
    if (u < 0 || v >= n || u >= v)
      throw IntegrityError("Graph: bad edge (" + std::to_string(u) + ", " + std::to_string(v) +
                           ")");
    if (e > 0 && edges[e] <= edges[e - 1])
      throw IntegrityError("Graph: edges not sorted/unique at index " + std::to_string(e));
  }
}

void SplitMasks::validate(int n) const {
  std::vector<int> owner(static_cast<std::size_t>(n), -1);
  const std::vector<const std::vector<int>*> lists = {&train, &val, &test};
  for (int which = 0; which < 3; ++which) {
    const auto& list = *lists[static_cast<std::size_t>(which)];
    for (std::size_t i = 0; i < list.size(); ++i) {
      const int node = list[i];
      if (node < 0 || node >= n)
        throw IntegrityError("SplitMasks: node " + std::to_string(node) + " outside [0, " +
                             std::to_string(n) + ")");
      if (i > 0 && list[i] <= list[i - 1])
        throw IntegrityError("SplitMasks: list not sorted/unique at node " +
                             std::to_string(node));
      if (owner[static_cast<std::size_t>(node)] != -1)
        throw IntegrityError("SplitMasks: node " + std::to_string(node) +
                             " appears in two splits");
      owner[static_cast<std::size_t>(node)] = which;
    }
  }
  for (int i = 0; i < n; ++i)
    if (owner[static_cast<std::size_t>(i)] == -1)
      throw IntegrityError("SplitMasks: node " + std::to_string(i) + " not covered");
}

void SbmSpec::validate() const {
  if (n < 2) throw ArgumentError("SbmSpec: need at least 2 nodes");
  if (k < 2) throw ArgumentError("SbmSpec: need at least 2 classes");
  if (k > n) throw ArgumentError("SbmSpec: more classes than nodes");
  if (avg_degree <= 0.0) throw ArgumentError("SbmSpec: avg_degree must be positive");
  if (target_homophily < 0.0 || target_homophily > 1.0)
    throw ArgumentError("SbmSpec: target_homophily outside [0, 1]");
  if (feature_dim < k) throw ArgumentError("SbmSpec: feature_dim below class count");
  if (class_separation < 0.0) throw ArgumentError("SbmSpec: negative class_separation");
  if (noise < 0.0) throw ArgumentError("SbmSpec: negative noise");
}

SparseCsr normalize_adjacency(const Graph& g) {
  const auto adj = g.adjacency_lists();
  SparseCsr s;
  s.rows = g.n;
  s.cols = g.n;
  s.row_ptr.reserve(static_cast<std::size_t>(g.n) + 1);
  s.row_ptr.push_back(0);
  std::vector<double> deg1(static_cast<std::size_t>(g.n));
  for (int i = 0; i < g.n; ++i)
    deg1[static_cast<std::size_t>(i)] =
        static_cast<double>(adj[static_cast<std::size_t>(i)].size()) + 1.0;
  for (int i = 0; i < g.n; ++i) {
    // Merge the self loop into the sorted neighbor list.
    bool self_done = false;
    auto emit = [&](int j) {
      s.col_idx.push_back(j);
      // single sqrt of the degree product keeps the matrix exactly symmetric
      s.values.push_back(1.0 / std::sqrt(deg1[static_cast<std::size_t>(i)] *
                                         deg1[static_cast<std::size_t>(j)]));
    };
    for (int j : adj[static_cast<std::size_t>(i)]) {
      if (!self_done && i < j) {
        emit(i);
        self_done = true;
      }
      emit(j);
    }
    if (!self_done) emit(i);
    s.row_ptr.push_back(s.nnz());
  }
  return s;
}

std::optional<double> node_homophily(const Graph& g, int node) {
  if (node < 0 || node >= g.n)
    throw ArgumentError("node_homophily: node " + std::to_string(node) + " outside [0, " +
                        std::to_string(g.n) + ")");
  int deg = 0, same = 0;
  for (const auto& [u, v] : g.edges) {
    if (u != node && v != node) continue;
    ++deg;
    const int other = (u == node) ? v : u;
    if (g.labels[static_cast<std::size_t>(other)] == g.labels[static_cast<std::size_t>(node)])
      ++same;
  }
  if (deg == 0) return std::nullopt;
  return static_cast<double>(same) / static_cast<double>(deg);
}

std::optional<double> graph_homophily(const Graph& g) {
  const auto adj = g.adjacency_lists();
  double total = 0.0;
  int counted = 0;
  for (int i = 0; i < g.n; ++i) {
    const auto& nb = adj[static_cast<std::size_t>(i)];
    if (nb.empty()) continue;
    int same = 0;
    for (int j : nb)
      if (g.labels[static_cast<std::size_t>(j)] == g.labels[static_cast<std::size_t>(i)]) ++same;
    total += static_cast<double>(same) / static_cast<double>(nb.size());
    ++counted;
  }
  if (counted == 0) return std::nullopt;
  return total / static_cast<double>(counted);
}

double smoothness_davg(const Mat& h) {
  const auto n = h.rows();
  if (n < 2) throw ArgumentError("smoothness_davg: need at least 2 rows");
  Mat unit = Mat::Zero(n, h.cols());
  Eigen::Index nonzero = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = h.row(i).norm();
    if (norm > 0.0) {
      unit.row(i) = h.row(i) / norm;
      ++nonzero;
    }
    // zero rows stay zero: cosine 0 against everything, distance 1
  }
  Mat gram = unit * unit.transpose();
  const double cos_sum = (gram.sum() - static_cast<double>(nonzero)) / 2.0;
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  return (pairs - cos_sum) / pairs;
}

Graph generate_sbm(const SbmSpec& spec) {
  spec.validate();
  Graph g;
  g.n = spec.n;
  g.num_classes = spec.k;

  // Balanced labels (sizes differ by at most 1), then a seeded shuffle.
  Rng label_rng(mix_seed(spec.seed, 0));
  g.labels.resize(static_cast<std::size_t>(spec.n));
  for (int i = 0; i < spec.n; ++i) g.labels[static_cast<std::size_t>(i)] = i % spec.k;
  label_rng.shuffle(g.labels);

  std::vector<std::vector<int>> members(static_cast<std::size_t>(spec.k));
  std::vector<int> rank_in_class(static_cast<std::size_t>(spec.n));
  for (int i = 0; i < spec.n; ++i) {
    auto& m = members[static_cast<std::size_t>(g.labels[static_cast<std::size_t>(i)])];
    rank_in_class[static_cast<std::size_t>(i)] = static_cast<int>(m.size());
    m.push_back(i);
  }

  // Each edge anchors at a uniform node and picks a same-class partner with
  // probability target_homophily, else a uniform different-class partner.
  // Duplicates are rejected and retried (bounded).
  Rng edge_rng(mix_seed(spec.seed, 1));
  const long target_edges =
      static_cast<long>(std::ceil(static_cast<double>(spec.n) * spec.avg_degree / 2.0));
  std::set<std::pair<int, int>> edge_set;
  long attempts = 0;
  const long max_attempts = 50 * target_edges + 1000;
  while (static_cast<long>(edge_set.size()) < target_edges && attempts < max_attempts) {
    ++attempts;
    const int u = static_cast<int>(edge_rng.below(static_cast<std::uint64_t>(spec.n)));
    const int cu = g.labels[static_cast<std::size_t>(u)];
    const auto& own = members[static_cast<std::size_t>(cu)];
    bool same = edge_rng.uniform() < spec.target_homophily;
    if (same && own.size() < 2) same = false;  // singleton class: no same-class partner
    int v;
    if (same) {
      // Uniform over the class minus u itself (skip u's rank).
      auto j = edge_rng.below(own.size() - 1);
      if (j >= static_cast<std::uint64_t>(rank_in_class[static_cast<std::size_t>(u)])) ++j;
      v = own[static_cast<std::size_t>(j)];
    } else {
      const auto others = static_cast<std::uint64_t>(spec.n) - own.size();
      if (others == 0) continue;  // single populated class; nothing heterophilic to add
      auto j = edge_rng.below(others);
      v = -1;
      for (int c = 0; c < spec.k; ++c) {
        if (c == cu) continue;
        const auto size = members[static_cast<std::size_t>(c)].size();
        if (j < size) {
          v = members[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
          break;
        }
        j -= size;
      }
    }
    auto e = std::minmax(u, v);
    if (!edge_set.insert({e.first, e.second}).second) continue;  // duplicate, retry
  }
  g.edges.assign(edge_set.begin(), edge_set.end());

  // Class means are scaled one-hot directions; pairwise mean distance equals
  // class_separation, so the scale is separation / sqrt(2).
  Rng feat_rng(mix_seed(spec.seed, 2));
  const double scale = spec.class_separation / std::sqrt(2.0);
  g.features = Mat::Zero(spec.n, spec.feature_dim);
  for (int i = 0; i < spec.n; ++i) {
    for (int d = 0; d < spec.feature_dim; ++d) {
      const double mean = (d == g.labels[static_cast<std::size_t>(i)]) ? scale : 0.0;
      g.features(i, d) = mean + spec.noise * feat_rng.normal();
    }
  }

  g.validate();
  return g;
}

SplitMasks make_split(const Graph& g, const SplitRatios& ratios, std::uint64_t seed,
                      std::vector<std::string>* warnings) {
  if (ratios.train <= 0.0 || ratios.val < 0.0 || ratios.test < 0.0)
    throw ArgumentError("make_split: ratios must be positive (train) / non-negative");
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw ArgumentError("make_split: ratios must sum to 1");

  std::vector<std::vector<int>> members(static_cast<std::size_t>(g.num_classes));
  for (int i = 0; i < g.n; ++i)
    members[static_cast<std::size_t>(g.labels[static_cast<std::size_t>(i)])].push_back(i);

  SplitMasks masks;
  Rng rng(seed);
  for (int c = 0; c < g.num_classes; ++c) {
    auto& m = members[static_cast<std::size_t>(c)];
    rng.shuffle(m);
    const auto nc = static_cast<long>(m.size());
    if (nc == 0) continue;
    if (nc < 3) {
      if (warnings)
        warnings->push_back("class " + std::to_string(c) + " has only " + std::to_string(nc) +
                            " node(s); assigned entirely to train");
      masks.train.insert(masks.train.end(), m.begin(), m.end());
      continue;
    }
    const auto b1 = std::lround(static_cast<double>(nc) * ratios.train);
    const auto b2 = std::lround(static_cast<double>(nc) * (ratios.train + ratios.val));
    for (long i = 0; i < nc; ++i) {
      const int node = m[static_cast<std::size_t>(i)];
      if (i < b1)
        masks.train.push_back(node);
      else if (i < b2)
        masks.val.push_back(node);
      else
        masks.test.push_back(node);
    }
  }
  std::sort(masks.train.begin(), masks.train.end());
  std::sort(masks.val.begin(), masks.val.end());
  std::sort(masks.test.begin(), masks.test.end());
  masks.validate(g.n);
  return masks;
}

}  // namespace nosaf
