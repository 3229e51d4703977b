#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nosaf/sparse.hpp"

namespace nosaf {

// Undirected node-labeled graph with dense features. Immutable once built;
// each edge is stored exactly once as (u, v) with u < v, sorted, no
// duplicates, no self loops. Labels are in [0, num_classes).
struct Graph {
  int n = 0;
  int num_classes = 0;
  Mat features;                            // n x feature_dim
  std::vector<int> labels;                 // size n
  std::vector<std::pair<int, int>> edges;  // u < v, lexicographically sorted

  int feature_dim() const { return static_cast<int>(features.cols()); }
  int num_edges() const { return static_cast<int>(edges.size()); }

  // Neighbor lists (no self), each sorted ascending. Built on demand.
  std::vector<std::vector<int>> adjacency_lists() const;

  // Throws on any structural violation (bad label, bad edge, ...).
  void validate() const;
};

// Disjoint node index lists covering all of [0, n). Each list sorted.
struct SplitMasks {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;

  void validate(int n) const;
};

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

// Stochastic block model with direct homophily control: each edge picks a
// same-class partner with probability target_homophily, otherwise a
// different-class partner. Class means are scaled one-hot directions.
struct SbmSpec {
  int n = 400;
  int k = 3;                       // classes, >= 2
  double avg_degree = 10.0;        // > 0; ceil(n * avg_degree / 2) edges
  double target_homophily = 0.9;   // in [0, 1]
  int feature_dim = 16;            // >= k (one-hot class directions)
  double class_separation = 2.0;   // distance between class means
  double noise = 1.0;              // feature noise std
  std::uint64_t seed = 0;

  void validate() const;
};

// Symmetric degree-normalized adjacency with self loops:
// entry (i, j) = 1 / sqrt((deg_i + 1) * (deg_j + 1)) for j in N(i) or j = i.
// Entries are in (0, 1]; an isolated node keeps a pure self loop of 1.
SparseCsr normalize_adjacency(const Graph& g);

// Fraction of i's neighbors sharing i's label; no self counting.
// Nodes without neighbors have no defined ratio (nullopt).
std::optional<double> node_homophily(const Graph& g, int node);

// Mean node homophily over nodes that have at least one neighbor.
// nullopt when no node qualifies (edgeless graph).
std::optional<double> graph_homophily(const Graph& g);

// Mean pairwise cosine distance over all unordered row pairs of h:
// 2/(N(N-1)) * sum_{i<j} (1 - cos(h_i, h_j)). Zero-norm rows count as
// distance 1 from everything. Requires at least 2 rows. Result in [0, 2];
// 0 means fully collapsed (all rows positively colinear).
double smoothness_davg(const Mat& h);

Graph generate_sbm(const SbmSpec& spec);

// Stratified split: per class, round(n_c * train) to train, then
// round(n_c * (train + val)) boundary to val, rest to test, after a seeded
// in-class shuffle. Ratios must sum to 1. Classes with fewer than 3 nodes
// go entirely to train; a note per such class is appended to warnings.
SplitMasks make_split(const Graph& g, const SplitRatios& ratios, std::uint64_t seed,
                      std::vector<std::string>* warnings = nullptr);

}  // namespace nosaf
