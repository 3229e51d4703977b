#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "fd_check.hpp"
#include "nosaf/bundle.hpp"
#include "nosaf/errors.hpp"
#include "nosaf/graph.hpp"
#include "nosaf/rng.hpp"

using namespace nosaf;
namespace fs = std::filesystem;

namespace {

Graph random_graph(std::uint64_t seed, int n, int k, double edge_prob, int dim = 4) {
  Rng rng(seed);
  Graph g;
  g.n = n;
  g.num_classes = k;
  g.features = Mat(n, dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) g.features(i, j) = rng.normal();
  g.labels.resize((std::size_t)n);
  for (int i = 0; i < n; ++i) g.labels[(std::size_t)i] = (int)rng.below(k);
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (rng.uniform() < edge_prob) g.edges.emplace_back(u, v);
  g.validate();
  return g;
}

// independent oracle: full dense D^{-1/2} (A + I) D^{-1/2}
Mat dense_normalized(const Graph& g) {
  Mat a = Mat::Zero(g.n, g.n);
  for (auto [u, v] : g.edges) a(u, v) = a(v, u) = 1.0;
  Eigen::VectorXd deg = a.rowwise().sum();
  a += Mat::Identity(g.n, g.n);
  Mat out(g.n, g.n);
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j)
      out(i, j) = a(i, j) / std::sqrt((deg(i) + 1.0) * (deg(j) + 1.0));
  return out;
}

double brute_davg(const Mat& h) {
  const int n = (int)h.rows();
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double ni = h.row(i).norm(), nj = h.row(j).norm();
      if (ni == 0.0 || nj == 0.0)
        total += 1.0;
      else
        total += 1.0 - h.row(i).dot(h.row(j)) / (ni * nj);
    }
  return 2.0 * total / ((double)n * (n - 1));
}

fs::path fresh_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("nosaf_test_") + tag);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("normalize_adjacency matches the dense formula") {
  SUBCASE("two nodes, one edge: every entry is 1/2") {
    Graph g;
    g.n = 2;
    g.num_classes = 1;
    g.features = Mat::Zero(2, 1);
    g.labels = {0, 0};
    g.edges = {{0, 1}};
    const Mat d = normalize_adjacency(g).to_dense();
    CHECK(d == Mat(0.5 * Mat::Ones(2, 2)));
  }

  SUBCASE("isolated node keeps a unit self loop") {
    Graph g;
    g.n = 3;
    g.num_classes = 1;
    g.features = Mat::Zero(3, 1);
    g.labels = {0, 0, 0};
    g.edges = {{0, 1}};
    const Mat d = normalize_adjacency(g).to_dense();
    CHECK(d(2, 2) == 1.0);
    CHECK(d(2, 0) == 0.0);
    CHECK(d(0, 2) == 0.0);
  }

  SUBCASE("random graphs agree with dense oracle and stay symmetric") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
      const Graph g = random_graph(seed, 20, 3, 0.2);
      const SparseCsr s = normalize_adjacency(g);
      s.validate();
      const Mat d = s.to_dense();
      CHECK((d - dense_normalized(g)).cwiseAbs().maxCoeff() < 1e-14);
      CHECK((d - d.transpose()).cwiseAbs().maxCoeff() == 0.0);
      // row structure: CSR columns sorted within each row
      for (int r = 0; r < s.rows; ++r)
        for (int k = s.row_ptr[(std::size_t)r] + 1; k < s.row_ptr[(std::size_t)r + 1]; ++k)
          CHECK(s.col_idx[(std::size_t)k - 1] < s.col_idx[(std::size_t)k]);
    }
  }
}

TEST_CASE("homophily ratios equal a brute-force neighbor count") {
  SUBCASE("hand case") {
    Graph g;
    g.n = 4;
    g.num_classes = 2;
    g.features = Mat::Zero(4, 1);
    g.labels = {0, 0, 1, 1};
    g.edges = {{0, 1}, {0, 2}, {1, 3}, {2, 3}};
    CHECK(node_homophily(g, 0).value() == 0.5);
    CHECK(node_homophily(g, 3).value() == 0.5);
    CHECK(graph_homophily(g).value() == 0.5);
  }

  SUBCASE("isolated nodes have no ratio and are excluded from the mean") {
    Graph g;
    g.n = 3;
    g.num_classes = 2;
    g.features = Mat::Zero(3, 1);
    g.labels = {0, 0, 1};
    g.edges = {{0, 1}};
    CHECK_FALSE(node_homophily(g, 2).has_value());
    CHECK(graph_homophily(g).value() == 1.0);

    Graph edgeless;
    edgeless.n = 2;
    edgeless.num_classes = 1;
    edgeless.features = Mat::Zero(2, 1);
    edgeless.labels = {0, 0};
    CHECK_FALSE(graph_homophily(edgeless).has_value());
  }

  SUBCASE("random graphs: exact match against dense-adjacency recount") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Graph g = random_graph(seed, 15, 3, 0.25);
      std::vector<std::vector<int>> nbr((std::size_t)g.n);
      for (auto [u, v] : g.edges) {
        nbr[(std::size_t)u].push_back(v);
        nbr[(std::size_t)v].push_back(u);
      }
      double sum = 0.0;
      int counted = 0;
      for (int i = 0; i < g.n; ++i) {
        const auto& ni = nbr[(std::size_t)i];
        if (ni.empty()) {
          CHECK_FALSE(node_homophily(g, i).has_value());
          continue;
        }
        int same = 0;
        for (int j : ni) same += g.labels[(std::size_t)j] == g.labels[(std::size_t)i];
        const double expect = (double)same / (double)ni.size();
        CHECK(node_homophily(g, i).value() == expect);  // exact: same division
        sum += expect;
        ++counted;
      }
      if (counted > 0) CHECK(graph_homophily(g).value() == doctest::Approx(sum / counted).epsilon(1e-15));
    }
  }
}

TEST_CASE("smoothness_davg equals the pairwise double loop") {
  Rng rng(77);

  SUBCASE("identical rows give 0, opposite rows give 2") {
    Mat same(3, 2);
    same << 1, 2, 1, 2, 1, 2;
    CHECK(smoothness_davg(same) == doctest::Approx(0.0).epsilon(1e-12));
    Mat opp(2, 2);
    opp << 1, 0, -1, 0;
    CHECK(smoothness_davg(opp) == doctest::Approx(2.0).epsilon(1e-12));
  }

  SUBCASE("random matrices match the brute-force oracle") {
    for (int trial = 0; trial < 10; ++trial) {
      Mat h(12, 5);
      for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 5; ++j) h(i, j) = rng.normal();
      if (trial % 3 == 0) h.row(4).setZero();  // exercise the zero-norm branch
      CHECK(smoothness_davg(h) == doctest::Approx(brute_davg(h)).epsilon(1e-12));
    }
  }

  SUBCASE("invariant to positive per-row scaling") {
    Mat h(6, 4);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 4; ++j) h(i, j) = rng.normal();
    Mat scaled = h;
    for (int i = 0; i < 6; ++i) scaled.row(i) *= (i + 1) * 0.37;
    CHECK(smoothness_davg(scaled) == doctest::Approx(smoothness_davg(h)).epsilon(1e-12));
  }

  SUBCASE("fewer than two rows is a domain error") {
    CHECK_THROWS_AS(smoothness_davg(Mat::Zero(1, 3)), ArgumentError);
  }
}

TEST_CASE("generate_sbm: structure, determinism, balance, homophily control") {
  SbmSpec spec;
  spec.n = 300;
  spec.k = 3;
  spec.avg_degree = 8.0;
  spec.target_homophily = 0.9;
  spec.seed = 5;
  const Graph g = generate_sbm(spec);
  g.validate();

  SUBCASE("shape and edge count") {
    CHECK(g.n == 300);
    CHECK(g.num_classes == 3);
    CHECK(g.feature_dim() == 16);
    CHECK(g.num_edges() == (int)std::ceil(300 * 8.0 / 2.0));
  }

  SUBCASE("same seed reproduces bitwise, different seed diverges") {
    const Graph h = generate_sbm(spec);
    CHECK(h.features == g.features);
    CHECK(h.labels == g.labels);
    CHECK(h.edges == g.edges);
    SbmSpec other = spec;
    other.seed = 6;
    const Graph o = generate_sbm(other);
    CHECK(o.edges != g.edges);
  }

  SUBCASE("class sizes are balanced to within one node") {
    std::vector<int> counts(3, 0);
    for (int lab : g.labels) counts[(std::size_t)lab]++;
    CHECK(*std::max_element(counts.begin(), counts.end()) -
              *std::min_element(counts.begin(), counts.end()) <=
          1);
  }

  SUBCASE("measured homophily tracks the target and responds monotonically") {
    std::vector<double> targets = {0.1, 0.5, 0.9};
    std::vector<double> measured;
    for (double t : targets) {
      SbmSpec s2 = spec;
      s2.target_homophily = t;
      s2.n = 600;
      measured.push_back(graph_homophily(generate_sbm(s2)).value());
    }
    for (std::size_t i = 0; i < targets.size(); ++i)
      CHECK(std::abs(measured[i] - targets[i]) < 0.06);
    CHECK(measured[0] < measured[1]);
    CHECK(measured[1] < measured[2]);
  }

  SUBCASE("class separation moves feature means apart") {
    SbmSpec tight = spec;
    tight.class_separation = 0.0;
    tight.noise = 1.0;
    SbmSpec wide = spec;
    wide.class_separation = 6.0;
    const Graph gw = generate_sbm(wide);
    // per-class mean features should be far apart under wide separation
    Mat mean0 = Mat::Zero(1, gw.feature_dim()), mean1 = Mat::Zero(1, gw.feature_dim());
    int c0 = 0, c1 = 0;
    for (int i = 0; i < gw.n; ++i) {
      if (gw.labels[(std::size_t)i] == 0) mean0 += gw.features.row(i), ++c0;
      if (gw.labels[(std::size_t)i] == 1) mean1 += gw.features.row(i), ++c1;
    }
    CHECK((mean0 / c0 - mean1 / c1).norm() > 3.0);
  }

  SUBCASE("spec validation rejects bad fields") {
    SbmSpec bad = spec;
    bad.k = 1;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    bad = spec;
    bad.target_homophily = 1.5;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    bad = spec;
    bad.feature_dim = 2;  // < k
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    bad = spec;
    bad.avg_degree = 0.0;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
  }
}

TEST_CASE("make_split: stratified, deterministic, warns on tiny classes") {
  const Graph g = generate_sbm(SbmSpec{});  // 400 nodes, 3 classes

  SUBCASE("covers all nodes, disjoint, deterministic") {
    const SplitMasks a = make_split(g, SplitRatios{}, 3);
    a.validate(g.n);
    const SplitMasks b = make_split(g, SplitRatios{}, 3);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.test == b.test);
    const SplitMasks c = make_split(g, SplitRatios{}, 4);
    CHECK(a.train != c.train);
    CHECK((int)(a.train.size() + a.val.size() + a.test.size()) == g.n);
  }

  SUBCASE("per-class proportions honor the ratios") {
    const SplitMasks m = make_split(g, SplitRatios{}, 0);
    std::vector<int> class_total(3, 0), class_train(3, 0);
    for (int i = 0; i < g.n; ++i) class_total[(std::size_t)g.labels[(std::size_t)i]]++;
    for (int i : m.train) class_train[(std::size_t)g.labels[(std::size_t)i]]++;
    for (int c = 0; c < 3; ++c) {
      const long expect = std::lround(0.6 * class_total[(std::size_t)c]);
      CHECK(std::abs(class_train[(std::size_t)c] - expect) <= 1);
    }
  }

  SUBCASE("classes under three nodes all land in train, with a warning") {
    Graph tiny;
    tiny.n = 8;
    tiny.num_classes = 2;
    tiny.features = Mat::Zero(8, 2);
    tiny.labels = {0, 0, 0, 0, 0, 0, 1, 1};  // class 1 has 2 members
    tiny.validate();
    std::vector<std::string> warnings;
    const SplitMasks m = make_split(tiny, SplitRatios{}, 0, &warnings);
    m.validate(tiny.n);
    CHECK(warnings.size() == 1);
    for (int i : {6, 7})
      CHECK(std::find(m.train.begin(), m.train.end(), i) != m.train.end());
  }

  SUBCASE("ratios must sum to one") {
    Graph g2 = random_graph(1, 10, 2, 0.3);
    CHECK_THROWS_AS(make_split(g2, SplitRatios{0.5, 0.2, 0.2}, 0), ArgumentError);
  }
}

TEST_CASE("bundle save/load round trip") {
  const fs::path dir = fresh_dir("bundle");

  Bundle b;
  b.name = "roundtrip";
  b.graph = random_graph(21, 12, 3, 0.3, 5);
  // adversarial float values must survive the text round trip exactly
  b.graph.features(0, 0) = 0.1;
  b.graph.features(0, 1) = 1.0 / 3.0;
  b.graph.features(1, 0) = -1e-17;
  b.graph.features(1, 1) = 12345678.901234567;
  b.splits = make_split(b.graph, SplitRatios{}, 0);

  save_bundle(b, dir);
  const Bundle r = load_bundle(dir);
  CHECK(r.name == b.name);
  CHECK(r.graph.n == b.graph.n);
  CHECK(r.graph.num_classes == b.graph.num_classes);
  CHECK(r.graph.labels == b.graph.labels);
  CHECK(r.graph.edges == b.graph.edges);
  CHECK(r.graph.features == b.graph.features);  // bitwise
  REQUIRE(r.splits.has_value());
  CHECK(r.splits->train == b.splits->train);
  CHECK(r.splits->val == b.splits->val);
  CHECK(r.splits->test == b.splits->test);

  SUBCASE("rewriting produces byte-identical files") {
    const std::string nodes = slurp(dir / "nodes.tsv");
    const std::string edges = slurp(dir / "edges.tsv");
    const std::string meta = slurp(dir / "meta.json");
    save_bundle(r, dir);
    CHECK(slurp(dir / "nodes.tsv") == nodes);
    CHECK(slurp(dir / "edges.tsv") == edges);
    CHECK(slurp(dir / "meta.json") == meta);
  }

  SUBCASE("splits.json is optional") {
    const fs::path d2 = fresh_dir("bundle_nosplit");
    Bundle plain = b;
    plain.splits.reset();
    save_bundle(plain, d2);
    CHECK_FALSE(fs::exists(d2 / "splits.json"));
    CHECK_FALSE(load_bundle(d2).splits.has_value());
  }
}

TEST_CASE("bundle loader rejects malformed and inconsistent input") {
  Bundle b;
  b.name = "bad";
  b.graph = random_graph(22, 6, 2, 0.4, 2);

  auto corrupt = [&](const char* tag, const char* file, const std::string& content) {
    const fs::path dir = fresh_dir(tag);
    save_bundle(b, dir);
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    out << content;
    out.close();
    return dir;
  };

  SUBCASE("missing meta.json names the file") {
    const fs::path dir = fresh_dir("nometa");
    save_bundle(b, dir);
    fs::remove(dir / "meta.json");
    CHECK_THROWS_WITH_AS(load_bundle(dir), doctest::Contains("meta.json"), ParseError);
  }
  SUBCASE("garbage meta") {
    CHECK_THROWS_AS(load_bundle(corrupt("badmeta", "meta.json", "not json")), ParseError);
  }
  SUBCASE("meta with unknown key") {
    CHECK_THROWS_AS(
        load_bundle(corrupt("extrakey", "meta.json",
                            "{\"name\":\"x\",\"n\":6,\"num_classes\":2,\"feature_dim\":2,"
                            "\"extra\":1}")),
        ParseError);
  }
  SUBCASE("node id out of order") {
    CHECK_THROWS_AS(
        load_bundle(corrupt("badid", "nodes.tsv",
                            "1\t0\t0\t0\n0\t0\t0\t0\n2\t0\t0\t0\n3\t0\t0\t0\n4\t0\t0\t0\n"
                            "5\t0\t0\t0\n")),
        IntegrityError);
  }
  SUBCASE("label out of range") {
    CHECK_THROWS_AS(
        load_bundle(corrupt("badlabel", "nodes.tsv",
                            "0\t2\t0\t0\n1\t0\t0\t0\n2\t0\t0\t0\n3\t0\t0\t0\n4\t0\t0\t0\n"
                            "5\t0\t0\t0\n")),
        IntegrityError);
  }
  SUBCASE("non-numeric feature names line") {
    const fs::path dir = corrupt("badfloat", "nodes.tsv",
                                 "0\t0\tzap\t0\n1\t0\t0\t0\n2\t0\t0\t0\n3\t0\t0\t0\n"
                                 "4\t0\t0\t0\n5\t0\t0\t0\n");
    CHECK_THROWS_WITH_AS(load_bundle(dir), doctest::Contains("nodes.tsv"), ParseError);
  }
  SUBCASE("edge with u >= v") {
    CHECK_THROWS_AS(load_bundle(corrupt("swapedge", "edges.tsv", "3\t1\n")), IntegrityError);
  }
  SUBCASE("duplicate edge") {
    CHECK_THROWS_AS(load_bundle(corrupt("dupedge", "edges.tsv", "0\t1\n0\t1\n")),
                    IntegrityError);
  }
  SUBCASE("edge endpoint out of range") {
    CHECK_THROWS_AS(load_bundle(corrupt("bigedge", "edges.tsv", "0\t99\n")), IntegrityError);
  }
  SUBCASE("splits referencing unknown nodes") {
    CHECK_THROWS_AS(
        load_bundle(corrupt("badsplit", "splits.json",
                            "{\"train\":[0,99],\"val\":[1],\"test\":[2,3,4,5]}")),
        IntegrityError);
  }
  SUBCASE("splits not covering every node") {
    CHECK_THROWS_AS(load_bundle(corrupt("shortsplit", "splits.json",
                                        "{\"train\":[0],\"val\":[1],\"test\":[2]}")),
                    IntegrityError);
  }
}

TEST_CASE("graph validation catches structural violations") {
  Graph g = random_graph(30, 5, 2, 0.5);
  SUBCASE("label out of range") {
    g.labels[0] = 2;
    CHECK_THROWS_AS(g.validate(), IntegrityError);
  }
  SUBCASE("self loop") {
    g.edges.clear();
    g.edges.emplace_back(1, 1);
    CHECK_THROWS_AS(g.validate(), IntegrityError);
  }
  SUBCASE("unsorted edges") {
    g.edges.clear();
    g.edges.emplace_back(1, 3);
    g.edges.emplace_back(0, 2);
    CHECK_THROWS_AS(g.validate(), IntegrityError);
  }
  SUBCASE("feature row count mismatch") {
    g.features = Mat::Zero(4, 2);
    CHECK_THROWS_AS(g.validate(), IntegrityError);
  }
}
