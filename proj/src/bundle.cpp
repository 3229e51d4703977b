#include "nosaf/bundle.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nosaf/errors.hpp"

namespace nosaf {

namespace {

using nlohmann::json;

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string where(const std::filesystem::path& file, std::size_t line) {
  return file.filename().string() + ":" + std::to_string(line) + ": ";
}

// strtol/strtod with whole-token consumption checks.
long parse_int(const std::string& tok, const std::string& ctx) {
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (errno != 0 || end != tok.c_str() + tok.size() || tok.empty())
    throw ParseError(ctx + "bad integer '" + tok + "'");
  return v;
}

double parse_double(const std::string& tok, const std::string& ctx) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(tok.c_str(), &end);
  if (errno != 0 || end != tok.c_str() + tok.size() || tok.empty())
    throw ParseError(ctx + "bad number '" + tok + "'");
  return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string> read_lines(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open " + file.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();  // trailing newline
  return lines;
}

json parse_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(file.filename().string() + ": " + e.what());
  }
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& ctx) {
  for (const auto& [key, _] : obj.items())
    if (!known.count(key)) throw ParseError(ctx + "unknown key '" + key + "'");
}

std::vector<int> int_list(const json& arr, const std::string& ctx) {
  if (!arr.is_array()) throw ParseError(ctx + "expected an array");
  std::vector<int> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number_integer()) throw ParseError(ctx + "expected integers");
    out.push_back(v.get<int>());
  }
  return out;
}

}  // namespace

void save_bundle(const Bundle& b, const std::filesystem::path& dir) {
  b.graph.validate();
  if (b.splits) b.splits->validate(b.graph.n);
  std::filesystem::create_directories(dir);

  {
    json meta;
    meta["name"] = b.name;
    meta["n"] = b.graph.n;
    meta["num_classes"] = b.graph.num_classes;
    meta["feature_dim"] = b.graph.feature_dim();
    std::ofstream out(dir / "meta.json");
    out << meta.dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "nodes.tsv");
    for (int i = 0; i < b.graph.n; ++i) {
      out << i << '\t' << b.graph.labels[static_cast<std::size_t>(i)];
      for (int d = 0; d < b.graph.feature_dim(); ++d) out << '\t' << g17(b.graph.features(i, d));
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "edges.tsv");
    for (const auto& [u, v] : b.graph.edges) out << u << '\t' << v << '\n';
  }
  if (b.splits) {
    json s;
    s["train"] = b.splits->train;
    s["val"] = b.splits->val;
    s["test"] = b.splits->test;
    std::ofstream out(dir / "splits.json");
    out << s.dump(2) << "\n";
  }
}

Bundle load_bundle(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  if (!std::filesystem::exists(meta_path))
    throw ParseError("missing meta file " + meta_path.string());

  Bundle b;
  const json meta = parse_json_file(meta_path);
  reject_unknown_keys(meta, {"name", "n", "num_classes", "feature_dim"}, "meta.json: ");
  for (const char* key : {"name", "n", "num_classes", "feature_dim"})
    if (!meta.contains(key))
      throw ParseError(std::string("meta.json: missing key '") + key + "'");
  b.name = meta["name"].get<std::string>();
  b.graph.n = meta["n"].get<int>();
  b.graph.num_classes = meta["num_classes"].get<int>();
  const int feature_dim = meta["feature_dim"].get<int>();
  if (b.graph.n < 0 || b.graph.num_classes < 1 || feature_dim < 0)
    throw IntegrityError("meta.json: inconsistent sizes");

  // nodes.tsv: id <tab> label <tab> features; ids 0..n-1 in order.
  {
    const auto path = dir / "nodes.tsv";
    const auto lines = read_lines(path);
    if (static_cast<int>(lines.size()) != b.graph.n)
      throw IntegrityError("nodes.tsv: " + std::to_string(lines.size()) + " rows for n = " +
                           std::to_string(b.graph.n));
    b.graph.features = Mat::Zero(b.graph.n, feature_dim);
    b.graph.labels.resize(static_cast<std::size_t>(b.graph.n));
    for (std::size_t li = 0; li < lines.size(); ++li) {
      const auto ctx = where(path, li + 1);
      const auto fields = split_tabs(lines[li]);
      if (static_cast<int>(fields.size()) != 2 + feature_dim)
        throw ParseError(ctx + "expected " + std::to_string(2 + feature_dim) +
                         " fields, got " + std::to_string(fields.size()));
      if (parse_int(fields[0], ctx) != static_cast<long>(li))
        throw IntegrityError(ctx + "id " + fields[0] + " out of order");
      b.graph.labels[li] = static_cast<int>(parse_int(fields[1], ctx));
      for (int d = 0; d < feature_dim; ++d)
        b.graph.features(static_cast<Eigen::Index>(li), d) =
            parse_double(fields[static_cast<std::size_t>(2 + d)], ctx);
    }
  }

  // edges.tsv: u <tab> v, u < v; duplicates rejected.
  {
    const auto path = dir / "edges.tsv";
    const auto lines = read_lines(path);
    std::set<std::pair<int, int>> seen;
    for (std::size_t li = 0; li < lines.size(); ++li) {
      const auto ctx = where(path, li + 1);
      const auto fields = split_tabs(lines[li]);
      if (fields.size() != 2)
        throw ParseError(ctx + "expected 2 fields, got " + std::to_string(fields.size()));
      const int u = static_cast<int>(parse_int(fields[0], ctx));
      const int v = static_cast<int>(parse_int(fields[1], ctx));
      if (u < 0 || v >= b.graph.n || u >= v)
        throw IntegrityError(ctx + "bad edge (" + fields[0] + ", " + fields[1] + ")");
      if (!seen.insert({u, v}).second)
        throw IntegrityError(ctx + "duplicate edge (" + fields[0] + ", " + fields[1] + ")");
    }
    b.graph.edges.assign(seen.begin(), seen.end());
  }

  b.graph.validate();

  const auto splits_path = dir / "splits.json";
  if (std::filesystem::exists(splits_path)) {
    const json s = parse_json_file(splits_path);
    reject_unknown_keys(s, {"train", "val", "test"}, "splits.json: ");
    SplitMasks masks;
    masks.train = int_list(s.value("train", json::array()), "splits.json train: ");
    masks.val = int_list(s.value("val", json::array()), "splits.json val: ");
    masks.test = int_list(s.value("test", json::array()), "splits.json test: ");
    std::sort(masks.train.begin(), masks.train.end());
    std::sort(masks.val.begin(), masks.val.end());
    std::sort(masks.test.begin(), masks.test.end());
    try {
      masks.validate(b.graph.n);
    } catch (const IntegrityError& e) {
      throw IntegrityError("splits.json: " + std::string(e.what()));
    }
    b.splits = std::move(masks);
  }
  return b;
}

}  // namespace nosaf
