#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "nosaf/graph.hpp"

namespace nosaf {

// On-disk graph bundle: a directory holding
//   meta.json   {"name": ..., "n": N, "num_classes": K, "feature_dim": D}
//   nodes.tsv   id <tab> label <tab> f0 <tab> ... (ids 0..N-1 in order)
//   edges.tsv   u <tab> v per line, u < v
//   splits.json {"train": [...], "val": [...], "test": [...]}   (optional)
// Floats round-trip exactly (17 significant digits).
struct Bundle {
  std::string name;
  Graph graph;
  std::optional<SplitMasks> splits;
};

// Writes the bundle into dir (created if needed). Deterministic bytes:
// rewriting the same bundle reproduces identical files.
void save_bundle(const Bundle& b, const std::filesystem::path& dir);

// Throws ParseError (file and line named) on malformed content and
// IntegrityError on semantic violations (duplicate edge, id out of order,
// unknown node in edges or splits, label out of range, ...).
Bundle load_bundle(const std::filesystem::path& dir);

}  // namespace nosaf
