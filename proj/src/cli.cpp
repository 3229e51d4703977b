#include "nosaf/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "nosaf/bundle.hpp"
#include "nosaf/checkpoint.hpp"
#include "nosaf/errors.hpp"
#include "nosaf/train.hpp"
#include "nosaf/version.hpp"

namespace nosaf {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config document ----------------------------------------------------

json default_config() {
  json cfg;
  cfg["model"] = model_config_to_json(ModelConfig{});
  cfg["train"] = {
      {"epochs", 500},
      {"lr", 0.01},
      {"weight_decay", 5e-4},
      {"beta1", 0.9},
      {"beta2", 0.999},
      {"eps", 1e-8},
      {"seeds", json::array({0, 1, 2, 3, 4, 5, 6, 7, 8, 9})},
      {"split_seed", 0},
      {"ratios", {{"train", 0.6}, {"val", 0.2}, {"test", 0.2}}},
      {"record_smoothness_every", 100},
      {"divergence_limit", 1e6},
  };
  cfg["graph"] = {
      {"name", "sbm"},          {"n", 400},
      {"k", 3},                 {"avg_degree", 10.0},
      {"target_homophily", 0.9}, {"feature_dim", 16},
      {"class_separation", 2.0}, {"noise", 1.0},
      {"seed", 0},
  };
  cfg["sweep"] = {{"axis", "depth"}, {"values", json::array({2, 4, 8, 16})}};
  return cfg;
}

void merge_config(json& base, const json& given, const std::string& prefix) {
  if (!given.is_object())
    throw UsageError("config: expected an object at " + (prefix.empty() ? "top level" : prefix));
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw UsageError("config: unknown key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object() && value.is_object()) {
      merge_config(slot, value, path);
      continue;
    }
    const bool ok = (slot.is_object() == value.is_object()) &&
                    (slot.is_array() == value.is_array()) &&
                    (slot.is_string() == value.is_string()) &&
                    (slot.is_boolean() == value.is_boolean()) &&
                    (slot.is_number() == value.is_number()) &&
                    !(slot.is_number_integer() && value.is_number_float());
    if (!ok) throw UsageError("config: type mismatch at '" + path + "'");
    slot = value;
  }
}

}  // namespace

json apply_overrides(json config, const std::vector<std::string>& sets) {
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw UsageError("--set expects dotted.path=value, got '" + s + "'");
    const std::string path = s.substr(0, eq);
    const std::string raw = s.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // not JSON: take it as a string

    json* cur = &config;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      const std::string key = path.substr(start, dot - start);
      if (!cur->is_object() || !cur->contains(key))
        throw UsageError("--set: unknown config key '" + path + "'");
      if (dot == std::string::npos) {
        json patch = json::object();
        json* leaf = &patch;
        // Re-check the assignment with merge_config's type rules.
        std::size_t s2 = 0;
        for (;;) {
          const auto d2 = path.find('.', s2);
          const std::string k2 = path.substr(s2, d2 - s2);
          if (d2 == std::string::npos) {
            (*leaf)[k2] = value;
            break;
          }
          (*leaf)[k2] = json::object();
          leaf = &(*leaf)[k2];
          s2 = d2 + 1;
        }
        merge_config(config, patch, "");
        break;
      }
      cur = &(*cur)[key];
      start = dot + 1;
    }
  }
  return config;
}

json resolve_config(const json& given) {
  json cfg = default_config();
  merge_config(cfg, given, "");
  return cfg;
}

namespace {

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw UsageError("config file " + path + " is not valid JSON");
  return j;
}

// ---- config -> structs ----------------------------------------------------

ModelConfig model_from(const json& full) {
  try {
    return model_config_from_json(full.at("model"));
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

TrainConfig train_from(const json& full) {
  try {
    const json& t = full.at("train");
    TrainConfig cfg;
    cfg.model = model_from(full);
    cfg.epochs = t.at("epochs").get<int>();
    cfg.adam.lr = t.at("lr").get<double>();
    cfg.adam.weight_decay = t.at("weight_decay").get<double>();
    cfg.adam.beta1 = t.at("beta1").get<double>();
    cfg.adam.beta2 = t.at("beta2").get<double>();
    cfg.adam.eps = t.at("eps").get<double>();
    cfg.seeds = t.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.split_seed = t.at("split_seed").get<std::uint64_t>();
    cfg.ratios.train = t.at("ratios").at("train").get<double>();
    cfg.ratios.val = t.at("ratios").at("val").get<double>();
    cfg.ratios.test = t.at("ratios").at("test").get<double>();
    cfg.record_smoothness_every = t.at("record_smoothness_every").get<int>();
    cfg.divergence_limit = t.at("divergence_limit").get<double>();
    cfg.validate();
    return cfg;
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {  // json::exception or Error
    throw UsageError(std::string("train config: ") + e.what());
  }
}

SbmSpec sbm_from(const json& full) {
  try {
    const json& g = full.at("graph");
    SbmSpec spec;
    spec.n = g.at("n").get<int>();
    spec.k = g.at("k").get<int>();
    spec.avg_degree = g.at("avg_degree").get<double>();
    spec.target_homophily = g.at("target_homophily").get<double>();
    spec.feature_dim = g.at("feature_dim").get<int>();
    spec.class_separation = g.at("class_separation").get<double>();
    spec.noise = g.at("noise").get<double>();
    spec.seed = g.at("seed").get<std::uint64_t>();
    spec.validate();
    return spec;
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(std::string("graph config: ") + e.what());
  }
}

// ---- variant tokens -------------------------------------------------------

ModelConfig apply_variant_token(ModelConfig base, const std::string& token) {
  const auto colon = token.find(':');
  const std::string name = token.substr(0, colon);
  try {
    base.variant = parse_variant(name);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  base.disable_cpm = base.disable_node_weights = base.disable_codebank = false;
  if (colon != std::string::npos) {
    std::stringstream rest(token.substr(colon + 1));
    std::string flag;
    while (std::getline(rest, flag, ',')) {
      if (flag == "no_cpm")
        base.disable_cpm = true;
      else if (flag == "no_nw")
        base.disable_node_weights = true;
      else if (flag == "no_cb")
        base.disable_codebank = true;
      else
        throw UsageError("unknown variant flag '" + flag + "' in '" + token + "'");
    }
  }
  return base;
}

std::string variant_token(const ModelConfig& cfg) {
  std::string t = variant_name(cfg.variant);
  std::string flags;
  for (const auto& [on, name] : {std::pair<bool, const char*>{cfg.disable_cpm, "no_cpm"},
                                 {cfg.disable_node_weights, "no_nw"},
                                 {cfg.disable_codebank, "no_cb"}}) {
    if (!on) continue;
    flags += flags.empty() ? "" : ",";
    flags += name;
  }
  return flags.empty() ? t : t + ":" + flags;
}

// ---- small output helpers ---------------------------------------------------

std::string fmt(const char* spec, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string num10(double v) { return fmt("%.10g", v); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

fs::path resolve_out_dir(const std::string& flag, const std::string& command) {
  if (!flag.empty()) return flag;
  const char* root = std::getenv("NOSAF_OUT_ROOT");
  return fs::path(root != nullptr ? root : ".") / ("nosaf-" + command);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw ArgumentError("write failed for " + path.string());
}

void write_config_echo(const fs::path& dir, const json& resolved) {
  write_text(dir / "config.json", resolved.dump(2) + "\n");
}

json run_record_json(const RunRecord& rec, const json& resolved) {
  json j;
  j["version"] = kVersion;
  j["config"] = resolved;
  j["seed"] = rec.seed;
  json epochs = json::array();
  for (std::size_t i = 0; i < rec.epochs.size(); ++i) {
    const auto& em = rec.epochs[i];
    epochs.push_back({{"epoch", i + 1},
                      {"train_loss", em.train_loss},
                      {"train_acc", em.train_acc},
                      {"val_acc", em.val_acc},
                      {"test_acc", em.test_acc}});
  }
  j["epochs"] = std::move(epochs);
  j["best_val_epoch"] = rec.best_val_epoch;
  j["best_val_acc"] = rec.best_val_acc;
  j["test_acc"] = rec.test_acc;
  json series = json::array();
  for (const auto& [epoch, davg] : rec.davg_series)
    series.push_back({{"epoch", epoch}, {"stage_davg", davg}});
  j["davg_series"] = std::move(series);
  j["stage_davg"] = rec.stage_davg;
  json gst = json::array();
  for (const auto& gs : rec.stage_gamma)
    gst.push_back({{"mean", gs.mean}, {"min", gs.min}, {"max", gs.max}});
  j["stage_gamma"] = std::move(gst);
  j["final_davg"] = rec.final_davg;
  return j;
}

// Minimal polyline chart; self-contained SVG.
std::string polyline_svg(const std::string& title, const std::string& xlabel,
                         const std::string& ylabel,
                         const std::vector<std::pair<double, double>>& pts) {
  const double w = 640, h = 400, ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = pts.front().first, xmax = xmin, ymin = pts.front().second, ymax = ymin;
  for (const auto& [x, y] : pts) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto sy = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << w << " " << h
      << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
  svg << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"16\">" << title
      << "</text>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
      << h - mb << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
      << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  svg << "<text x=\"18\" y=\"" << (mt + h - mb) / 2 << "\" text-anchor=\"middle\" transform=\""
      << "rotate(-90 18 " << (mt + h - mb) / 2 << ")\">" << ylabel << "</text>\n";
  svg << "<text x=\"" << ml << "\" y=\"" << h - mb + 18 << "\" text-anchor=\"middle\">"
      << num10(xmin) << "</text>\n";
  svg << "<text x=\"" << w - mr << "\" y=\"" << h - mb + 18 << "\" text-anchor=\"middle\">"
      << num10(xmax) << "</text>\n";
  svg << "<text x=\"" << ml - 8 << "\" y=\"" << h - mb + 4 << "\" text-anchor=\"end\">"
      << fmt("%.3g", ymin) << "</text>\n";
  svg << "<text x=\"" << ml - 8 << "\" y=\"" << mt + 4 << "\" text-anchor=\"end\">"
      << fmt("%.3g", ymax) << "</text>\n";
  svg << "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"2\" points=\"";
  for (const auto& [x, y] : pts) svg << sx(x) << "," << sy(y) << " ";
  svg << "\"/>\n";
  for (const auto& [x, y] : pts)
    svg << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"3\" fill=\"#1f6fb2\"/>\n";
  svg << "</svg>\n";
  return svg.str();
}

// ---- commands ------------------------------------------------------------

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::string bundle;
  std::string checkpoint;       // analyze: checkpoint to inspect
  std::string checkpoint_out;   // train: where to save best params
  std::uint64_t seed = 0;
  bool has_seed = false;
  int jobs = 1;
  bool svg = false;
};

int cmd_generate(const Flags& f) {
  json resolved = apply_overrides(resolve_config(load_config_file(f.config)), f.sets);
  if (f.has_seed) resolved["graph"]["seed"] = f.seed;
  const SbmSpec spec = sbm_from(resolved);
  const TrainConfig tc = train_from(resolved);  // ratios / split_seed for bundled splits
  const std::string name = resolved["graph"]["name"].get<std::string>();
  const fs::path out = resolve_out_dir(f.out, "generate");

  const Graph g = generate_sbm(spec);
  std::vector<std::string> warnings;
  const SplitMasks masks = make_split(g, tc.ratios, tc.split_seed, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  save_bundle({name, g, masks}, out);
  write_config_echo(out, resolved);

  const auto h = graph_homophily(g);
  std::cout << "generated " << name << ": n=" << g.n << " edges=" << g.num_edges()
            << " classes=" << g.num_classes
            << " H=" << (h ? fmt("%.4f", *h) : std::string("undefined")) << " -> "
            << out.string() << "\n";
  return 0;
}

int cmd_train(const Flags& f) {
  json resolved = apply_overrides(resolve_config(load_config_file(f.config)), f.sets);
  if (f.has_seed) resolved["train"]["seeds"] = json::array({f.seed});
  TrainConfig tc = train_from(resolved);  // validates before any filesystem work

  const Bundle b = load_bundle(f.bundle);
  std::vector<std::string> warnings;
  const SplitMasks masks =
      b.splits ? *b.splits : make_split(b.graph, tc.ratios, tc.split_seed, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  const fs::path out = resolve_out_dir(f.out, "train");
  fs::create_directories(out);
  write_config_echo(out, resolved);

  const auto on_run = [&](const RunRecord& rec) {
    write_text(out / ("run_seed" + std::to_string(rec.seed) + ".json"),
               run_record_json(rec, resolved).dump(2) + "\n");
    std::cerr << "[seed " << rec.seed << "] best_val_epoch=" << rec.best_val_epoch
              << " val=" << fmt("%.4f", rec.best_val_acc)
              << " test=" << fmt("%.4f", rec.test_acc) << "\n";
  };
  ModelParams best;
  const ExperimentSummary summary = run_experiment(
      b.graph, masks, tc, on_run, f.checkpoint_out.empty() ? nullptr : &best);

  const std::string token = variant_token(tc.model);
  std::ostringstream csv;
  csv << "variant,L,seed,test_acc,best_val_epoch,final_Davg\r\n";
  double mean_davg = 0.0;
  for (const auto& r : summary.runs) {
    csv << token << "," << tc.model.layers << "," << r.seed << "," << num10(r.test_acc) << ","
        << r.best_val_epoch << "," << num10(r.final_davg) << "\r\n";
    mean_davg += r.final_davg;
  }
  mean_davg /= static_cast<double>(summary.runs.size());
  csv << token << "," << tc.model.layers << ",mean," << num10(summary.mean_test_acc) << ",,"
      << num10(mean_davg) << "\r\n";
  write_text(out / "summary.csv", csv.str());

  if (!f.checkpoint_out.empty()) save_checkpoint(f.checkpoint_out, tc.model, best);

  std::cout << token << " L=" << tc.model.layers << " test_acc="
            << fmt("%.4f", summary.mean_test_acc) << "±"
            << fmt("%.4f", summary.std_test_acc) << "\n";
  return 0;
}

int cmd_analyze(const Flags& f) {
  const Bundle b = load_bundle(f.bundle);
  const Graph& g = b.graph;

  int isolated = 0;
  std::vector<int> hist(10, 0);
  const auto adj_lists = g.adjacency_lists();
  for (int i = 0; i < g.n; ++i) {
    if (adj_lists[static_cast<std::size_t>(i)].empty()) {
      ++isolated;
      continue;
    }
    const double h = *node_homophily(g, i);
    const int bin = std::min(static_cast<int>(h * 10.0), 9);
    ++hist[static_cast<std::size_t>(bin)];
  }
  const auto h = graph_homophily(g);

  std::cout << "bundle " << b.name << ": n=" << g.n << " edges=" << g.num_edges()
            << " classes=" << g.num_classes << " feature_dim=" << g.feature_dim() << "\n";
  std::cout << "homophily: "
            << (h ? "H=" + fmt("%.4f", *h) : std::string("undefined (no connected nodes)"))
            << " (" << isolated << " isolated)\n";
  std::cout << "node homophily histogram:\n";
  for (int bin = 0; bin < 10; ++bin)
    std::cout << "  [" << fmt("%.1f", bin / 10.0) << "," << fmt("%.1f", (bin + 1) / 10.0)
              << (bin == 9 ? "]" : ")") << " " << hist[static_cast<std::size_t>(bin)] << "\n";

  json doc;
  doc["version"] = kVersion;
  doc["bundle"] = b.name;
  doc["n"] = g.n;
  doc["edges"] = g.num_edges();
  doc["num_classes"] = g.num_classes;
  doc["feature_dim"] = g.feature_dim();
  if (h)
    doc["homophily"] = *h;
  else
    doc["homophily"] = nullptr;
  doc["isolated"] = isolated;
  doc["histogram"] = hist;

  if (!f.checkpoint.empty()) {
    auto [cfg, params] = load_checkpoint(f.checkpoint);
    if (params.feature_dim != g.feature_dim() || params.num_classes != g.num_classes)
      throw IntegrityError("checkpoint built for feature_dim=" +
                           std::to_string(params.feature_dim) + "/classes=" +
                           std::to_string(params.num_classes) + ", bundle has " +
                           std::to_string(g.feature_dim()) + "/" +
                           std::to_string(g.num_classes));
    const SparseCsr adj = normalize_adjacency(g);
    Tape tape;
    ForwardTrace trace;
    ForwardOptions opt;
    opt.mode = Mode::kEval;
    opt.trace = &trace;
    Mat oracle;
    if (cfg.canonical().variant == Variant::kOracleH) {
      oracle = oracle_homophily_weights(g);
      opt.oracle_weights = &oracle;
    }
    model_forward(tape, g.features, adj, cfg, params, opt);

    std::cout << "checkpoint: " << variant_token(cfg) << " L=" << cfg.layers
              << " hidden=" << cfg.hidden << "\n";
    std::cout << "stage D_avg:";
    for (const auto& st : trace.stages) std::cout << " " << fmt("%.4f", st.davg);
    std::cout << "\nstage gamma mean:";
    for (const auto& st : trace.stages) std::cout << " " << fmt("%.4f", st.gamma.mean());
    std::cout << "\n";

    doc["checkpoint_config"] = model_config_to_json(cfg);
    json davg = json::array();
    json gamma = json::array();
    for (const auto& st : trace.stages) {
      davg.push_back(st.davg);
      gamma.push_back({{"mean", st.gamma.mean()},
                       {"min", st.gamma.minCoeff()},
                       {"max", st.gamma.maxCoeff()}});
    }
    doc["stage_davg"] = std::move(davg);
    doc["stage_gamma"] = std::move(gamma);

    if (f.svg) {
      if (f.out.empty()) throw UsageError("--svg needs --out");
      std::vector<std::pair<double, double>> pts;
      for (std::size_t i = 0; i < trace.stages.size(); ++i)
        pts.emplace_back(static_cast<double>(i), trace.stages[i].davg);
      fs::create_directories(f.out);
      write_text(fs::path(f.out) / "davg_stages.svg",
                 polyline_svg("smoothness by stage", "stage", "D_avg", pts));
    }
  } else if (f.svg) {
    throw UsageError("--svg needs --checkpoint");
  }

  if (!f.out.empty()) {
    fs::create_directories(f.out);
    write_text(fs::path(f.out) / "analyze.json", doc.dump(2) + "\n");
  }
  return 0;
}

// ---- sweep ----------------------------------------------------------------

struct SweepCell {
  std::string value;  // axis value as written into the CSV
  TrainConfig cfg;
  std::shared_ptr<const Graph> graph;
  std::shared_ptr<const SplitMasks> masks;
};

struct UnitResult {
  std::string test_acc, best_val_epoch, final_davg, error;  // CSV field strings
  bool ok = false;
  double acc_value = 0, davg_value = 0;
};

// Tiny RFC-4180 reader, enough to resume our own files.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      if (!field.empty() || !row.empty()) {
        if (!field.empty() && field.back() == '\r') field.pop_back();
        row.push_back(std::move(field));
        field.clear();
        rows.push_back(std::move(row));
        row.clear();
      }
    } else {
      field += c;
    }
  }
  if (!field.empty() && field.back() == '\r') field.pop_back();
  if (!field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

int cmd_sweep(const Flags& f) {
  json resolved = apply_overrides(resolve_config(load_config_file(f.config)), f.sets);
  const TrainConfig base = train_from(resolved);
  const std::string axis = resolved["sweep"]["axis"].get<std::string>();
  const json& values = resolved["sweep"]["values"];
  if (!values.is_array() || values.empty()) throw UsageError("sweep.values must be a non-empty array");
  if (axis != "depth" && axis != "homophily" && axis != "variant")
    throw UsageError("sweep.axis must be depth, homophily or variant");
  if (axis != "homophily" && f.bundle.empty())
    throw UsageError("sweep over " + axis + " needs --bundle");

  // Build cells (graph + per-cell config) before touching the output dir.
  std::vector<SweepCell> cells;
  std::shared_ptr<const Graph> shared_graph;
  std::shared_ptr<const SplitMasks> shared_masks;
  if (axis != "homophily") {
    const Bundle b = load_bundle(f.bundle);
    shared_graph = std::make_shared<const Graph>(b.graph);
    shared_masks = std::make_shared<const SplitMasks>(
        b.splits ? *b.splits : make_split(b.graph, base.ratios, base.split_seed));
  }
  for (const json& v : values) {
    SweepCell cell;
    cell.cfg = base;
    if (axis == "depth") {
      if (!v.is_number_integer()) throw UsageError("depth values must be integers");
      cell.cfg.model.layers = v.get<int>();
      cell.value = std::to_string(v.get<int>());
      cell.graph = shared_graph;
      cell.masks = shared_masks;
    } else if (axis == "variant") {
      if (!v.is_string()) throw UsageError("variant values must be strings");
      cell.cfg.model = apply_variant_token(base.model, v.get<std::string>());
      cell.value = v.get<std::string>();
      cell.graph = shared_graph;
      cell.masks = shared_masks;
    } else {
      if (!v.is_number()) throw UsageError("homophily values must be numbers");
      SbmSpec spec = sbm_from(resolved);
      spec.target_homophily = v.get<double>();
      spec.validate();
      cell.value = num10(v.get<double>());
      auto g = std::make_shared<Graph>(generate_sbm(spec));
      cell.masks = std::make_shared<const SplitMasks>(
          make_split(*g, base.ratios, base.split_seed));
      cell.graph = std::move(g);
    }
    cells.push_back(std::move(cell));
  }

  std::vector<std::uint64_t> seeds = base.seeds;
  std::sort(seeds.begin(), seeds.end());

  const fs::path out = resolve_out_dir(f.out, "sweep");
  fs::create_directories(out);
  write_config_echo(out, resolved);
  const fs::path csv_path = out / "sweep.csv";

  // Resume: rows already on disk are kept verbatim, their units skipped.
  std::map<std::pair<std::string, std::string>, UnitResult> done;  // (value, seed) -> result
  if (fs::exists(csv_path)) {
    std::ifstream in(csv_path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    const auto rows = parse_csv(buf.str());
    for (std::size_t i = 1; i < rows.size(); ++i) {  // skip header
      const auto& r = rows[i];
      if (r.size() != 9 || r[4] == "mean") continue;
      UnitResult u;
      u.test_acc = r[5];
      u.best_val_epoch = r[6];
      u.final_davg = r[7];
      u.error = r[8];
      u.ok = u.error.empty();
      if (u.ok) {
        u.acc_value = std::strtod(r[5].c_str(), nullptr);
        u.davg_value = std::strtod(r[7].c_str(), nullptr);
      }
      done[{r[1], r[4]}] = std::move(u);
    }
  }

  struct Unit {
    std::size_t cell;
    std::uint64_t seed;
  };
  std::vector<Unit> units;
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (std::uint64_t s : seeds) units.push_back({c, s});
  std::vector<UnitResult> results(units.size());

  std::atomic<std::size_t> cursor{0};
  std::mutex io_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= units.size()) return;
      const Unit& u = units[i];
      const SweepCell& cell = cells[u.cell];
      const auto key = std::make_pair(cell.value, std::to_string(u.seed));
      if (const auto it = done.find(key); it != done.end()) {
        results[i] = it->second;
        continue;
      }
      UnitResult r;
      try {
        TrainConfig cfg = cell.cfg;
        cfg.seeds = {u.seed};
        const RunRecord rec = train_once(*cell.graph, *cell.masks, cfg, u.seed);
        r.ok = true;
        r.acc_value = rec.test_acc;
        r.davg_value = rec.final_davg;
        r.test_acc = num10(rec.test_acc);
        r.best_val_epoch = std::to_string(rec.best_val_epoch);
        r.final_davg = num10(rec.final_davg);
      } catch (const std::exception& e) {
        r.error = e.what();
      }
      {
        std::lock_guard<std::mutex> lock(io_mutex);
        std::cerr << "[" << axis << "=" << cell.value << " seed " << u.seed << "] "
                  << (r.ok ? "test_acc=" + r.test_acc : "failed: " + r.error) << "\n";
      }
      results[i] = std::move(r);
    }
  };
  const int jobs = std::max(1, f.jobs);
  std::vector<std::thread> pool;
  for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  // Deterministic rewrite: cells in given order, seeds ascending, one
  // aggregate row per cell with at least one successful run.
  std::ostringstream csv;
  csv << "axis,value,variant,L,seed,test_acc,best_val_epoch,final_Davg,error\r\n";
  std::vector<std::pair<double, double>> chart;  // (axis value, mean acc)
  bool any_failed = false;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const SweepCell& cell = cells[c];
    const std::string token = variant_token(cell.cfg.model);
    const std::string layers = std::to_string(cell.cfg.model.layers);
    double acc_sum = 0, davg_sum = 0;
    int ok_count = 0;
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (units[i].cell != c) continue;
      const UnitResult& r = results[i];
      csv << axis << "," << csv_field(cell.value) << "," << csv_field(token) << "," << layers
          << "," << units[i].seed << "," << r.test_acc << "," << r.best_val_epoch << ","
          << r.final_davg << "," << csv_field(r.error) << "\r\n";
      if (r.ok) {
        acc_sum += r.acc_value;
        davg_sum += r.davg_value;
        ++ok_count;
      } else {
        any_failed = true;
      }
    }
    if (ok_count > 0) {
      const double mean_acc = acc_sum / ok_count;
      csv << axis << "," << csv_field(cell.value) << "," << csv_field(token) << "," << layers
          << ",mean," << num10(mean_acc) << ",," << num10(davg_sum / ok_count) << ",\r\n";
      std::cout << axis << "=" << cell.value << " test_acc=" << fmt("%.4f", mean_acc) << " ("
                << ok_count << "/" << seeds.size() << " ok)\n";
      char* end = nullptr;
      const double xv = std::strtod(cell.value.c_str(), &end);
      if (end == cell.value.c_str() + cell.value.size()) chart.emplace_back(xv, mean_acc);
    } else {
      std::cout << axis << "=" << cell.value << " all seeds failed\n";
    }
  }
  const fs::path tmp = out / "sweep.csv.tmp";
  write_text(tmp, csv.str());
  fs::rename(tmp, csv_path);

  if (f.svg && chart.size() >= 2)
    write_text(out / ("sweep_" + axis + ".svg"),
               polyline_svg("test accuracy by " + axis, axis, "test accuracy", chart));

  return any_failed ? 1 : 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args_in) {
  CLI::App app{"node-filtered deep graph network lab"};
  app.name("nosaf");
  app.require_subcommand(1);

  Flags f;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", f.config, "JSON config file");
    cmd->add_option("--set", f.sets, "override: dotted.path=value (repeatable)");
    cmd->add_option("--out", f.out, "output directory");
  };

  CLI::App* gen = app.add_subcommand("generate", "create a synthetic graph bundle");
  add_common(gen);
  gen->add_option("--seed", f.seed, "graph seed override")->each([&](const std::string&) {
    f.has_seed = true;
  });

  CLI::App* train = app.add_subcommand("train", "train a model on a bundle");
  add_common(train);
  train->add_option("--bundle", f.bundle, "graph bundle directory")->required();
  train->add_option("--seed", f.seed, "train this single seed")->each([&](const std::string&) {
    f.has_seed = true;
  });
  train->add_option("--checkpoint-out", f.checkpoint_out,
                    "save best parameters of the lowest seed here");

  CLI::App* analyze = app.add_subcommand("analyze", "inspect a bundle / checkpoint");
  analyze->add_option("--bundle", f.bundle, "graph bundle directory")->required();
  analyze->add_option("--checkpoint", f.checkpoint, "parameter checkpoint to trace");
  analyze->add_option("--out", f.out, "output directory for analyze.json / charts");
  analyze->add_flag("--svg", f.svg, "emit a D_avg-by-stage chart (needs --checkpoint, --out)");

  CLI::App* sweep = app.add_subcommand("sweep", "grid of runs along one axis");
  add_common(sweep);
  sweep->add_option("--bundle", f.bundle, "graph bundle (depth / variant axes)");
  sweep->add_option("--jobs", f.jobs, "parallel workers")->check(CLI::PositiveNumber);
  sweep->add_flag("--svg", f.svg, "emit an accuracy chart");

  std::vector<std::string> args(args_in.rbegin(), args_in.rend());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_generate(f);
    if (train->parsed()) return cmd_train(f);
    if (analyze->parsed()) return cmd_analyze(f);
    return cmd_sweep(f);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace nosaf
