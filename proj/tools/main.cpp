#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spillcast/baselines.hpp"
#include "spillcast/dataset.hpp"
#include "spillcast/embedding.hpp"
#include "spillcast/errors.hpp"
#include "spillcast/graph.hpp"
#include "spillcast/models.hpp"
#include "spillcast/spillover.hpp"
#include "spillcast/synth.hpp"
#include "spillcast/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spillcast;

namespace {

std::string digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open input for digest: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(buf.str())));
  return std::string("fnv1a:") + hex;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open output: " + path.string());
  out << content;
  if (!out) throw DataError("failed writing: " + path.string());
}

class Run {
 public:
  Run(std::string subcommand, std::string out_dir)
      : sub_(std::move(subcommand)), out_(std::move(out_dir)),
        start_(std::chrono::steady_clock::now()) {
    fs::create_directories(out_);
  }

  const fs::path& dir() const { return out_; }
  fs::path path(const std::string& name) const { return out_ / name; }

  void input(const std::string& p) { inputs_[p] = digest_file(p); }
  void output(const fs::path& p) { outputs_.push_back(p.string()); }
  void config(json c) { config_ = std::move(c); }
  void seed(std::uint64_t s) { seed_ = s; }

  void finish() {
    json m;
    m["subcommand"] = sub_;
    m["config"] = config_;
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    m["seed"] = seed_;
    m["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_text_file(path("manifest.json"), m.dump(2) + "\n");
  }

 private:
  std::string sub_;
  fs::path out_;
  std::chrono::steady_clock::time_point start_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
  json config_ = json::object();
  std::uint64_t seed_ = 0;
};

template <typename T>
T json_get(const json& j, const std::string& key, const T& fallback) {
  try {
    return j.value(key, fallback);
  } catch (const json::exception& e) {
    throw ConfigError("config field " + key + ": " + e.what());
  }
}

GraphSpec graph_spec_from_json(const json& j) {
  GraphSpec spec;
  spec.kind = json_get<std::string>(j, "kind", spec.kind);
  spec.n = json_get<int>(j, "n", spec.n);
  spec.k = json_get<int>(j, "k", spec.k);
  spec.rewire = json_get<double>(j, "rewire", spec.rewire);
  spec.m = json_get<int>(j, "m", spec.m);
  spec.mutual = json_get<bool>(j, "mutual", spec.mutual);
  return spec;
}

SpilloverScenario scenario_from_json(const json& j) {
  SpilloverScenario sc;
  if (j.contains("graph")) sc.graph = graph_spec_from_json(j.at("graph"));
  sc.topics = json_get<std::vector<std::string>>(j, "topics", sc.topics);
  try {
    if (j.contains("post_prob")) {
      sc.post_prob = j.at("post_prob").get<std::map<std::string, double>>();
    }
    if (j.contains("boost")) {
      sc.boost = j.at("boost").get<std::map<std::string, double>>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario maps: ") + e.what());
  }
  sc.p0 = json_get<double>(j, "p0", sc.p0);
  sc.rounds = json_get<int>(j, "rounds", sc.rounds);
  sc.round_seconds = json_get<std::int64_t>(j, "round_seconds", sc.round_seconds);
  sc.pm_fraction = json_get<double>(j, "pm_fraction", sc.pm_fraction);
  sc.nonpm_adopt = json_get<double>(j, "nonpm_adopt", sc.nonpm_adopt);
  sc.adoption_mode = json_get<std::string>(j, "adoption_mode", sc.adoption_mode);
  sc.seed = json_get<std::uint64_t>(j, "seed", sc.seed);
  return sc;
}

json scenario_to_json(const SpilloverScenario& sc) {
  json j;
  j["graph"] = {{"kind", sc.graph.kind}, {"n", sc.graph.n},      {"k", sc.graph.k},
                {"rewire", sc.graph.rewire}, {"m", sc.graph.m},  {"mutual", sc.graph.mutual}};
  j["topics"] = sc.topics;
  j["post_prob"] = sc.post_prob;
  j["boost"] = sc.boost;
  j["p0"] = sc.p0;
  j["rounds"] = sc.rounds;
  j["round_seconds"] = sc.round_seconds;
  j["pm_fraction"] = sc.pm_fraction;
  j["nonpm_adopt"] = sc.nonpm_adopt;
  j["adoption_mode"] = sc.adoption_mode;
  j["seed"] = sc.seed;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  if (j.contains("kind")) cfg.kind = parse_model_kind(json_get<std::string>(j, "kind", "gcn"));
  cfg.layers = json_get<int>(j, "layers", cfg.layers);
  cfg.hidden = json_get<int>(j, "hidden", cfg.hidden);
  cfg.msg_hidden = json_get<int>(j, "msg_hidden", cfg.msg_hidden);
  cfg.learning_rate = json_get<double>(j, "learning_rate", cfg.learning_rate);
  cfg.theta = json_get<double>(j, "theta", cfg.theta);
  cfg.lambda = json_get<double>(j, "lambda", cfg.lambda);
  cfg.batch_size = json_get<int>(j, "batch_size", cfg.batch_size);
  cfg.max_epochs = json_get<int>(j, "max_epochs", cfg.max_epochs);
  cfg.patience = json_get<int>(j, "patience", cfg.patience);
  cfg.clip_norm = json_get<double>(j, "clip_norm", cfg.clip_norm);
  cfg.seed = json_get<std::uint64_t>(j, "seed", cfg.seed);
  return cfg;
}

json train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["kind"] = to_string(cfg.kind);
  j["layers"] = cfg.layers;
  j["hidden"] = cfg.hidden;
  j["msg_hidden"] = cfg.msg_hidden;
  j["learning_rate"] = cfg.learning_rate;
  j["theta"] = cfg.theta;
  j["lambda"] = cfg.lambda;
  j["batch_size"] = cfg.batch_size;
  j["max_epochs"] = cfg.max_epochs;
  j["patience"] = cfg.patience;
  j["clip_norm"] = cfg.clip_norm;
  j["seed"] = cfg.seed;
  return j;
}

json metrics_to_json(const std::string& set_name, const Metrics& m) {
  json j;
  j["set"] = set_name;
  j["count"] = m.count;
  if (m.count > 0) {
    j["mrse"] = m.mrse;
    j["mape"] = m.mape;
    j["wro_perc"] = m.wro_perc;
  }
  return j;
}

std::string metrics_table(const std::string& header, const SubsetMetrics& sm) {
  std::string out = header + "\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-12s %8s %12s %12s %10s\n", "set", "count", "MRSE",
                "MAPE", "WroPerc");
  out += line;
  auto row = [&](const char* name, const Metrics& m) {
    if (m.count == 0) {
      std::snprintf(line, sizeof(line), "%-12s %8zu %12s %12s %10s\n", name, m.count, "n/a",
                    "n/a", "n/a");
    } else {
      std::snprintf(line, sizeof(line), "%-12s %8zu %12.6f %12.6f %10.2f\n", name, m.count,
                    m.mrse, m.mape, m.wro_perc);
    }
    out += line;
  };
  row("all", sm.all);
  row("preventive", sm.preventive);
  row("other", sm.other);
  return out;
}

std::string planted_table(const std::vector<PlantedGroup>& groups) {
  std::string out;
  char line[200];
  std::snprintf(line, sizeof(line), "%-34s %10s %10s %12s %10s %12s\n", "group", "users",
                "latent", "probability", "alpha", "elasticity");
  out += line;
  for (const PlantedGroup& g : groups) {
    if (g.control) {
      std::snprintf(line, sizeof(line), "%-34s %10zu %10zu %12.6f %10.6f %12s\n",
                    g.name.c_str(), g.size, g.latent, g.probability, g.alpha, "control");
    } else {
      std::snprintf(line, sizeof(line), "%-34s %10zu %10zu %12.6f %10.6f %12.6f\n",
                    g.name.c_str(), g.size, g.latent, g.probability, g.alpha, g.elasticity);
    }
    out += line;
  }
  return out;
}

struct DatasetArgs {
  std::string edges;
  std::string events;
  std::string cascades;
  std::string embeddings;
  std::int64_t window = 10800;
};

void add_dataset_options(CLI::App* cmd, DatasetArgs& args) {
  cmd->add_option("--edges", args.edges, "edge list (tsv)")->required();
  cmd->add_option("--events", args.events, "event log (jsonl)")->required();
  cmd->add_option("--cascades", args.cascades, "cascade file (jsonl)")->required();
  cmd->add_option("--embeddings", args.embeddings, "node embedding file")->required();
  cmd->add_option("--window", args.window, "observation window seconds");
}

struct LoadedDataset {
  SocialGraph graph;
  std::vector<Event> events;
  std::vector<Cascade> cascades;
  ModelDataset ds;
};

LoadedDataset load_dataset(const DatasetArgs& args, Run& run) {
  run.input(args.edges);
  run.input(args.events);
  run.input(args.cascades);
  run.input(args.embeddings);
  LoadedDataset d;
  d.graph = load_graph_file(args.edges);
  d.events = load_events_file(args.events);
  {
    std::ifstream in(args.cascades);
    if (!in) throw DataError("cannot open cascades: " + args.cascades);
    d.cascades = load_cascades(in);
  }
  EmbeddingMap emb = load_embeddings_file(args.embeddings);
  HashedProjectionEmbedder provider;
  d.ds = build_model_dataset(d.graph, d.cascades, d.events, emb, provider, args.window);
  return d;
}

std::vector<int> subset_from_split(const json& split, const std::string& name,
                                   const ModelDataset& ds) {
  std::map<MessageId, int> index;
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    index[ds.items[i].message_id] = static_cast<int>(i);
  }
  std::vector<int> out;
  if (!split.contains(name)) throw DataError("split file has no '" + name + "' list");
  for (const auto& v : split.at(name)) {
    MessageId id = v.get<MessageId>();
    auto it = index.find(id);
    if (it == index.end()) {
      throw DataError("split cascade " + std::to_string(id) + " not in dataset");
    }
    out.push_back(it->second);
  }
  return out;
}

std::vector<int> all_indices(const ModelDataset& ds) {
  std::vector<int> idx(ds.items.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return idx;
}

json split_to_json(const SplitIndices& split, const ModelDataset& ds, std::uint64_t seed) {
  auto ids = [&](const std::vector<int>& part) {
    std::vector<MessageId> out;
    out.reserve(part.size());
    for (int i : part) out.push_back(ds.items[static_cast<std::size_t>(i)].message_id);
    return out;
  };
  json j;
  j["seed"] = seed;
  j["train"] = ids(split.train);
  j["val"] = ids(split.val);
  j["test"] = ids(split.test);
  return j;
}

std::string report_jsonl(const SubsetMetrics& sm) {
  std::string out = metrics_to_json("all", sm.all).dump() + "\n";
  out += metrics_to_json("preventive", sm.preventive).dump() + "\n";
  out += metrics_to_json("other", sm.other).dump() + "\n";
  return out;
}

int cmd_synth(const std::string& scenario_path, int count, const std::string& out_dir,
              std::optional<std::uint64_t> seed_override) {
  Run run("synth", out_dir);
  run.input(scenario_path);
  SpilloverScenario sc = scenario_from_json(load_json_file(scenario_path));
  if (seed_override) sc.seed = *seed_override;
  run.seed(sc.seed);
  json cfg = scenario_to_json(sc);
  cfg["count"] = count;
  run.config(cfg);

  SynthResult res = simulate_cascades(sc, count);

  {
    std::ofstream out(run.path("edges.tsv"), std::ios::binary);
    save_graph(out, res.graph);
    run.output(run.path("edges.tsv"));
  }
  {
    std::ofstream out(run.path("events.jsonl"), std::ios::binary);
    save_events(out, res.events);
    run.output(run.path("events.jsonl"));
  }
  write_text_file(run.path("groups.txt"), planted_table(res.groups));
  run.output(run.path("groups.txt"));
  {
    json groups = json::array();
    for (const PlantedGroup& g : res.groups) {
      json row;
      row["name"] = g.name;
      row["composition"] = g.composition;
      row["users"] = g.size;
      row["latent"] = g.latent;
      row["probability"] = g.probability;
      row["alpha"] = g.alpha;
      row["elasticity"] = g.elasticity;
      row["control"] = g.control;
      groups.push_back(row);
    }
    json j;
    j["groups"] = groups;
    j["preventive_roots"] = res.preventive_roots;
    j["other_roots"] = res.other_roots;
    j["has_hub"] = res.has_hub;
    if (res.has_hub) j["hub"] = res.hub;
    write_text_file(run.path("groups.json"), j.dump(2) + "\n");
    run.output(run.path("groups.json"));
  }
  run.finish();
  std::cout << "synth: " << res.graph.node_count() << " users, " << res.events.size()
            << " events, " << res.groups.size() << " exposure groups\n";
  return 0;
}

int cmd_ingest(const std::string& edges_path, const std::string& events_path,
               const std::string& lexicon_path, const IngestOptions& opt,
               const std::string& out_dir) {
  Run run("ingest", out_dir);
  run.input(edges_path);
  run.input(events_path);
  TopicLexicon lex = TopicLexicon::defaults();
  if (!lexicon_path.empty()) {
    run.input(lexicon_path);
    lex = TopicLexicon::load_file(lexicon_path);
  }
  json cfg;
  cfg["min_posts"] = opt.min_posts;
  cfg["min_cascade_size"] = opt.min_cascade_size;
  cfg["window"] = opt.window;
  run.config(cfg);

  SocialGraph raw = load_graph_file(edges_path);
  std::vector<Event> events = load_events_file(events_path);
  IngestResult res = ingest(raw, std::move(events), lex, opt);

  {
    std::ofstream out(run.path("graph.tsv"), std::ios::binary);
    save_graph(out, res.graph);
    run.output(run.path("graph.tsv"));
  }
  {
    std::ofstream out(run.path("events.jsonl"), std::ios::binary);
    save_events(out, res.events);
    run.output(run.path("events.jsonl"));
  }
  {
    std::ofstream out(run.path("cascades.jsonl"), std::ios::binary);
    save_cascades(out, res.cascades);
    run.output(run.path("cascades.jsonl"));
  }
  json summary;
  summary["nodes_loaded"] = res.nodes_loaded;
  summary["nodes_after_wcc"] = res.nodes_after_wcc;
  summary["nodes_after_prune"] = res.nodes_after_prune;
  summary["events_loaded"] = res.events_loaded;
  summary["events_kept"] = res.events_kept;
  summary["cascades_total"] = res.summary.total_built;
  summary["cascades_retained"] = res.summary.retained;
  summary["cascades_dropped"] = res.summary.dropped;
  summary["skipped_orphans"] = res.summary.skipped_orphans;
  summary["duplicate_adoptions"] = res.summary.duplicate_adoptions;
  summary["skewed_retweets"] = res.summary.skewed_retweets;
  summary["mean_retained_size"] = res.summary.mean_retained_size;
  write_text_file(run.path("summary.json"), summary.dump(2) + "\n");
  run.output(run.path("summary.json"));
  run.finish();
  std::cout << "ingest: " << res.graph.node_count() << " users, " << res.events.size()
            << " events, " << res.cascades.size() << " cascades (mean size "
            << res.summary.mean_retained_size << ")\n";
  return 0;
}

int cmd_spillover(const std::string& edges_path, const std::string& events_path,
                  const std::string& lexicon_path, std::vector<std::string> topics,
                  const std::string& out_dir) {
  Run run("spillover", out_dir);
  run.input(edges_path);
  run.input(events_path);
  TopicLexicon lex = TopicLexicon::defaults();
  if (!lexicon_path.empty()) {
    run.input(lexicon_path);
    lex = TopicLexicon::load_file(lexicon_path);
  }
  if (topics.empty()) {
    for (const std::string& t : lex.topics()) {
      if (t != kPreventiveTopic) topics.push_back(t);
    }
  }
  json cfg;
  cfg["topics"] = topics;
  run.config(cfg);

  SocialGraph g = load_graph_file(edges_path);
  std::vector<Event> events = load_events_file(events_path);
  std::size_t dropped = 0;
  events = filter_events_to_graph(events, g, &dropped);
  tag_events(events, lex);
  ExposureProfile exposure = compute_exposure(g, events);
  std::set<UserId> adopters = preventive_adopters(events);

  std::vector<ElasticityTable> tables;
  tables.push_back(build_elasticity_table(
      "composition", partition_by_composition(exposure, topics), adopters));
  for (const std::string& t : topics) {
    tables.push_back(
        build_elasticity_table("topic " + t, split_by_topic(exposure, t), adopters));
  }

  std::string text;
  json rows = json::array();
  for (const ElasticityTable& table : tables) {
    text += format_elasticity_table(table);
    text += "\n";
    for (const GroupStats& gs : table.rows) {
      json row;
      row["division"] = table.division;
      row["group"] = gs.name;
      row["users"] = gs.users;
      row["adopters"] = gs.adopters;
      if (gs.alpha) row["alpha"] = *gs.alpha;
      if (gs.elasticity) row["elasticity"] = *gs.elasticity;
      row["control"] = gs.control;
      rows.push_back(row);
    }
  }
  write_text_file(run.path("elasticity.txt"), text);
  run.output(run.path("elasticity.txt"));
  std::string jsonl;
  for (const auto& row : rows) jsonl += row.dump() + "\n";
  write_text_file(run.path("elasticity.jsonl"), jsonl);
  run.output(run.path("elasticity.jsonl"));
  run.finish();
  std::cout << text;
  return 0;
}

int cmd_embed(const std::string& edges_path, const DeepWalkParams& params,
              const std::string& out_dir) {
  Run run("embed", out_dir);
  run.input(edges_path);
  json cfg;
  cfg["dim"] = params.dim;
  cfg["walks_per_node"] = params.walks_per_node;
  cfg["walk_length"] = params.walk_length;
  cfg["window"] = params.window;
  cfg["negatives"] = params.negatives;
  cfg["epochs"] = params.epochs;
  cfg["learning_rate"] = params.learning_rate;
  run.config(cfg);
  run.seed(params.seed);

  SocialGraph g = load_graph_file(edges_path);
  std::vector<UserId> isolated;
  EmbeddingMap emb = deepwalk_embed(g, params, &isolated);
  if (!isolated.empty()) {
    std::cerr << "warning: " << isolated.size()
              << " isolated node(s) received zero embeddings\n";
  }
  {
    std::ofstream out(run.path("node_embeddings.txt"), std::ios::binary);
    save_embeddings(out, emb);
    run.output(run.path("node_embeddings.txt"));
  }
  run.finish();
  std::cout << "embed: " << emb.size() << " nodes, dim " << params.dim << "\n";
  return 0;
}

int cmd_train(const DatasetArgs& data, const std::string& config_path, TrainConfig cfg,
              const std::vector<std::string>& overridden, std::uint64_t split_seed,
              const std::string& out_dir) {
  Run run("train", out_dir);
  if (!config_path.empty()) {
    run.input(config_path);
    TrainConfig from_file = train_config_from_json(load_json_file(config_path));
    // CLI flags the user actually passed win over the file.
    TrainConfig merged = from_file;
    for (const std::string& name : overridden) {
      if (name == "kind") merged.kind = cfg.kind;
      else if (name == "layers") merged.layers = cfg.layers;
      else if (name == "hidden") merged.hidden = cfg.hidden;
      else if (name == "msg-hidden") merged.msg_hidden = cfg.msg_hidden;
      else if (name == "lr") merged.learning_rate = cfg.learning_rate;
      else if (name == "theta") merged.theta = cfg.theta;
      else if (name == "lambda") merged.lambda = cfg.lambda;
      else if (name == "batch") merged.batch_size = cfg.batch_size;
      else if (name == "epochs") merged.max_epochs = cfg.max_epochs;
      else if (name == "patience") merged.patience = cfg.patience;
      else if (name == "clip") merged.clip_norm = cfg.clip_norm;
      else if (name == "seed") merged.seed = cfg.seed;
    }
    cfg = merged;
  }
  run.seed(cfg.seed);
  json jcfg = train_config_to_json(cfg);
  jcfg["split_seed"] = split_seed;
  jcfg["window"] = data.window;
  run.config(jcfg);

  LoadedDataset d = load_dataset(data, run);
  SplitIndices split = split_dataset(d.ds.items.size(), split_seed);
  TrainResult result = train_model(d.ds, split, cfg);

  result.model.save_file(run.path("model.ckpt").string());
  run.output(run.path("model.ckpt"));

  std::string hist;
  for (const EpochRecord& r : result.history) {
    json row;
    row["epoch"] = r.epoch;
    row["train_loss"] = r.train_loss;
    row["train_mrse"] = r.train_mrse;
    row["val_mrse"] = r.val_mrse;
    hist += row.dump() + "\n";
  }
  write_text_file(run.path("history.jsonl"), hist);
  run.output(run.path("history.jsonl"));

  write_text_file(run.path("split.json"), split_to_json(split, d.ds, split_seed).dump(2) + "\n");
  run.output(run.path("split.json"));

  const std::vector<int>& eval_idx = split.test.empty() ? split.train : split.test;
  std::vector<double> preds = predict_items(result.model, d.ds, eval_idx);
  SubsetMetrics sm = evaluate_subsets(preds, d.ds, eval_idx);
  char head[160];
  std::snprintf(head, sizeof(head), "model %s  best epoch %d  best val MRSE %.6f  (%s set)",
                to_string(cfg.kind).c_str(), result.best_epoch, result.best_val_mrse,
                split.test.empty() ? "train" : "test");
  std::string table = metrics_table(head, sm);
  write_text_file(run.path("report.txt"), table);
  run.output(run.path("report.txt"));
  write_text_file(run.path("report.jsonl"), report_jsonl(sm));
  run.output(run.path("report.jsonl"));
  run.finish();
  std::cout << table;
  return 0;
}

enum class BaselineKind { none, copy_nt, ridge, seismic };

BaselineKind parse_baseline(const std::string& s) {
  if (s.empty()) return BaselineKind::none;
  if (s == "copy-nt") return BaselineKind::copy_nt;
  if (s == "ridge") return BaselineKind::ridge;
  if (s == "seismic") return BaselineKind::seismic;
  throw ConfigError("unknown baseline: " + s);
}

int cmd_evaluate(const DatasetArgs& data, const std::string& checkpoint,
                 const std::string& baseline_name, const std::string& split_path,
                 const std::string& subset_name, double ridge_l2,
                 const std::string& out_dir) {
  Run run("evaluate", out_dir);
  BaselineKind baseline = parse_baseline(baseline_name);
  if ((baseline == BaselineKind::none) == checkpoint.empty()) {
    throw ConfigError("evaluate: pass exactly one of --checkpoint or --baseline");
  }
  json cfg;
  cfg["subset"] = subset_name;
  if (!checkpoint.empty()) cfg["checkpoint"] = checkpoint;
  if (baseline != BaselineKind::none) cfg["baseline"] = baseline_name;
  if (baseline == BaselineKind::ridge) cfg["ridge_l2"] = ridge_l2;
  cfg["window"] = data.window;
  run.config(cfg);

  LoadedDataset d = load_dataset(data, run);

  json split;
  if (!split_path.empty()) {
    run.input(split_path);
    split = load_json_file(split_path);
  }
  std::vector<int> subset;
  if (subset_name == "all") {
    subset = all_indices(d.ds);
  } else {
    if (split_path.empty()) {
      throw ConfigError("evaluate: --subset " + subset_name + " needs --split");
    }
    subset = subset_from_split(split, subset_name, d.ds);
  }
  if (subset.empty()) throw DataError("evaluate: empty subset");

  std::vector<ObservedCascade> observed;
  observed.reserve(d.cascades.size());
  for (const Cascade& c : d.cascades) observed.push_back(observe(c, data.window));

  std::string label;
  std::vector<double> preds;
  if (baseline == BaselineKind::none) {
    run.input(checkpoint);
    PopularityModel model = PopularityModel::load_file(checkpoint);
    label = "model " + to_string(model.config().kind);
    preds = predict_items(model, d.ds, subset);
  } else if (baseline == BaselineKind::copy_nt) {
    label = "baseline copy-nt";
    for (int i : subset) preds.push_back(d.ds.items[static_cast<std::size_t>(i)].n_obs);
  } else if (baseline == BaselineKind::ridge) {
    if (split_path.empty()) throw ConfigError("evaluate: ridge baseline needs --split");
    label = "baseline ridge";
    std::vector<int> train_idx = subset_from_split(split, "train", d.ds);
    if (train_idx.size() < 2) throw DataError("evaluate: ridge needs 2+ training cascades");
    Eigen::MatrixXd Xtr(static_cast<Eigen::Index>(train_idx.size()), kNumCascadeFeatures);
    Eigen::VectorXd ytr(static_cast<Eigen::Index>(train_idx.size()));
    for (std::size_t i = 0; i < train_idx.size(); ++i) {
      const auto idx = static_cast<std::size_t>(train_idx[i]);
      Xtr.row(static_cast<Eigen::Index>(i)) = cascade_features(observed[idx], d.graph);
      ytr(static_cast<Eigen::Index>(i)) = d.ds.items[idx].n_final;
    }
    RidgeModel rm = ridge_fit(Xtr, ytr, ridge_l2);
    Eigen::MatrixXd Xev(static_cast<Eigen::Index>(subset.size()), kNumCascadeFeatures);
    for (std::size_t i = 0; i < subset.size(); ++i) {
      Xev.row(static_cast<Eigen::Index>(i)) =
          cascade_features(observed[static_cast<std::size_t>(subset[i])], d.graph);
    }
    Eigen::VectorXd p = ridge_predict_clipped(rm, Xev);
    preds.assign(p.data(), p.data() + p.size());
  } else {
    label = "baseline seismic";
    std::map<UserId, double> followers = follower_counts_from_graph(d.graph);
    for (int i : subset) {
      const ObservedCascade& oc = observed[static_cast<std::size_t>(i)];
      const double now = static_cast<double>(oc.root_time) + static_cast<double>(data.window);
      preds.push_back(seismic_predict(oc, followers, now));
    }
  }

  SubsetMetrics sm = evaluate_subsets(preds, d.ds, subset);
  std::string table = metrics_table(label + "  (" + subset_name + " set)", sm);
  write_text_file(run.path("report.txt"), table);
  run.output(run.path("report.txt"));
  write_text_file(run.path("report.jsonl"), report_jsonl(sm));
  run.output(run.path("report.jsonl"));

  std::string pred_lines;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    const EvalItem& item = d.ds.items[static_cast<std::size_t>(subset[i])];
    json row;
    row["message_id"] = item.message_id;
    row["observed"] = item.n_obs;
    row["final"] = item.n_final;
    row["predicted"] = preds[i];
    row["preventive"] = item.is_pm;
    pred_lines += row.dump() + "\n";
  }
  write_text_file(run.path("predictions.jsonl"), pred_lines);
  run.output(run.path("predictions.jsonl"));
  run.finish();
  std::cout << table;
  return 0;
}

int cmd_predict(const DatasetArgs& data, const std::string& checkpoint,
                std::vector<MessageId> message_ids, const std::string& out_dir) {
  Run run("predict", out_dir);
  run.config({{"checkpoint", checkpoint}, {"window", data.window}});
  LoadedDataset d = load_dataset(data, run);
  run.input(checkpoint);
  PopularityModel model = PopularityModel::load_file(checkpoint);

  std::vector<int> subset;
  if (message_ids.empty()) {
    subset = all_indices(d.ds);
  } else {
    std::map<MessageId, int> index;
    for (std::size_t i = 0; i < d.ds.items.size(); ++i) {
      index[d.ds.items[i].message_id] = static_cast<int>(i);
    }
    for (MessageId id : message_ids) {
      auto it = index.find(id);
      if (it == index.end()) {
        throw DataError("predict: cascade " + std::to_string(id) + " not in dataset");
      }
      subset.push_back(it->second);
    }
  }

  std::vector<double> preds = predict_items(model, d.ds, subset);
  std::string lines;
  char buf[160];
  for (std::size_t i = 0; i < subset.size(); ++i) {
    const EvalItem& item = d.ds.items[static_cast<std::size_t>(subset[i])];
    json row;
    row["message_id"] = item.message_id;
    row["observed"] = item.n_obs;
    row["predicted"] = preds[i];
    lines += row.dump() + "\n";
    std::snprintf(buf, sizeof(buf), "%llu observed %.0f predicted %.3f\n",
                  static_cast<unsigned long long>(item.message_id), item.n_obs, preds[i]);
    std::cout << buf;
  }
  write_text_file(run.path("predictions.jsonl"), lines);
  run.output(run.path("predictions.jsonl"));
  run.finish();
  return 0;
}

int cmd_sweep(const DatasetArgs& data, const std::string& config_path,
              const std::string& out_dir) {
  Run run("sweep", out_dir);
  run.input(config_path);
  json sweep = load_json_file(config_path);
  run.config(sweep);

  std::vector<std::string> kinds =
      json_get<std::vector<std::string>>(sweep, "kinds", {"gcn"});
  std::vector<double> lrs =
      json_get<std::vector<double>>(sweep, "learning_rates", {0.01});
  std::vector<double> thetas = json_get<std::vector<double>>(sweep, "thetas", {1e-4});
  std::vector<int> batches = json_get<std::vector<int>>(sweep, "batch_sizes", {10});
  std::vector<int> layer_grid = json_get<std::vector<int>>(sweep, "layers", {2});
  json base_fields = sweep;
  base_fields.erase("layers");  // grid axis, not the scalar TrainConfig field
  TrainConfig base = train_config_from_json(base_fields);
  const auto split_seed = json_get<std::uint64_t>(sweep, "split_seed", base.seed);

  LoadedDataset d = load_dataset(data, run);
  SplitIndices split = split_dataset(d.ds.items.size(), split_seed);

  std::string text;
  char line[256];
  std::snprintf(line, sizeof(line), "%-8s %3s %9s %9s %6s %10s %10s %10s %9s\n", "kind", "k",
                "lr", "theta", "batch", "val MRSE", "test MRSE", "test MAPE", "WroPerc");
  text += line;
  std::string jsonl;

  struct Best {
    double val = 0;
    json row;
  };
  std::map<std::string, Best> best_per_kind;

  for (const std::string& kind_name : kinds) {
    for (int k : layer_grid) {
      for (double lr : lrs) {
        for (double theta : thetas) {
          for (int batch : batches) {
            TrainConfig cfg = base;
            cfg.kind = parse_model_kind(kind_name);
            cfg.layers = k;
            cfg.learning_rate = lr;
            cfg.theta = theta;
            cfg.batch_size = batch;
            TrainResult result = train_model(d.ds, split, cfg);
            const std::vector<int>& eval_idx =
                split.test.empty() ? split.train : split.test;
            std::vector<double> preds = predict_items(result.model, d.ds, eval_idx);
            SubsetMetrics sm = evaluate_subsets(preds, d.ds, eval_idx);
            std::snprintf(line, sizeof(line),
                          "%-8s %3d %9.5f %9.2e %6d %10.6f %10.6f %10.6f %9.2f\n",
                          kind_name.c_str(), k, lr, theta, batch, result.best_val_mrse,
                          sm.all.mrse, sm.all.mape, sm.all.wro_perc);
            text += line;
            json row;
            row["kind"] = kind_name;
            row["layers"] = k;
            row["learning_rate"] = lr;
            row["theta"] = theta;
            row["batch_size"] = batch;
            row["best_epoch"] = result.best_epoch;
            row["val_mrse"] = result.best_val_mrse;
            row["test"] = {{"all", metrics_to_json("all", sm.all)},
                           {"preventive", metrics_to_json("preventive", sm.preventive)},
                           {"other", metrics_to_json("other", sm.other)}};
            jsonl += row.dump() + "\n";
            auto it = best_per_kind.find(kind_name);
            if (it == best_per_kind.end() || result.best_val_mrse < it->second.val) {
              best_per_kind[kind_name] = {result.best_val_mrse, row};
            }
          }
        }
      }
    }
  }

  text += "\nbest per kind (by validation MRSE):\n";
  json best = json::object();
  for (const auto& [kind_name, entry] : best_per_kind) {
    const json& r = entry.row;
    std::snprintf(line, sizeof(line), "%-8s %3d %9.5f %9.2e %6d %10.6f %10.6f\n",
                  kind_name.c_str(), r["layers"].get<int>(),
                  r["learning_rate"].get<double>(), r["theta"].get<double>(),
                  r["batch_size"].get<int>(), r["val_mrse"].get<double>(),
                  r["test"]["all"]["mrse"].get<double>());
    text += line;
    best[kind_name] = r;
  }
  write_text_file(run.path("sweep.txt"), text);
  run.output(run.path("sweep.txt"));
  write_text_file(run.path("sweep.jsonl"), jsonl);
  run.output(run.path("sweep.jsonl"));
  write_text_file(run.path("best.json"), best.dump(2) + "\n");
  run.output(run.path("best.json"));
  run.finish();
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spillover-aware cascade popularity toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic scenario");
  std::string synth_scenario, synth_out = "synth-out";
  int synth_count = 1;
  std::uint64_t synth_seed = 0;
  synth->add_option("--scenario", synth_scenario, "scenario json")->required();
  synth->add_option("--count", synth_count, "root messages to simulate");
  synth->add_option("--out", synth_out, "output directory");
  auto* synth_seed_opt =
      synth->add_option("--seed", synth_seed, "override scenario seed")->envname("SPILLCAST_SEED");

  // ingest
  auto* ing = app.add_subcommand("ingest", "filter a graph and build cascades");
  std::string ing_edges, ing_events, ing_lex, ing_out = "ingest-out";
  IngestOptions ing_opt;
  ing->add_option("--edges", ing_edges, "edge list (tsv)")->required();
  ing->add_option("--events", ing_events, "event log (jsonl)")->required();
  ing->add_option("--lexicon", ing_lex, "topic lexicon file");
  ing->add_option("--min-posts", ing_opt.min_posts, "activity threshold");
  ing->add_option("--min-size", ing_opt.min_cascade_size, "cascade size threshold");
  ing->add_option("--window", ing_opt.window, "observation window seconds");
  ing->add_option("--out", ing_out, "output directory");

  // spillover
  auto* sp = app.add_subcommand("spillover", "measure exposure spillover");
  std::string sp_edges, sp_events, sp_lex, sp_out = "spillover-out";
  std::vector<std::string> sp_topics;
  sp->add_option("--edges", sp_edges, "edge list (tsv)")->required();
  sp->add_option("--events", sp_events, "event log (jsonl)")->required();
  sp->add_option("--lexicon", sp_lex, "topic lexicon file");
  sp->add_option("--topics", sp_topics, "exposure topics (default: non-preventive)");
  sp->add_option("--out", sp_out, "output directory");

  // embed
  auto* emb = app.add_subcommand("embed", "learn node embeddings");
  std::string emb_edges, emb_out = "embed-out";
  DeepWalkParams dw;
  emb->add_option("--edges", emb_edges, "edge list (tsv)")->required();
  emb->add_option("--dim", dw.dim, "embedding width");
  emb->add_option("--walks", dw.walks_per_node, "walks per node");
  emb->add_option("--length", dw.walk_length, "walk length");
  emb->add_option("--window", dw.window, "context window");
  emb->add_option("--negatives", dw.negatives, "negative samples");
  emb->add_option("--epochs", dw.epochs, "training epochs");
  emb->add_option("--lr", dw.learning_rate, "learning rate");
  emb->add_option("--seed", dw.seed, "rng seed")->envname("SPILLCAST_SEED");
  emb->add_option("--out", emb_out, "output directory");

  // train
  auto* tr = app.add_subcommand("train", "train a popularity model");
  DatasetArgs tr_data;
  add_dataset_options(tr, tr_data);
  std::string tr_config, tr_kind = "gcn", tr_out = "train-out";
  TrainConfig tr_cfg;
  std::uint64_t tr_split_seed = 0;
  bool tr_split_seed_set = false;
  tr->add_option("--config", tr_config, "train config json");
  tr->add_option("--kind", tr_kind, "gcn|gat|cgnn|se-gcn|se-gat|se-cgnn");
  tr->add_option("--layers", tr_cfg.layers, "propagation depth k");
  tr->add_option("--hidden", tr_cfg.hidden, "hidden width");
  tr->add_option("--msg-hidden", tr_cfg.msg_hidden, "message projection width");
  tr->add_option("--lr", tr_cfg.learning_rate, "learning rate");
  tr->add_option("--theta", tr_cfg.theta, "parameter-norm penalty");
  tr->add_option("--lambda", tr_cfg.lambda, "user-loss weight");
  tr->add_option("--batch", tr_cfg.batch_size, "mini-batch size");
  tr->add_option("--epochs", tr_cfg.max_epochs, "max epochs");
  tr->add_option("--patience", tr_cfg.patience, "early-stop patience");
  tr->add_option("--clip", tr_cfg.clip_norm, "gradient clip norm");
  tr->add_option("--seed", tr_cfg.seed, "rng seed")->envname("SPILLCAST_SEED");
  tr->add_option("--split-seed", tr_split_seed, "dataset split seed (default: --seed)");
  tr->add_option("--out", tr_out, "output directory");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "score a model or baseline");
  DatasetArgs ev_data;
  add_dataset_options(ev, ev_data);
  std::string ev_ckpt, ev_baseline, ev_split, ev_subset = "all", ev_out = "evaluate-out";
  double ev_ridge_l2 = 1e-3;
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint");
  ev->add_option("--baseline", ev_baseline, "copy-nt|ridge|seismic");
  ev->add_option("--split", ev_split, "split json from train");
  ev->add_option("--subset", ev_subset, "all|train|val|test");
  ev->add_option("--ridge-l2", ev_ridge_l2, "ridge penalty");
  ev->add_option("--out", ev_out, "output directory");

  // predict
  auto* pr = app.add_subcommand("predict", "predict final sizes");
  DatasetArgs pr_data;
  add_dataset_options(pr, pr_data);
  std::string pr_ckpt, pr_out = "predict-out";
  std::vector<MessageId> pr_ids;
  pr->add_option("--checkpoint", pr_ckpt, "model checkpoint")->required();
  pr->add_option("--message-id", pr_ids, "cascade ids (default: all)");
  pr->add_option("--out", pr_out, "output directory");

  // sweep
  auto* sw = app.add_subcommand("sweep", "grid-search hyperparameters");
  DatasetArgs sw_data;
  add_dataset_options(sw, sw_data);
  std::string sw_config, sw_out = "sweep-out";
  sw->add_option("--config", sw_config, "sweep config json")->required();
  sw->add_option("--out", sw_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) {
      std::optional<std::uint64_t> seed;
      if (synth_seed_opt->count() > 0) seed = synth_seed;
      return cmd_synth(synth_scenario, synth_count, synth_out, seed);
    }
    if (ing->parsed()) return cmd_ingest(ing_edges, ing_events, ing_lex, ing_opt, ing_out);
    if (sp->parsed()) return cmd_spillover(sp_edges, sp_events, sp_lex, sp_topics, sp_out);
    if (emb->parsed()) return cmd_embed(emb_edges, dw, emb_out);
    if (tr->parsed()) {
      tr_cfg.kind = parse_model_kind(tr_kind);
      std::vector<std::string> overridden;
      for (const char* name : {"kind", "layers", "hidden", "msg-hidden", "lr", "theta",
                               "lambda", "batch", "epochs", "patience", "clip", "seed"}) {
        if (tr->count(std::string("--") + name) > 0) overridden.emplace_back(name);
      }
      tr_split_seed_set = tr->count("--split-seed") > 0;
      const std::uint64_t split_seed = tr_split_seed_set ? tr_split_seed : tr_cfg.seed;
      return cmd_train(tr_data, tr_config, tr_cfg, overridden, split_seed, tr_out);
    }
    if (ev->parsed()) {
      return cmd_evaluate(ev_data, ev_ckpt, ev_baseline, ev_split, ev_subset, ev_ridge_l2,
                          ev_out);
    }
    if (pr->parsed()) return cmd_predict(pr_data, pr_ckpt, pr_ids, pr_out);
    if (sw->parsed()) return cmd_sweep(sw_data, sw_config, sw_out);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
