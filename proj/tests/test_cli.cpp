// End-to-end checks of the command line tool: exit codes, artifact layout,
// determinism, and agreement between emitted reports and recomputed values.
// The binary under test arrives as argv[1].
#define DOCTEST_CONFIG_IMPLEMENT
#define DOCTEST_CONFIG_SUPER_FAST_ASSERTS
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g_cli;
fs::path g_work;

int run_cli(const std::string& args, std::string* output = nullptr) {
  const fs::path log = g_work / "cmd_output.txt";
  std::string cmd = g_cli + " " + args + " > " + log.string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  if (output) {
    std::ifstream in(log);
    std::ostringstream buf;
    buf << in.rdbuf();
    *output = buf.str();
  }
  if (WIFEXITED(rc)) return WEXITSTATUS(rc);
  return -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<json> parse_jsonl(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::vector<json> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(json::parse(line));
  }
  return rows;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

fs::path per_user_scenario() {
  json sc;
  sc["graph"] = {{"kind", "small-world"}, {"n", 300}, {"k", 4}, {"rewire", 0.1}};
  sc["topics"] = {"unemployment", "panic-buying"};
  sc["post_prob"] = {{"unemployment", 0.15}, {"panic-buying", 0.15}};
  sc["p0"] = 0.2;
  sc["boost"] = {{"unemployment", 0.3}, {"panic-buying", 0.1}};
  sc["rounds"] = 2;
  sc["round_seconds"] = 600;
  sc["adoption_mode"] = "per-user";
  sc["seed"] = 5;
  fs::path p = g_work / "scenario_user.json";
  write_file(p, sc.dump(2));
  return p;
}

fs::path per_message_scenario() {
  json sc;
  sc["graph"] = {{"kind", "preferential-attachment"}, {"n", 160}, {"m", 2}, {"mutual", true}};
  sc["topics"] = {"unemployment"};
  sc["post_prob"] = {{"unemployment", 0.2}};
  sc["p0"] = 0.12;
  sc["boost"] = {{"unemployment", 0.25}};
  sc["rounds"] = 3;
  sc["round_seconds"] = 600;
  sc["pm_fraction"] = 0.5;
  sc["nonpm_adopt"] = 0.12;
  sc["adoption_mode"] = "per-message";
  sc["seed"] = 11;
  fs::path p = g_work / "scenario_msg.json";
  write_file(p, sc.dump(2));
  return p;
}

std::string dataset_args(const fs::path& ing, const fs::path& emb) {
  return " --edges " + (ing / "graph.tsv").string() + " --events " +
         (ing / "events.jsonl").string() + " --cascades " + (ing / "cascades.jsonl").string() +
         " --embeddings " + (emb / "node_embeddings.txt").string();
}

}  // namespace

TEST_CASE("usage errors map to the documented exit codes") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("synth --help") == 0);
  CHECK(run_cli("") == 2);                  // a subcommand is required
  CHECK(run_cli("mystery") == 2);           // unknown subcommand
  CHECK(run_cli("synth --bogus x") == 2);   // unknown flag
  CHECK(run_cli("synth") == 2);             // missing required --scenario
}

TEST_CASE("synth writes deterministic artifacts and honours seed overrides") {
  fs::path sc = per_user_scenario();
  fs::path a = g_work / "synth_a";
  fs::path b = g_work / "synth_b";
  std::string out;
  REQUIRE(run_cli("synth --scenario " + sc.string() + " --out " + a.string(), &out) == 0);
  CHECK(out.find("exposure groups") != std::string::npos);
  REQUIRE(run_cli("synth --scenario " + sc.string() + " --out " + b.string()) == 0);
  for (const char* name : {"edges.tsv", "events.jsonl", "groups.json", "groups.txt"}) {
    CHECK(slurp(a / name) == slurp(b / name));
  }
  CHECK(fs::exists(a / "manifest.json"));
  json manifest = json::parse(slurp(a / "manifest.json"));
  CHECK(manifest["subcommand"] == "synth");
  CHECK(manifest["seed"] == 5);
  CHECK(manifest["inputs"].size() == 1);

  // a different seed changes the output; the env var matches the flag
  fs::path c = g_work / "synth_seed_flag";
  fs::path d = g_work / "synth_seed_env";
  REQUIRE(run_cli("synth --scenario " + sc.string() + " --seed 99 --out " + c.string()) == 0);
  CHECK(slurp(a / "events.jsonl") != slurp(c / "events.jsonl"));
  std::string env_cmd = "SPILLCAST_SEED=99 " + g_cli + " synth --scenario " + sc.string() +
                        " --out " + d.string() + " > /dev/null 2>&1";
  REQUIRE(std::system(env_cmd.c_str()) == 0);
  CHECK(slurp(c / "events.jsonl") == slurp(d / "events.jsonl"));
}

TEST_CASE("synth rejects broken scenarios with config or data errors") {
  CHECK(run_cli("synth --scenario " + (g_work / "missing.json").string()) == 3);

  fs::path garbled = g_work / "garbled.json";
  write_file(garbled, "{not json");
  CHECK(run_cli("synth --scenario " + garbled.string() + " --out " +
                (g_work / "never").string()) == 3);

  json bad;
  bad["p0"] = 1.5;
  fs::path badp = g_work / "bad_p0.json";
  write_file(badp, bad.dump());
  CHECK(run_cli("synth --scenario " + badp.string() + " --out " +
                (g_work / "never").string()) == 2);

  // per-user mode requires exactly one root message
  fs::path sc = per_user_scenario();
  CHECK(run_cli("synth --scenario " + sc.string() + " --count 3 --out " +
                (g_work / "never").string()) == 2);
}

TEST_CASE("spillover recovers the planted composition table") {
  fs::path syn = g_work / "synth_a";
  fs::path out = g_work / "spill";
  REQUIRE(run_cli("spillover --edges " + (syn / "edges.tsv").string() + " --events " +
                  (syn / "events.jsonl").string() +
                  " --topics unemployment panic-buying --out " + out.string()) == 0);

  json planted = json::parse(slurp(syn / "groups.json"));
  std::vector<json> rows = parse_jsonl(out / "elasticity.jsonl");
  std::size_t matched = 0;
  for (const json& grp : planted["groups"]) {
    for (const json& row : rows) {
      if (row["division"] != "composition" || row["group"] != grp["name"]) continue;
      ++matched;
      CHECK(row["users"].get<std::size_t>() == grp["users"].get<std::size_t>());
      CHECK(row["adopters"].get<std::size_t>() == grp["latent"].get<std::size_t>());
      CHECK(row["alpha"].get<double>() == doctest::Approx(grp["alpha"].get<double>()).epsilon(1e-9));
      if (!grp["control"].get<bool>()) {
        CHECK(row["elasticity"].get<double>() ==
              doctest::Approx(grp["elasticity"].get<double>()).epsilon(1e-9));
      }
    }
  }
  CHECK(matched == planted["groups"].size());

  // per-topic splits come out alongside the composition table
  bool saw_topic_split = false;
  for (const json& row : rows) {
    if (row["division"] == "topic unemployment" && row["group"] == "exposed") {
      saw_topic_split = true;
    }
  }
  CHECK(saw_topic_split);

  fs::path out2 = g_work / "spill2";
  REQUIRE(run_cli("spillover --edges " + (syn / "edges.tsv").string() + " --events " +
                  (syn / "events.jsonl").string() +
                  " --topics unemployment panic-buying --out " + out2.string()) == 0);
  CHECK(slurp(out / "elasticity.jsonl") == slurp(out2 / "elasticity.jsonl"));
}

TEST_CASE("the per-message pipeline runs end to end deterministically") {
  fs::path sc = per_message_scenario();
  fs::path syn = g_work / "msg_syn";
  REQUIRE(run_cli("synth --scenario " + sc.string() + " --count 80 --out " + syn.string()) == 0);

  fs::path ing = g_work / "msg_ing";
  REQUIRE(run_cli("ingest --edges " + (syn / "edges.tsv").string() + " --events " +
                  (syn / "events.jsonl").string() + " --min-posts 0 --min-size 3 --out " +
                  ing.string()) == 0);
  json summary = json::parse(slurp(ing / "summary.json"));
  CHECK(summary["cascades_retained"].get<int>() >= 20);

  fs::path emb = g_work / "msg_emb";
  REQUIRE(run_cli("embed --edges " + (ing / "graph.tsv").string() +
                  " --dim 8 --walks 3 --length 20 --epochs 2 --seed 7 --out " +
                  emb.string()) == 0);
  fs::path emb2 = g_work / "msg_emb2";
  REQUIRE(run_cli("embed --edges " + (ing / "graph.tsv").string() +
                  " --dim 8 --walks 3 --length 20 --epochs 2 --seed 7 --out " +
                  emb2.string()) == 0);
  CHECK(slurp(emb / "node_embeddings.txt") == slurp(emb2 / "node_embeddings.txt"));
  fs::path emb3 = g_work / "msg_emb3";
  REQUIRE(run_cli("embed --edges " + (ing / "graph.tsv").string() +
                  " --dim 8 --walks 3 --length 20 --epochs 2 --seed 8 --out " +
                  emb3.string()) == 0);
  CHECK(slurp(emb / "node_embeddings.txt") != slurp(emb3 / "node_embeddings.txt"));

  const std::string data = dataset_args(ing, emb);
  const std::string train_flags =
      " --kind gcn --layers 2 --hidden 8 --epochs 4 --batch 8 --lr 0.01 --seed 3";
  fs::path tr = g_work / "msg_train";
  fs::path tr2 = g_work / "msg_train2";
  REQUIRE(run_cli("train" + data + train_flags + " --out " + tr.string()) == 0);
  REQUIRE(run_cli("train" + data + train_flags + " --out " + tr2.string()) == 0);
  for (const char* name : {"model.ckpt", "history.jsonl", "split.json", "report.jsonl"}) {
    CHECK(slurp(tr / name) == slurp(tr2 / name));
  }
  CHECK(parse_jsonl(tr / "history.jsonl").size() <= 4);

  json split = json::parse(slurp(tr / "split.json"));
  CHECK(split["train"].size() >= split["test"].size());
  CHECK(split["train"].size() + split["val"].size() + split["test"].size() ==
        summary["cascades_retained"].get<std::size_t>());
}

TEST_CASE("evaluate reports match values recomputed from its predictions") {
  fs::path ing = g_work / "msg_ing";
  fs::path emb = g_work / "msg_emb";
  fs::path tr = g_work / "msg_train";
  const std::string data = dataset_args(ing, emb);

  fs::path ev = g_work / "eval_copy";
  REQUIRE(run_cli("evaluate" + data + " --baseline copy-nt --subset all --out " +
                  ev.string()) == 0);
  std::vector<json> preds = parse_jsonl(ev / "predictions.jsonl");
  REQUIRE(!preds.empty());
  double mrse = 0, mape = 0, wro = 0;
  for (const json& row : preds) {
    CHECK(row["predicted"].get<double>() == row["observed"].get<double>());
    const double rel = (row["predicted"].get<double>() - row["final"].get<double>()) /
                       row["final"].get<double>();
    mrse += rel * rel;
    mape += std::fabs(rel);
    if (std::fabs(rel) >= 0.5) wro += 1.0;
  }
  const auto m = static_cast<double>(preds.size());
  mrse /= m;
  mape /= m;
  wro = 100.0 * wro / m;
  std::vector<json> report = parse_jsonl(ev / "report.jsonl");
  REQUIRE(report.size() == 3);
  CHECK(report[0]["set"] == "all");
  CHECK(report[0]["count"].get<std::size_t>() == preds.size());
  CHECK(report[0]["mrse"].get<double>() == doctest::Approx(mrse).epsilon(1e-12));
  CHECK(report[0]["mape"].get<double>() == doctest::Approx(mape).epsilon(1e-12));
  CHECK(report[0]["wro_perc"].get<double>() == doctest::Approx(wro).epsilon(1e-12));

  // baselines never predict below the observed prefix size
  fs::path sev = g_work / "eval_seismic";
  REQUIRE(run_cli("evaluate" + data + " --baseline seismic --subset all --out " +
                  sev.string()) == 0);
  for (const json& row : parse_jsonl(sev / "predictions.jsonl")) {
    CHECK(row["predicted"].get<double>() >= row["observed"].get<double>() - 1e-9);
  }
  fs::path rev = g_work / "eval_ridge";
  REQUIRE(run_cli("evaluate" + data + " --baseline ridge --split " +
                  (tr / "split.json").string() + " --subset test --out " +
                  rev.string()) == 0);
  for (const json& row : parse_jsonl(rev / "predictions.jsonl")) {
    CHECK(row["predicted"].get<double>() >= row["observed"].get<double>() - 1e-9);
  }

  // a trained checkpoint evaluates cleanly on the test subset
  fs::path mev = g_work / "eval_model";
  REQUIRE(run_cli("evaluate" + data + " --checkpoint " + (tr / "model.ckpt").string() +
                  " --split " + (tr / "split.json").string() + " --subset test --out " +
                  mev.string()) == 0);
  std::vector<json> mrep = parse_jsonl(mev / "report.jsonl");
  CHECK(mrep[0]["count"].get<std::size_t>() ==
        json::parse(slurp(tr / "split.json"))["test"].size());
}

TEST_CASE("predictions from a checkpoint clamp at the observed size") {
  fs::path ing = g_work / "msg_ing";
  fs::path emb = g_work / "msg_emb";
  fs::path tr = g_work / "msg_train";
  fs::path out = g_work / "pred";
  REQUIRE(run_cli("predict" + dataset_args(ing, emb) + " --checkpoint " +
                  (tr / "model.ckpt").string() + " --out " + out.string()) == 0);
  std::vector<json> rows = parse_jsonl(out / "predictions.jsonl");
  REQUIRE(!rows.empty());
  for (const json& row : rows) {
    CHECK(row["predicted"].get<double>() >= row["observed"].get<double>() - 1e-9);
  }
}

TEST_CASE("sweep trains the grid and tracks the best row per kind") {
  fs::path ing = g_work / "msg_ing";
  fs::path emb = g_work / "msg_emb";
  const std::string data = dataset_args(ing, emb);

  json grid;
  grid["kinds"] = {"gcn", "se-gcn"};
  grid["learning_rates"] = {0.05};
  grid["thetas"] = {1e-6};
  grid["batch_sizes"] = {8};
  grid["layers"] = {2, 3};
  grid["hidden"] = 4;
  grid["msg_hidden"] = 4;
  grid["max_epochs"] = 3;
  grid["patience"] = 3;
  grid["lambda"] = 1.0;
  grid["seed"] = 3;
  grid["split_seed"] = 9;
  fs::path cfg = g_work / "sweep_grid.json";
  write_file(cfg, grid.dump(2) + "\n");

  fs::path sw = g_work / "msg_sweep";
  REQUIRE(run_cli("sweep" + data + " --config " + cfg.string() + " --out " + sw.string()) == 0);

  std::vector<json> rows = parse_jsonl(sw / "sweep.jsonl");
  REQUIRE(rows.size() == 4);  // 2 kinds x 2 layer depths
  for (const json& row : rows) {
    CHECK(row["theta"].get<double>() == doctest::Approx(1e-6));
    CHECK(row["batch_size"].get<int>() == 8);
    CHECK((row["layers"] == 2 || row["layers"] == 3));
    for (const char* set : {"all", "preventive", "other"}) {
      REQUIRE(row["test"].contains(set));
      const json& m = row["test"][set];
      // metric fields are omitted for empty subsets
      CHECK(m.contains("mrse") == (m["count"].get<int>() > 0));
      CHECK(m.contains("wro_perc") == (m["count"].get<int>() > 0));
    }
    CHECK(row["test"]["all"]["count"].get<int>() > 0);
  }

  json best = json::parse(slurp(sw / "best.json"));
  REQUIRE(best.size() == 2);
  for (const std::string kind : {"gcn", "se-gcn"}) {
    REQUIRE(best.contains(kind));
    double min_val = 1e300;
    for (const json& row : rows) {
      if (row["kind"] == kind) min_val = std::min(min_val, row["val_mrse"].get<double>());
    }
    CHECK(best[kind]["val_mrse"].get<double>() == doctest::Approx(min_val));
  }

  json manifest = json::parse(slurp(sw / "manifest.json"));
  CHECK(manifest["subcommand"] == "sweep");
  CHECK(manifest["outputs"].size() == 3);

  fs::path sw2 = g_work / "msg_sweep2";
  REQUIRE(run_cli("sweep" + data + " --config " + cfg.string() + " --out " + sw2.string()) == 0);
  CHECK(slurp(sw / "sweep.jsonl") == slurp(sw2 / "sweep.jsonl"));
  CHECK(slurp(sw / "best.json") == slurp(sw2 / "best.json"));
}

TEST_CASE("evaluate, predict, and train validate their inputs") {
  fs::path ing = g_work / "msg_ing";
  fs::path emb = g_work / "msg_emb";
  fs::path tr = g_work / "msg_train";
  const std::string data = dataset_args(ing, emb);
  fs::path sink = g_work / "sink";

  std::string out;
  CHECK(run_cli("evaluate" + data + " --baseline copy-nt --checkpoint " +
                (tr / "model.ckpt").string() + " --out " + sink.string(), &out) == 2);
  CHECK(out.find("config error") != std::string::npos);
  CHECK(run_cli("evaluate" + data + " --baseline bogus --out " + sink.string()) == 2);
  CHECK(run_cli("evaluate" + data + " --baseline copy-nt --subset test --out " +
                sink.string()) == 2);  // subset needs --split
  CHECK(run_cli("evaluate" + data + " --baseline ridge --subset all --out " +
                sink.string()) == 2);  // ridge needs --split
  CHECK(run_cli("predict" + data + " --checkpoint " + (g_work / "missing.ckpt").string() +
                " --out " + sink.string(), &out) == 3);
  CHECK(out.find("data error") != std::string::npos);
  CHECK(run_cli("predict" + data + " --checkpoint " + (tr / "model.ckpt").string() +
                " --message-id 999999999 --out " + sink.string()) == 3);
  CHECK(run_cli("train" + data + " --layers 0 --out " + sink.string()) == 2);

  // a divergent learning rate surfaces as a numeric error
  CHECK(run_cli("train" + data + " --kind gcn --layers 2 --hidden 8 --epochs 2 --batch 8 "
                "--lr 1e308 --seed 3 --out " + sink.string(), &out) == 4);
  CHECK(out.find("numeric error") != std::string::npos);
}

int main(int argc, char** argv) {
  if (argc > 1 && argv[1][0] != '-') {
    g_cli = argv[1];
    // hide the path argument from doctest's option parser
    for (int i = 1; i + 1 < argc; ++i) argv[i] = argv[i + 1];
    --argc;
  }
  if (g_cli.empty()) {
    std::fprintf(stderr, "usage: test_cli <path-to-cli> [doctest options]\n");
    return 1;
  }
  std::error_code ec;
  g_work = fs::temp_directory_path() / "spillcast_cli_tests";
  fs::remove_all(g_work, ec);
  fs::create_directories(g_work);

  doctest::Context ctx;
  ctx.applyCommandLine(argc, argv);
  return ctx.run();
}
