#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynlm/cli.hpp"
#include "dynlm/common.hpp"
#include "dynlm/io.hpp"
#include "dynlm/manifest.hpp"
#include "dynlm/sha256.hpp"
#include "support/temp_dir.hpp"

using namespace dynlm;
using testsupport::TempDir;

namespace {

int run(std::vector<std::string> args) { return cli_dispatch(args); }

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  nlohmann::json j;
  in >> j;
  return j;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("the full pipeline runs end to end with valid manifests") {
  TempDir tmp;
  const std::string train_traj = tmp.file("train.traj");
  const std::string test_traj = tmp.file("test.traj");
  const std::string grid_path = tmp.file("grid.json");
  const std::string train_tok = tmp.file("train.tok");
  const std::string test_tok = tmp.file("test.tok");
  const std::string run_dir = tmp.file("model");
  const std::string gen_tok = tmp.file("gen.tok");

  REQUIRE(run({"simulate", "--preset", "henon", "--split", "train", "--count", "3",
               "--length", "300", "--seed", "7", "--out", train_traj}) == 0);
  REQUIRE(run({"simulate", "--preset", "henon", "--split", "test", "--count", "2",
               "--length", "120", "--seed", "8", "--out", test_traj}) == 0);
  REQUIRE(run({"fit-grid", "--data", train_traj, "--n", "8", "--out", grid_path}) == 0);
  REQUIRE(run({"encode", "--data", train_traj, "--grid", grid_path, "--out", train_tok}) == 0);
  REQUIRE(run({"encode", "--data", test_traj, "--grid", grid_path, "--out", test_tok}) == 0);

  nlohmann::json cfg;
  cfg["train_tokens"] = train_tok;
  cfg["eval_tokens"] = test_tok;
  cfg["out_dir"] = run_dir;
  cfg["model"] = {{"context", 16}, {"dim", 16},     {"layers", 1},
                  {"heads", 2},    {"dropout", 0.0}};
  cfg["train"] = {{"steps", 30}, {"batch_size", 2}, {"lr", 1e-3},
                  {"seed", 9},   {"eval_interval", 10}};
  const std::string cfg_path = tmp.file("train-config.json");
  write_text(cfg_path, cfg.dump(2));
  REQUIRE(run({"train", "--config", cfg_path}) == 0);
  const std::string ckpt = run_dir + "/final.ckpt";
  CHECK(std::filesystem::exists(ckpt));
  CHECK(std::filesystem::exists(run_dir + "/metrics.csv"));

  // The manifest beside the checkpoint lists every output with its digest.
  const RunManifest manifest = load_manifest(ckpt + ".manifest.json");
  CHECK(manifest.command == "train");
  CHECK_FALSE(manifest.outputs.empty());
  for (const auto& [path, digest] : manifest.outputs) {
    CHECK(sha256_file_hex(path) == digest);
  }
  for (const auto& [path, digest] : manifest.inputs) {
    CHECK(sha256_file_hex(path) == digest);
  }

  REQUIRE(run({"generate", "--checkpoint", ckpt, "--grid", grid_path, "--prefix", test_tok,
               "--prefix-index", "0", "--k", "10", "--new", "50", "--temperature", "0",
               "--observed", train_tok, "--seed", "5", "--out", gen_tok}) == 0);
  const TokenData gen = load_tokens(gen_tok);
  REQUIRE(gen.sequences.size() == 1);
  CHECK(gen.sequences[0].size() == 60);
  const TokenData observed = load_tokens(train_tok);
  std::vector<bool> seen(observed.vocab, false);
  for (const auto& s : observed.sequences) {
    for (TokenId t : s) seen[t] = true;
  }
  for (std::size_t i = 10; i < gen.sequences[0].size(); ++i) {
    CHECK(seen[gen.sequences[0][i]]);
  }

  const std::string w_path = tmp.file("w.json");
  REQUIRE(run({"eval", "wasserstein", "--tokens-a", gen_tok, "--tokens-b", test_tok,
               "--grid", grid_path, "--out", w_path}) == 0);
  const nlohmann::json w = read_json(w_path);
  CHECK(w["exact"].get<bool>());
  CHECK(w["distance"].get<double>() >= 0.0);
  CHECK(w["grid_n"].get<int>() == 8);
  CHECK(w["support_a"].get<std::size_t>() >= 1);
  CHECK(w["support_b"].get<std::size_t>() >= 1);
  CHECK(w["states_b"].get<std::uint64_t>() == 2 * 121);

  const std::string ly_path = tmp.file("lyapunov.json");
  REQUIRE(run({"eval", "lyapunov", "--tokens", train_tok, "--grid", grid_path, "--system",
               "henon", "--n-max", "6", "--fit-lo", "1", "--fit-hi", "6", "--out",
               ly_path}) == 0);
  const nlohmann::json ly = read_json(ly_path);
  CHECK(ly["series"].size() == 6);
  CHECK(ly["fit_lo"].get<int>() == 1);
  CHECK(ly["fit_hi"].get<int>() == 6);
  CHECK(std::isfinite(ly["lambda"].get<double>()));
  const std::string series_csv = read_text(ly_path + ".series.csv");
  CHECK(series_csv.rfind("n,lambda_n,windows\n", 0) == 0);

  for (const std::string& path : {train_traj, grid_path, train_tok, ckpt}) {
    CHECK(run({"inspect", path}) == 0);
  }
}

TEST_CASE("exit codes separate usage, data, and numeric failures") {
  TempDir tmp;
  CHECK(run({"no-such-command"}) == 1);
  CHECK(run({"fit-grid", "--data", tmp.file("x.traj"), "--out", tmp.file("g.json")}) == 1);
  CHECK(run({"encode", "--data", tmp.file("missing.traj"), "--grid", tmp.file("g.json"),
             "--out", tmp.file("t.tok")}) == 2);
  CHECK(run({"simulate", "--preset", "lorenz", "--count", "1", "--length", "10", "--tau",
             "1e9", "--seed", "1", "--out", tmp.file("blow.traj")}) == 3);
}

TEST_CASE("simulate reruns reproduce output digests") {
  TempDir tmp;
  const std::string a = tmp.file("a.traj");
  const std::string b = tmp.file("b.traj");
  const std::vector<std::string> base = {"simulate", "--preset", "henon", "--count", "2",
                                         "--length", "100", "--seed", "42", "--out"};
  auto args_a = base;
  args_a.push_back(a);
  auto args_b = base;
  args_b.push_back(b);
  REQUIRE(run(args_a) == 0);
  REQUIRE(run(args_b) == 0);
  CHECK(sha256_file_hex(a) == sha256_file_hex(b));
  CHECK(sha256_file_hex(a + ".meta.json") == sha256_file_hex(b + ".meta.json"));
  const RunManifest ma = load_manifest(a + ".manifest.json");
  const RunManifest mb = load_manifest(b + ".manifest.json");
  REQUIRE(ma.outputs.size() == mb.outputs.size());
  for (std::size_t i = 0; i < ma.outputs.size(); ++i) {
    CHECK(ma.outputs[i].second == mb.outputs[i].second);
  }
}

TEST_CASE("greedy generation does not depend on the sampling seed") {
  TempDir tmp;
  const std::string traj = tmp.file("d.traj");
  const std::string grid_path = tmp.file("g.json");
  const std::string tok = tmp.file("d.tok");
  REQUIRE(run({"simulate", "--preset", "henon", "--count", "2", "--length", "200",
               "--seed", "3", "--out", traj}) == 0);
  REQUIRE(run({"fit-grid", "--data", traj, "--n", "6", "--out", grid_path}) == 0);
  REQUIRE(run({"encode", "--data", traj, "--grid", grid_path, "--out", tok}) == 0);

  nlohmann::json cfg;
  cfg["train_tokens"] = tok;
  cfg["out_dir"] = tmp.file("m");
  cfg["model"] = {{"context", 16}, {"dim", 16}, {"layers", 1}, {"heads", 2}, {"dropout", 0.0}};
  cfg["train"] = {{"steps", 10}, {"batch_size", 2}, {"lr", 1e-3}, {"seed", 1}};
  const std::string cfg_path = tmp.file("cfg.json");
  write_text(cfg_path, cfg.dump(2));
  REQUIRE(run({"train", "--config", cfg_path}) == 0);

  const std::string g1 = tmp.file("g1.tok");
  const std::string g2 = tmp.file("g2.tok");
  const std::string ckpt = tmp.file("m") + "/final.ckpt";
  REQUIRE(run({"generate", "--checkpoint", ckpt, "--grid", grid_path, "--prefix", tok,
               "--k", "8", "--new", "30", "--temperature", "0", "--seed", "1", "--out",
               g1}) == 0);
  REQUIRE(run({"generate", "--checkpoint", ckpt, "--grid", grid_path, "--prefix", tok,
               "--k", "8", "--new", "30", "--temperature", "0", "--seed", "2", "--out",
               g2}) == 0);
  CHECK(sha256_file_hex(g1) == sha256_file_hex(g2));
}

TEST_CASE("identical distributions have distance exactly zero through the CLI") {
  TempDir tmp;
  const std::string traj = tmp.file("d.traj");
  const std::string grid_path = tmp.file("g.json");
  const std::string tok = tmp.file("d.tok");
  REQUIRE(run({"simulate", "--preset", "henon", "--count", "1", "--length", "150",
               "--seed", "11", "--out", traj}) == 0);
  REQUIRE(run({"fit-grid", "--data", traj, "--n", "10", "--out", grid_path}) == 0);
  REQUIRE(run({"encode", "--data", traj, "--grid", grid_path, "--out", tok}) == 0);
  const std::string w_path = tmp.file("w.json");
  REQUIRE(run({"eval", "wasserstein", "--tokens-a", tok, "--tokens-b", tok, "--grid",
               grid_path, "--out", w_path}) == 0);
  CHECK(read_json(w_path)["distance"].get<double>() == 0.0);
}

TEST_CASE("every protocol emits a runnable plan without executing") {
  TempDir tmp;
  const std::vector<std::string> names = {
      "lorenz-table1",     "rossler-table1",     "henon-table1",     "henon-lyapunov",
      "lorenz-divergence", "rossler-divergence", "rossler-diffcurve"};
  for (const auto& name : names) {
    const std::string dir = tmp.file(name);
    REQUIRE(run({"protocol", name, "--desk-scale", "--out-dir", dir, "--seed", "1"}) == 0);
    const std::string plan = read_text(dir + "/protocol-plan.txt");
    CHECK(plan.find("train") != std::string::npos);
    CHECK(plan.find("simulate") != std::string::npos);
    // Nothing ran: no trajectory data should exist yet.
    CHECK_FALSE(std::filesystem::exists(dir + "/train.traj"));
  }
  CHECK(run({"protocol", "unknown-name", "--out-dir", tmp.file("x")}) == 1);
}

}  // TEST_SUITE
