#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "json.hpp"
#include "ragraph/hash.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "ragraph_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(RAGRAPH_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

const std::string& sbm_data() {
  static const std::string file = [] {
    const auto f = path("sbm.jsonl");
    EXPECT_EQ(run("--seed 1 --out " + f + " gen --kind sbm --nodes-per-class 20"), 0);
    return f;
  }();
  return file;
}

std::string slurp(const std::string& file) { return ragraph::read_file(file); }

std::vector<std::string> lines(const std::string& file) {
  std::ifstream in(file);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("--out " + path("x") + " build-store --data /nonexistent/data.jsonl"), 2);
  EXPECT_EQ(run("no-such-command"), 2);
  EXPECT_EQ(run("--out " + path("bad.jsonl") + " gen --kind nope"), 2);
  {
    std::ofstream bad(path("broken.jsonl"));
    bad << "{\"kind\":\"node\",\"id\":1,\"x\":[1]}\n{oops\n";
  }
  EXPECT_EQ(run("--out " + path("broken_store") + " build-store --data " + path("broken.jsonl")), 2);
  const auto store = path("exit_store");
  ASSERT_EQ(run("--seed 3 --out " + store + " build-store --data " + sbm_data()), 0);
  // Store built with seed 3 but evaluated with seed 4.
  EXPECT_EQ(run("--seed 4 --out " + path("exit_eval") + " eval --data " + sbm_data() + " --store " + store), 3);
  EXPECT_EQ(run("--seed 3 --out " + path("exit_eval") + " eval --data " + sbm_data() + " --store " + store), 0);
}

TEST(Cli, BuildStoreIsByteDeterministic) {
  const auto a = path("det_a");
  const auto b = path("det_b");
  ASSERT_EQ(run("--seed 7 --out " + a + " build-store --data " + sbm_data()), 0);
  ASSERT_EQ(run("--seed 7 --threads 3 --out " + b + " build-store --data " + sbm_data()), 0);
  for (const char* f : {"manifest.json", "keys.bin", "values.bin", "graphs.jsonl", "encoder.bin"}) {
    EXPECT_EQ(slurp(a + "/" + f), slurp(b + "/" + f)) << f;
  }
  auto ma = nlohmann::json::parse(slurp(a + "/run_manifest.json"));
  auto mb = nlohmann::json::parse(slurp(b + "/run_manifest.json"));
  EXPECT_EQ(ma["manifest_hash"], mb["manifest_hash"]);
}

TEST(Cli, EvalResultIsDeterministic) {
  const auto a = path("eval_a");
  const auto b = path("eval_b");
  ASSERT_EQ(run("--seed 2 --out " + a + " eval --data " + sbm_data() + " --seeds 2"), 0);
  ASSERT_EQ(run("--seed 2 --out " + b + " eval --data " + sbm_data() + " --seeds 2"), 0);
  EXPECT_EQ(slurp(a + "/result.json"), slurp(b + "/result.json"));
  EXPECT_EQ(slurp(a + "/results.csv"), slurp(b + "/results.csv"));
  auto r = nlohmann::json::parse(slurp(a + "/result.json"));
  EXPECT_EQ(r["task"], "node");
  EXPECT_EQ(r["per_seed"].size(), 2u);
  EXPECT_EQ(lines(a + "/results.csv").size(), 4u);  // header, 2 seeds, mean
  const auto c = path("eval_c");
  ASSERT_EQ(run("--seed 2 --out " + c + " eval --data " + sbm_data() + " --seeds 2 --mode baseline"), 0);
  EXPECT_NE(nlohmann::json::parse(slurp(c + "/result.json"))["manifest_hash"], r["manifest_hash"]);
}

TEST(Cli, TuneThenEvalWithDecoder) {
  const auto store = path("tune_store");
  const auto dec = path("tuned/decoder.bin");
  ASSERT_EQ(run("--seed 5 --out " + store + " build-store --data " + sbm_data()), 0);
  ASSERT_EQ(run("--seed 5 --out " + dec + " tune --data " + sbm_data() + " --store " + store + " --epochs 5 --noise"), 0);
  auto side = nlohmann::json::parse(slurp(dec + ".json"));
  EXPECT_EQ(side["loss_trace"].size(), 5u);
  EXPECT_EQ(side["mode"], "nft");
  EXPECT_EQ(run("--seed 5 --out " + path("tuned_eval") + " eval --data " + sbm_data() + " --store " + store +
                " --decoder " + dec + " --mode nft"),
            0);
  EXPECT_EQ(run("--seed 5 --out " + path("inspect.json") + " inspect --store " + store + " --entry 0"), 0);
  EXPECT_EQ(run("--seed 5 --out " + path("retrieve.json") + " retrieve --store " + store + " --data " + sbm_data() +
                " --node 3 --topk 4 --bottom-k 2"),
            0);
  auto hits = nlohmann::json::parse(slurp(path("retrieve.json")));
  ASSERT_EQ(hits.size(), 6u);
  EXPECT_EQ(hits[0]["rank"], 1);
  EXPECT_EQ(hits[4]["list"], "bottom");
  EXPECT_GE(hits[0]["score"].get<double>(), hits[3]["score"].get<double>());
  EXPECT_LE(hits[4]["score"].get<double>(), hits[5]["score"].get<double>());
}

TEST(Cli, RetrieveFromQueryFile) {
  const auto store = path("query_store");
  ASSERT_EQ(run("--seed 6 --out " + store + " build-store --data " + sbm_data()), 0);
  {
    std::ofstream q(path("query.jsonl"));
    q << "{\"kind\":\"node\",\"id\":0,\"t\":0,\"x\":[1,0,0,0,0,0,0,0]}\n"
      << "{\"kind\":\"node\",\"id\":1,\"t\":0,\"x\":[0,1,0,0,0,0,0,0]}\n"
      << "{\"kind\":\"edge\",\"src\":0,\"dst\":1,\"t\":0,\"w\":1}\n";
  }
  const auto base = " retrieve --store " + store + " --query " + path("query.jsonl") + " --topk 5";
  ASSERT_EQ(run("--out " + path("q1.json") + base + " --weights 0.05,0.05,0.05,0.85 --eta 0.1"), 0);
  ASSERT_EQ(run("--out " + path("q2.json") + base), 0);
  EXPECT_EQ(slurp(path("q1.json")), slurp(path("q2.json")));
  auto hits = nlohmann::json::parse(slurp(path("q1.json")));
  ASSERT_EQ(hits.size(), 5u);
  for (const auto& h : hits) {
    for (const char* key : {"rank", "entry", "score", "master", "tau"}) EXPECT_TRUE(h.contains(key)) << key;
  }
  EXPECT_EQ(run("--out " + path("q3.json") + base + " --weights 1,2"), 2);
  EXPECT_EQ(run("--out " + path("q3.json") + " retrieve --store " + store), 2);
}

TEST(Cli, SweepIsCompleteAndResumable) {
  const auto out = path("sweep");
  ASSERT_EQ(run("--seed 1 --out " + out + " sweep --data " + sbm_data() + " --ks 1,2 --topks 1,5,10,15,30,50"), 0);
  const auto csv = out + "/sweep.csv";
  const auto first = slurp(csv);
  auto rows = lines(csv);
  ASSERT_EQ(rows.size(), 1u + 2u * 6u);
  EXPECT_EQ(rows[0].rfind("cell_hash,k,top_k,seed,task,mode,accuracy", 0), 0u);
  std::vector<std::string> topks;
  for (std::size_t i = 1; i <= 6; ++i) {
    std::stringstream ss(rows[i]);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    topks.push_back(cells[2]);
    EXPECT_FALSE(cells[6].empty());
  }
  EXPECT_EQ(topks, (std::vector<std::string>{"1", "5", "10", "15", "30", "50"}));
  // Drop the last row and rerun: only that cell is recomputed.
  {
    std::ofstream trunc(csv, std::ios::trunc);
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) trunc << rows[i] << '\n';
  }
  ASSERT_EQ(run("--seed 1 --out " + out + " sweep --data " + sbm_data() + " --ks 1,2 --topks 1,5,10,15,30,50"), 0);
  EXPECT_EQ(slurp(csv), first);
  auto manifest = nlohmann::json::parse(slurp(out + "/run_manifest.json"));
  EXPECT_EQ(manifest["timings_ms"]["skipped_cells"], 11);
}
