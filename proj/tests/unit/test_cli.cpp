#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "moincl/config.hpp"
#include "moincl/metrics.hpp"
#include "moincl_tools/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = moincl::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("moincl_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const std::string kFixture = std::string(MOINCL_FIXTURES) + "/published_step_scores.csv";

// Value of a "run,kind,task,step,value" row.
double csv_value(const std::string& csv, const std::string& prefix) {
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind(prefix, 0) == 0) return std::stod(line.substr(line.rfind(',') + 1));
  }
  FAIL("row not found: " << prefix);
  return 0.0;
}

}  // namespace

TEST_CASE("replay reproduces published values") {
  const auto text = run({"replay-metrics", "--input", kFixture});
  REQUIRE(text.code == 0);
  CHECK(text.out.find("avg_forget 8.93%") != std::string::npos);

  const auto csv = run({"replay-metrics", "--input", kFixture, "--csv"});
  REQUIRE(csv.code == 0);
  CHECK(std::abs(csv_value(csv.out, "MoInCL/Order2,avg_forget") - 8.93) < 0.01);
  CHECK(std::abs(csv_value(csv.out, "MoInCL/Order2,avg_cider") - 51.13) < 0.01);
  CHECK(std::abs(csv_value(csv.out, "MoInCL/Order2,avg_acc") - 45.22) < 0.01);
  CHECK(std::abs(csv_value(csv.out, "LwF/Order2,forget,1") - 91.20) < 0.01);
  CHECK(std::abs(csv_value(csv.out, "Fine-tuning/Order2,forget,1") - 93.02) < 0.01);
  CHECK(std::abs(csv_value(csv.out, "MoInCL/Order1,avg_forget") - 14.21) < 0.01);

  const auto all = run({"replay-metrics", "--input", kFixture, "--csv", "--averaging", "ALL_TASKS"});
  CHECK(std::abs(csv_value(all.out, "MoInCL/Order2,avg_forget") - 8.928023712652745 * 5 / 6) < 1e-9);
}

TEST_CASE("replay of a run without drops reports zero forgetting") {
  const auto dir = scratch("nodrop");
  write(dir / "flat.csv",
        "method,order,task,name,type,step,score\n"
        "M,O,1,a,CAP,1,50\nM,O,1,a,CAP,2,50\nM,O,2,b,QA,2,30\n");
  const auto r = run({"replay-metrics", "--input", (dir / "flat.csv").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("avg_forget 0.00%") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("replay names the task with a missing diagonal") {
  const auto dir = scratch("nodiag");
  write(dir / "gap.csv",
        "method,order,task,name,type,step,score\n"
        "M,O,1,a,CAP,1,50\nM,O,1,a,CAP,2,40\nM,O,2,b,QA,3,30\n"
        "M,O,1,a,CAP,3,40\nM,O,3,c,QA,3,30\n");
  const auto r = run({"replay-metrics", "--input", (dir / "gap.csv").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("missing diagonal score s/2/2 for task b") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("usage errors exit non-zero") {
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"report", "--bogus"}).code == 2);
  CHECK(run({"eval"}).code == 2);
  CHECK(run({"report", "--scores", "/nonexistent/file.json"}).code == 1);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({}).code == 2);
}

TEST_CASE("plots are written for every run") {
  const auto dir = scratch("plot");
  const auto r = run({"plot", "--scores", kFixture, "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "scores_MoInCL_Order2.svg"));
  CHECK(fs::exists(dir / "forgetting_MoInCL_Order2.svg"));
  std::ifstream in(dir / "scores_MoInCL_Order2.svg");
  std::string head;
  std::getline(in, head);
  CHECK(head.find("<svg") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("gen-data, train, eval and report on a small run") {
  const auto dir = scratch("pipeline");
  moincl::RunConfig cfg;
  cfg.task_order = moincl::parse_task_order("IMG-CAP,IMG-QA", 8);
  cfg.dims = moincl::ModelDims{16, 1, 2, 48, 4, 8};
  cfg.sizes = moincl::SplitSizes{8, 2, 3};
  cfg.epochs_per_task = 1;
  cfg.batch_size = 4;
  cfg.instruction_count = 64;
  cfg.pretrain_steps = 2;
  cfg.eval_max_len = 8;
  moincl::save_run_config(cfg, dir / "cfg.json");

  const auto gen = run({"gen-data", "--config", (dir / "cfg.json").string(), "--out", (dir / "data").string()});
  REQUIRE(gen.code == 0);
  CHECK(fs::exists(dir / "data" / "config.json"));

  const auto train = run({"train", "--config", (dir / "cfg.json").string(), "--out", (dir / "run").string(),
                          "--data", (dir / "data").string(), "--method", "MOINCL", "--checkpoints"});
  REQUIRE(train.code == 0);
  REQUIRE(fs::exists(dir / "run" / "score_matrix.json"));
  CHECK(fs::exists(dir / "run" / "train_log.jsonl"));

  std::ifstream in(dir / "run" / "score_matrix.json");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto scores = moincl::ScoreMatrix::from_json(text);

  const auto ev = run({"eval", "--checkpoint", (dir / "run" / "checkpoint_task2.ckpt").string(), "--task-index", "1",
                       "--data", (dir / "data").string()});
  REQUIRE(ev.code == 0);
  CHECK(std::stod(ev.out) == scores.at(1, 2));

  const auto early = run({"eval", "--checkpoint", (dir / "run" / "checkpoint_task1.ckpt").string(), "--task-index",
                          "2"});
  CHECK(early.code == 1);

  const auto rep = run({"report", "--scores", (dir / "run" / "score_matrix.json").string()});
  CHECK(rep.code == 0);
  CHECK(rep.out.find("S2") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("output root honours the environment") {
  ::setenv("MOINCL_OUT", "/tmp/somewhere", 1);
  CHECK(moincl::cli::default_output_root() == "/tmp/somewhere");
  ::unsetenv("MOINCL_OUT");
  CHECK(moincl::cli::default_output_root() == "moincl_out");
}
