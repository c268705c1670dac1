#include "moincl_tools/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "moincl/checkpoint.hpp"
#include "moincl/error.hpp"
#include "moincl/metrics.hpp"
#include "moincl/syndata.hpp"
#include "moincl/trainer.hpp"
#include "moincl_tools/plot.hpp"

namespace fs = std::filesystem;

namespace moincl::cli {
namespace {

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
  if (!os) throw Error("short write to " + path.string());
}

fs::path out_dir_or_default(const std::string& out, const std::string& verb) {
  return out.empty() ? fs::path(default_output_root()) / verb : fs::path(out);
}

RunConfig load_config_or_default(const std::string& path) {
  if (!path.empty()) return load_run_config(path);
  RunConfig cfg;
  cfg.task_order = default_task_order(cfg.sizes.train);
  return cfg;
}

std::vector<TaskDataset> read_datasets(const RunConfig& cfg, const fs::path& dir) {
  std::vector<TaskDataset> out;
  for (const auto& t : cfg.task_order) out.push_back(read_dataset(t, dir / dataset_filename(t)));
  return out;
}

ForgetAveraging averaging_from(const std::string& s) { return parse_forget_averaging(s); }

// Score matrices from a canonical JSON file or a step-score CSV.
std::map<std::string, ScoreMatrix> load_runs(const fs::path& path) {
  if (path.extension() == ".csv") return read_step_scores_file(path);
  return {{path.stem().string(), ScoreMatrix::from_json(read_file(path))}};
}

void require_diagonal(const std::string& run, const ScoreMatrix& m) {
  for (int i = 1; i <= m.size(); ++i) {
    if (!m.get(i, i)) {
      throw Error(run + ": missing diagonal score s/" + std::to_string(i) + "/" + std::to_string(i) +
                  " for task " + m.tasks()[static_cast<std::size_t>(i - 1)].name);
    }
  }
}

std::string safe_name(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

}  // namespace

std::string default_output_root() {
  const char* env = std::getenv("MOINCL_OUT");
  return env != nullptr && *env != '\0' ? std::string(env) : std::string("moincl_out");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Modality-inconsistent continual learning toolkit", "moincl"};
  app.require_subcommand(1);

  std::string config_path, out_path, method_name, data_dir, checkpoint_path, scores_path,
      input_path, averaging = "EXCLUDE_FINAL", order_spec, vocab_path;
  std::optional<std::uint64_t> seed;
  bool checkpoints = false, csv = false;
  int task_index = 0;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic task datasets");
  gen->add_option("--config", config_path, "Run config (JSON)");
  gen->add_option("--seed", seed, "Data seed");
  gen->add_option("--order", order_spec, "Task order, e.g. IMG-CAP,VID-QA");
  gen->add_option("--out", out_path, "Output directory");

  auto* train = app.add_subcommand("train", "Train over a task order and write the score matrix");
  train->add_option("--config", config_path, "Run config (JSON)");
  train->add_option("--out", out_path, "Output directory");
  train->add_option("--seed", seed, "Training seed");
  train->add_option("--method", method_name, "FINETUNE, LWF, EWC, EWF or MOINCL");
  train->add_option("--order", order_spec, "Task order, e.g. IMG-CAP,VID-QA");
  train->add_option("--data", data_dir, "Read datasets written by gen-data");
  train->add_flag("--checkpoints", checkpoints, "Write a checkpoint after every task");

  auto* eval = app.add_subcommand("eval", "Score one task's test split with a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  eval->add_option("--task-index", task_index, "1-based task index")->required();
  eval->add_option("--config", config_path, "Run config (default: config.json next to the checkpoint)");
  eval->add_option("--vocab", vocab_path, "Vocabulary (default: vocab.txt next to the checkpoint)");
  eval->add_option("--data", data_dir, "Read datasets written by gen-data");

  auto* report = app.add_subcommand("report", "Print tables for a score matrix or step-score CSV");
  report->add_option("--scores", scores_path, "score_matrix.json or step-score CSV")->required();
  report->add_option("--averaging", averaging, "EXCLUDE_FINAL or ALL_TASKS");
  report->add_flag("--csv", csv, "CSV instead of aligned text");

  auto* replay = app.add_subcommand("replay-metrics", "Recompute forgetting and averages from step scores");
  replay->add_option("--input", input_path, "CSV: method,order,task,name,type,step,score")->required();
  replay->add_option("--averaging", averaging, "EXCLUDE_FINAL or ALL_TASKS");
  replay->add_flag("--csv", csv, "CSV instead of aligned text");

  auto* plot = app.add_subcommand("plot", "Write SVG charts for a score matrix or step-score CSV");
  plot->add_option("--scores", scores_path, "score_matrix.json or step-score CSV")->required();
  plot->add_option("--out", out_path, "Output directory");
  plot->add_option("--averaging", averaging, "EXCLUDE_FINAL or ALL_TASKS");

  std::vector<const char*> argv{"moincl"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      RunConfig cfg = load_config_or_default(config_path);
      if (seed) cfg.data_seed = *seed;
      if (!order_spec.empty()) cfg.task_order = parse_task_order(order_spec, cfg.sizes.train);
      cfg.validate();
      const fs::path dir = out_dir_or_default(out_path, "data");
      fs::create_directories(dir);
      for (const auto& ds : generate_benchmark(cfg.task_order, cfg.sizes, cfg.data_seed)) {
        write_dataset(ds, dir / dataset_filename(ds.descriptor));
        out << dir / dataset_filename(ds.descriptor) << '\n';
      }
      save_run_config(cfg, dir / "config.json");
      return 0;
    }

    if (*train) {
      RunConfig cfg = load_config_or_default(config_path);
      if (seed) cfg.seed = *seed;
      if (!method_name.empty()) cfg.method = parse_method(method_name);
      if (!order_spec.empty()) cfg.task_order = parse_task_order(order_spec, cfg.sizes.train);
      cfg.validate();
      RunOptions opts;
      opts.out_dir = out_dir_or_default(out_path, "train");
      opts.checkpoints = checkpoints;
      std::vector<TaskDataset> data;
      if (!data_dir.empty()) {
        data = read_datasets(cfg, data_dir);
        opts.datasets = &data;
      }
      opts.on_task_done = [&](int task, const ScoreMatrix& m) {
        out << "task " << task << " (" << m.tasks()[static_cast<std::size_t>(task - 1)].name << ") done\n";
      };
      const auto result = run_order(cfg, opts);
      out << format_report({{std::string(to_string(cfg.method)), result.scores}}, cfg.forget_averaging);
      out << "wrote " << (*opts.out_dir / "score_matrix.json").string() << '\n';
      return 0;
    }

    if (*eval) {
      const fs::path ckpt(checkpoint_path);
      const fs::path dir = ckpt.parent_path();
      const RunConfig cfg =
          load_run_config(config_path.empty() ? dir / "config.json" : fs::path(config_path));
      const auto vocab = Vocabulary::load(vocab_path.empty() ? dir / "vocab.txt" : fs::path(vocab_path));
      const auto loaded = load_checkpoint(ckpt);
      if (loaded.manifest.vocab_fingerprint != vocab.fingerprint()) {
        throw Error("vocabulary does not match the checkpoint");
      }
      if (task_index < 1 || task_index > static_cast<int>(cfg.task_order.size())) {
        throw Error("task index " + std::to_string(task_index) + " outside the task order");
      }
      if (task_index > loaded.manifest.task_index) {
        throw Error("task " + std::to_string(task_index) + " was not trained by step " +
                    std::to_string(loaded.manifest.task_index));
      }
      const auto& task = cfg.task_order[static_cast<std::size_t>(task_index - 1)];
      const TaskDataset ds = data_dir.empty()
                                 ? generate_benchmark(cfg.task_order, cfg.sizes, cfg.data_seed)
                                       [static_cast<std::size_t>(task_index - 1)]
                                 : read_dataset(task, fs::path(data_dir) / dataset_filename(task));
      out << nlohmann::json(evaluate_task(loaded.state, ds, vocab, cfg.eval_max_len)).dump() << '\n';
      return 0;
    }

    if (*report) {
      const auto runs = load_runs(scores_path);
      out << (csv ? format_report_csv(runs, averaging_from(averaging))
                  : format_report(runs, averaging_from(averaging)));
      return 0;
    }

    if (*replay) {
      const auto runs = read_step_scores_file(input_path);
      for (const auto& [name, m] : runs) {
        require_diagonal(name, m);
        aggregate(m, averaging_from(averaging));
      }
      out << (csv ? format_report_csv(runs, averaging_from(averaging))
                  : format_report(runs, averaging_from(averaging)));
      return 0;
    }

    if (*plot) {
      const auto runs = load_runs(scores_path);
      const fs::path dir = out_dir_or_default(out_path, "plots");
      fs::create_directories(dir);
      for (const auto& [name, m] : runs) {
        const std::string stem = safe_name(name);
        write_file(dir / ("scores_" + stem + ".svg"), score_lines_svg(m, name));
        out << (dir / ("scores_" + stem + ".svg")).string() << '\n';
        if (m.complete()) {
          write_file(dir / ("forgetting_" + stem + ".svg"),
                     forgetting_bars_svg(aggregate(m, averaging_from(averaging)), m, name));
          out << (dir / ("forgetting_" + stem + ".svg")).string() << '\n';
        }
      }
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace moincl::cli
