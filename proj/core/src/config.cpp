#include "moincl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "moincl/error.hpp"
#include "moincl/text.hpp"

namespace moincl {

using nlohmann::json;
using nlohmann::ordered_json;

void ModelDims::validate() const {
  if (embed < 2 || layers < 1 || heads < 1 || context < 8 || rank < 1 || feature < 1) {
    throw Error("model dims must be positive (embed >= 2, context >= 8)");
  }
  if (embed % heads != 0) throw Error("embed must be divisible by heads");
}

std::string_view to_string(QaBackendKind k) {
  return k == QaBackendKind::GrammarOracle ? "GRAMMAR_ORACLE" : "LM_PROMPTED";
}

QaBackendKind parse_qa_backend(std::string_view s) {
  if (s == "GRAMMAR_ORACLE") return QaBackendKind::GrammarOracle;
  if (s == "LM_PROMPTED") return QaBackendKind::LmPrompted;
  throw Error("unknown QA backend: " + std::string(s));
}

std::string_view to_string(ForgetAveraging a) {
  return a == ForgetAveraging::ExcludeFinal ? "EXCLUDE_FINAL" : "ALL_TASKS";
}

ForgetAveraging parse_forget_averaging(std::string_view s) {
  if (s == "EXCLUDE_FINAL") return ForgetAveraging::ExcludeFinal;
  if (s == "ALL_TASKS") return ForgetAveraging::AllTasks;
  throw Error("unknown forgetting average convention: " + std::string(s));
}

void RunConfig::validate() const {
  if (task_order.empty()) throw Error("task_order must not be empty");
  for (std::size_t i = 0; i < task_order.size(); ++i) {
    task_order[i].validate();
    if (task_order[i].index != static_cast<int>(i) + 1) {
      throw Error("task_order indices must be 1..T in order");
    }
  }
  auto check = [](bool ok, const char* what) {
    if (!ok) throw Error(std::string("invalid config: ") + what);
  };
  check(lambda_p >= 0.0, "lambda_p >= 0");
  check(lambda_p_prime >= 0.0, "lambda_p_prime >= 0");
  check(!alpha || (*alpha >= 0.0 && *alpha <= 1.0), "alpha in [0,1]");
  for (const auto& [idx, o] : task_overrides) {
    check(idx >= 1 && idx <= static_cast<int>(task_order.size()), "override task index in range");
    check(!o.lambda_p || *o.lambda_p >= 0.0, "override lambda_p >= 0");
    check(!o.lambda_p_prime || *o.lambda_p_prime >= 0.0, "override lambda_p_prime >= 0");
    check(!o.alpha || (*o.alpha >= 0.0 && *o.alpha <= 1.0), "override alpha in [0,1]");
  }
  check(learning_rate > 0.0, "learning_rate > 0");
  check(weight_decay >= 0.0, "weight_decay >= 0");
  check(epochs_per_task >= 1, "epochs_per_task >= 1");
  check(batch_size >= 1, "batch_size >= 1");
  check(ewc_lambda >= 0.0, "ewc_lambda >= 0");
  check(lwf_weight >= 0.0, "lwf_weight >= 0");
  check(fisher_batches >= 1, "fisher_batches >= 1");
  check(sizes.train >= 1 && sizes.val >= 1 && sizes.test >= 1, "split sizes positive");
  check(pretrain_steps >= 0, "pretrain_steps >= 0");
  check(pretrain_learning_rate > 0.0, "pretrain_learning_rate > 0");
  check(pretrain_batch_size >= 1, "pretrain_batch_size >= 1");
  check(instruction_count >= 1, "instruction_count >= 1");
  check(eval_max_len >= 0, "eval_max_len >= 0");
  dims.validate();
}

double RunConfig::lambda_p_for(int task_index) const {
  auto it = task_overrides.find(task_index);
  return it != task_overrides.end() && it->second.lambda_p ? *it->second.lambda_p : lambda_p;
}

double RunConfig::lambda_p_prime_for(int task_index) const {
  auto it = task_overrides.find(task_index);
  return it != task_overrides.end() && it->second.lambda_p_prime ? *it->second.lambda_p_prime
                                                                 : lambda_p_prime;
}

FusionMode RunConfig::effective_fusion_mode() const {
  switch (method) {
    case Method::Moincl: return fusion_mode;
    case Method::Ewf: return FusionMode::EndOfTask;
    default: return FusionMode::Off;
  }
}

double RunConfig::alpha_for(int task_index) const {
  auto it = task_overrides.find(task_index);
  if (it != task_overrides.end() && it->second.alpha) return *it->second.alpha;
  if (alpha) return *alpha;
  return effective_fusion_mode() == FusionMode::EndOfTask ? 0.5 : 0.999;
}

namespace {

ordered_json task_json(const TaskDescriptor& t) {
  ordered_json j;
  j["index"] = t.index;
  j["modality"] = to_string(t.modality);
  j["task_type"] = to_string(t.task_type);
  j["dataset_id"] = t.dataset_id;
  j["n_samples"] = t.n_samples;
  return j;
}

TaskDescriptor task_from_json(const json& j) {
  TaskDescriptor t;
  t.index = j.at("index").get<int>();
  t.modality = parse_modality(j.at("modality").get<std::string>());
  t.task_type = parse_task_type(j.at("task_type").get<std::string>());
  t.dataset_id = j.value("dataset_id", t.label());
  t.n_samples = j.value("n_samples", 200);
  t.validate();
  return t;
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  auto tasks = ordered_json::array();
  for (const auto& t : c.task_order) tasks.push_back(task_json(t));
  j["task_order"] = tasks;
  j["method"] = to_string(c.method);
  j["lambda_p"] = c.lambda_p;
  j["lambda_p_prime"] = c.lambda_p_prime;
  j["alpha"] = c.alpha ? ordered_json(*c.alpha) : ordered_json(nullptr);
  j["fusion_mode"] = to_string(c.fusion_mode);
  auto overrides = ordered_json::object();
  for (const auto& [idx, o] : c.task_overrides) {
    ordered_json oj = ordered_json::object();
    if (o.lambda_p) oj["lambda_p"] = *o.lambda_p;
    if (o.lambda_p_prime) oj["lambda_p_prime"] = *o.lambda_p_prime;
    if (o.alpha) oj["alpha"] = *o.alpha;
    overrides[std::to_string(idx)] = oj;
  }
  j["task_overrides"] = overrides;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["epochs_per_task"] = c.epochs_per_task;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["ewc_lambda"] = c.ewc_lambda;
  j["lwf_weight"] = c.lwf_weight;
  j["fisher_batches"] = c.fisher_batches;
  j["sizes"] = {{"train", c.sizes.train}, {"val", c.sizes.val}, {"test", c.sizes.test}};
  j["data_seed"] = c.data_seed;
  ordered_json d;
  d["embed"] = c.dims.embed;
  d["layers"] = c.dims.layers;
  d["heads"] = c.dims.heads;
  d["context"] = c.dims.context;
  d["rank"] = c.dims.rank;
  d["feature"] = c.dims.feature;
  j["dims"] = d;
  j["pretrain_steps"] = c.pretrain_steps;
  j["pretrain_learning_rate"] = c.pretrain_learning_rate;
  j["pretrain_batch_size"] = c.pretrain_batch_size;
  j["qa_backend"] = to_string(c.qa_backend);
  j["instruction_path"] = c.instruction_path;
  j["instruction_count"] = c.instruction_count;
  j["eval_max_len"] = c.eval_max_len;
  j["forget_averaging"] = to_string(c.forget_averaging);
  return j;
}

RunConfig run_config_from_json(const json& j) {
  static const std::set<std::string> kKnown{
      "task_order",     "method",          "lambda_p",      "lambda_p_prime",
      "alpha",          "fusion_mode",     "task_overrides", "learning_rate",
      "weight_decay",   "epochs_per_task", "batch_size",    "seed",
      "ewc_lambda",     "lwf_weight",      "fisher_batches", "sizes",
      "data_seed",      "dims",            "pretrain_steps", "pretrain_learning_rate",
      "pretrain_batch_size", "qa_backend", "instruction_path", "instruction_count",
      "eval_max_len",   "forget_averaging"};
  if (!j.is_object()) throw Error("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKnown.contains(key)) throw Error("unknown config key: " + key);
  }
  RunConfig c;
  try {
    if (j.contains("task_order")) {
      c.task_order.clear();
      for (const auto& t : j.at("task_order")) c.task_order.push_back(task_from_json(t));
    } else {
      c.task_order = default_task_order();
    }
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    read(j, "lambda_p", c.lambda_p);
    read(j, "lambda_p_prime", c.lambda_p_prime);
    if (j.contains("alpha") && !j.at("alpha").is_null()) c.alpha = j.at("alpha").get<double>();
    if (j.contains("fusion_mode")) c.fusion_mode = parse_fusion_mode(j.at("fusion_mode").get<std::string>());
    if (j.contains("task_overrides")) {
      for (const auto& [key, oj] : j.at("task_overrides").items()) {
        TaskOverrides o;
        if (oj.contains("lambda_p")) o.lambda_p = oj.at("lambda_p").get<double>();
        if (oj.contains("lambda_p_prime")) o.lambda_p_prime = oj.at("lambda_p_prime").get<double>();
        if (oj.contains("alpha")) o.alpha = oj.at("alpha").get<double>();
        c.task_overrides[std::stoi(key)] = o;
      }
    }
    read(j, "learning_rate", c.learning_rate);
    read(j, "weight_decay", c.weight_decay);
    read(j, "epochs_per_task", c.epochs_per_task);
    read(j, "batch_size", c.batch_size);
    read(j, "seed", c.seed);
    read(j, "ewc_lambda", c.ewc_lambda);
    read(j, "lwf_weight", c.lwf_weight);
    read(j, "fisher_batches", c.fisher_batches);
    if (j.contains("sizes")) {
      const auto& s = j.at("sizes");
      read(s, "train", c.sizes.train);
      read(s, "val", c.sizes.val);
      read(s, "test", c.sizes.test);
    }
    read(j, "data_seed", c.data_seed);
    if (j.contains("dims")) {
      const auto& d = j.at("dims");
      read(d, "embed", c.dims.embed);
      read(d, "layers", c.dims.layers);
      read(d, "heads", c.dims.heads);
      read(d, "context", c.dims.context);
      read(d, "rank", c.dims.rank);
      read(d, "feature", c.dims.feature);
    }
    read(j, "pretrain_steps", c.pretrain_steps);
    read(j, "pretrain_learning_rate", c.pretrain_learning_rate);
    read(j, "pretrain_batch_size", c.pretrain_batch_size);
    if (j.contains("qa_backend")) c.qa_backend = parse_qa_backend(j.at("qa_backend").get<std::string>());
    read(j, "instruction_path", c.instruction_path);
    read(j, "instruction_count", c.instruction_count);
    read(j, "eval_max_len", c.eval_max_len);
    if (j.contains("forget_averaging")) {
      c.forget_averaging = parse_forget_averaging(j.at("forget_averaging").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string dump_canonical(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("malformed config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write config: " + path.string());
  out << dump_canonical(cfg);
}

std::vector<TaskDescriptor> parse_task_order(std::string_view spec, int n_samples) {
  std::vector<TaskDescriptor> out;
  std::string item;
  std::stringstream ss{std::string(spec)};
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) throw Error("task must look like IMG-CAP: " + item);
    TaskDescriptor t;
    t.index = static_cast<int>(out.size()) + 1;
    t.modality = parse_modality(item.substr(0, dash));
    t.task_type = parse_task_type(item.substr(dash + 1));
    t.dataset_id = "syn-" + t.label();
    t.n_samples = n_samples;
    out.push_back(t);
  }
  if (out.empty()) throw Error("empty task order");
  return out;
}

std::vector<TaskDescriptor> default_task_order(int n_samples) {
  return parse_task_order("IMG-CAP,VID-CAP,VID-QA,IMG-QA,AUD-CAP,AUD-QA", n_samples);
}

}  // namespace moincl
