#include "moincl/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "moincl/error.hpp"
#include "moincl/text.hpp"

namespace moincl {
namespace {

constexpr int kMaxN = 4;

using NgramCounts = std::unordered_map<std::string, double>;

// counts[n-1] holds the n-grams of length n.
std::array<NgramCounts, kMaxN> ngrams(const std::string& text) {
  const auto w = split_words(normalize_text(text));
  std::array<NgramCounts, kMaxN> out;
  for (int n = 1; n <= kMaxN; ++n) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= w.size(); ++i) {
      std::string key = w[i];
      for (int k = 1; k < n; ++k) key += ' ' + w[i + static_cast<std::size_t>(k)];
      out[static_cast<std::size_t>(n - 1)][key] += 1.0;
    }
  }
  return out;
}

struct TfIdf {
  std::array<NgramCounts, kMaxN> vec;
  std::array<double, kMaxN> norm{};
  int length = 0;
};

TfIdf weigh(const std::string& text, const std::unordered_map<std::string, double>& df,
            double log_n) {
  TfIdf out;
  const auto counts = ngrams(text);
  for (int n = 0; n < kMaxN; ++n) {
    for (const auto& [g, tf] : counts[static_cast<std::size_t>(n)]) {
      auto it = df.find(g);
      const double d = std::log(std::max(1.0, it == df.end() ? 0.0 : it->second));
      const double v = tf * (log_n - d);
      out.vec[static_cast<std::size_t>(n)][g] = v;
      out.norm[static_cast<std::size_t>(n)] += v * v;
    }
    out.norm[static_cast<std::size_t>(n)] = std::sqrt(out.norm[static_cast<std::size_t>(n)]);
  }
  for (const auto& [g, tf] : counts[0]) out.length += static_cast<int>(tf);
  return out;
}

double similarity(const TfIdf& cand, const TfIdf& ref, int n, const CiderOptions& opt) {
  const auto& cv = cand.vec[static_cast<std::size_t>(n)];
  const auto& rv = ref.vec[static_cast<std::size_t>(n)];
  double dot = 0.0;
  for (const auto& [g, v] : cv) {
    auto it = rv.find(g);
    if (it == rv.end()) continue;
    dot += opt.cider_d ? std::min(v, it->second) * it->second : v * it->second;
  }
  const double denom = cand.norm[static_cast<std::size_t>(n)] * ref.norm[static_cast<std::size_t>(n)];
  double val = denom != 0.0 ? dot / denom : 0.0;
  if (opt.cider_d) {
    const double delta = cand.length - ref.length;
    val *= std::exp(-(delta * delta) / (2.0 * opt.sigma * opt.sigma));
  }
  return val;
}

std::string cell_key(int task, int step) {
  return "s/" + std::to_string(task) + "/" + std::to_string(step);
}

std::string fmt(double v, int precision = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "-"; }

// Shortest text that parses back to the same double.
std::string exact(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

CiderResult cider(std::span<const std::string> candidates,
                  std::span<const std::vector<std::string>> references, CiderOptions options) {
  if (candidates.size() != references.size()) throw Error("cider: candidate/reference count mismatch");
  CiderResult result;
  if (candidates.empty()) return result;

  std::unordered_map<std::string, double> df;
  for (std::size_t i = 0; i < references.size(); ++i) {
    if (references[i].empty()) throw Error("cider: candidate " + std::to_string(i) + " has no reference");
    std::set<std::string> seen;
    for (const auto& r : references[i]) {
      for (const auto& counts : ngrams(r)) {
        for (const auto& [g, tf] : counts) seen.insert(g);
      }
    }
    for (const auto& g : seen) df[g] += 1.0;
  }
  const double log_n = std::log(static_cast<double>(references.size()));

  result.per_item.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const TfIdf cand = weigh(candidates[i], df, log_n);
    std::array<double, kMaxN> score{};
    for (const auto& r : references[i]) {
      const TfIdf ref = weigh(r, df, log_n);
      for (int n = 0; n < kMaxN; ++n) score[static_cast<std::size_t>(n)] += similarity(cand, ref, n, options);
    }
    double mean = 0.0;
    for (double s : score) mean += s;
    mean /= kMaxN;
    mean /= static_cast<double>(references[i].size());
    result.per_item.push_back(mean * 10.0);
  }
  double total = 0.0;
  for (double s : result.per_item) total += s;
  result.corpus = total / static_cast<double>(result.per_item.size());
  return result;
}

double qa_accuracy(std::span<const std::string> predictions, std::span<const std::string> answers) {
  if (predictions.size() != answers.size()) {
    throw Error("qa_accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                std::to_string(answers.size()) + " answers");
  }
  if (predictions.empty()) throw Error("qa_accuracy: no predictions");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (normalize_text(predictions[i]) == normalize_text(answers[i])) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double forgetting_ratio(double s_ii, double s_iT) {
  if (s_ii == 0.0) throw Error("undefined ratio: diagonal score is zero");
  return 100.0 * (s_ii - s_iT) / s_ii;
}

ScoreMatrix::ScoreMatrix(std::vector<TaskMeta> tasks) : tasks_(std::move(tasks)) {}

void ScoreMatrix::check_cell(int task, int step) const {
  if (task < 1 || step < task || step > size()) {
    throw Error("score cell outside the triangle: " + cell_key(task, step));
  }
}

void ScoreMatrix::set(int task, int step, double score) {
  check_cell(task, step);
  if (!std::isfinite(score)) throw Error("non-finite score at " + cell_key(task, step));
  cells_[{task, step}] = score;
}

std::optional<double> ScoreMatrix::get(int task, int step) const {
  check_cell(task, step);
  auto it = cells_.find({task, step});
  if (it == cells_.end()) return std::nullopt;
  return it->second;
}

double ScoreMatrix::at(int task, int step) const {
  auto v = get(task, step);
  if (!v) throw Error("missing score " + cell_key(task, step));
  return *v;
}

std::vector<std::string> ScoreMatrix::missing_cells() const {
  std::vector<std::string> out;
  for (int i = 1; i <= size(); ++i) {
    for (int j = i; j <= size(); ++j) {
      if (!cells_.contains({i, j})) out.push_back(cell_key(i, j));
    }
  }
  return out;
}

std::string ScoreMatrix::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json meta;
  meta["tasks"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    nlohmann::ordered_json t;
    t["index"] = i + 1;
    t["name"] = tasks_[i].name;
    t["type"] = to_string(tasks_[i].type);
    meta["tasks"].push_back(t);
  }
  meta["info"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : info_) meta["info"][k] = v;
  j["metadata"] = meta;
  j["scores"] = nlohmann::ordered_json::object();
  for (const auto& [cell, v] : cells_) j["scores"][cell_key(cell.first, cell.second)] = v;
  return j.dump(2) + "\n";
}

ScoreMatrix ScoreMatrix::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("score matrix: ") + e.what());
  }
  std::vector<TaskMeta> tasks;
  for (const auto& t : j.at("metadata").at("tasks")) {
    tasks.push_back({t.at("name").get<std::string>(), parse_task_type(t.at("type").get<std::string>())});
  }
  ScoreMatrix m(std::move(tasks));
  if (auto it = j["metadata"].find("info"); it != j["metadata"].end()) {
    for (const auto& [k, v] : it->items()) m.info_[k] = v.get<std::string>();
  }
  for (const auto& [key, v] : j.at("scores").items()) {
    int task = 0, step = 0;
    if (std::sscanf(key.c_str(), "s/%d/%d", &task, &step) != 2) throw Error("bad score key: " + key);
    m.set(task, step, v.get<double>());
  }
  return m;
}

Aggregates aggregate(const ScoreMatrix& matrix, ForgetAveraging averaging) {
  const auto missing = matrix.missing_cells();
  if (matrix.size() == 0) throw Error("incomplete score matrix: no tasks");
  if (!missing.empty()) {
    std::string list;
    for (const auto& c : missing) list += (list.empty() ? "" : ", ") + c;
    throw Error("incomplete score matrix; missing " + list);
  }
  const int T = matrix.size();
  Aggregates a;
  double cap = 0.0, qa = 0.0;
  int n_cap = 0, n_qa = 0;
  for (int i = 1; i <= T; ++i) {
    const double final_score = matrix.at(i, T);
    if (matrix.tasks()[static_cast<std::size_t>(i - 1)].type == TaskType::Captioning) {
      cap += final_score;
      ++n_cap;
    } else {
      qa += final_score;
      ++n_qa;
    }
    a.per_task_forget.push_back(forgetting_ratio(matrix.at(i, i), final_score));
  }
  if (n_cap > 0) a.avg_cider = cap / n_cap;
  if (n_qa > 0) a.avg_acc = qa / n_qa;
  const int counted = averaging == ForgetAveraging::ExcludeFinal ? T - 1 : T;
  if (counted > 0) {
    double sum = 0.0;
    for (int i = 0; i < counted; ++i) sum += a.per_task_forget[static_cast<std::size_t>(i)];
    a.avg_forget = sum / counted;
  }
  return a;
}

std::map<std::string, ScoreMatrix> read_step_scores_csv(std::string_view text) {
  struct Row {
    int task, step;
    std::string name;
    TaskType type;
    double score;
  };
  std::map<std::string, std::vector<Row>> grouped;
  std::istringstream is{std::string(text)};
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto f = split_csv_line(line);
    if (!header_seen) {
      header_seen = true;
      if (f.size() >= 1 && f[0] == "method") continue;
    }
    if (f.size() != 7) throw Error("step scores line " + std::to_string(line_no) + ": expected 7 fields");
    try {
      grouped[f[0] + "/" + f[1]].push_back(
          {std::stoi(f[2]), std::stoi(f[5]), f[3], parse_task_type(f[4]), std::stod(f[6])});
    } catch (const std::logic_error&) {
      throw Error("step scores line " + std::to_string(line_no) + ": bad number");
    }
  }
  std::map<std::string, ScoreMatrix> out;
  for (auto& [key, rows] : grouped) {
    int T = 0;
    for (const auto& r : rows) T = std::max({T, r.task, r.step});
    std::vector<TaskMeta> tasks(static_cast<std::size_t>(T));
    std::vector<bool> named(static_cast<std::size_t>(T), false);
    for (const auto& r : rows) {
      auto& t = tasks[static_cast<std::size_t>(r.task - 1)];
      if (named[static_cast<std::size_t>(r.task - 1)] && (t.name != r.name || t.type != r.type)) {
        throw Error(key + ": inconsistent metadata for task " + std::to_string(r.task));
      }
      t = {r.name, r.type};
      named[static_cast<std::size_t>(r.task - 1)] = true;
    }
    ScoreMatrix m(tasks);
    const auto slash = key.find('/');
    m.info()["method"] = key.substr(0, slash);
    m.info()["order"] = key.substr(slash + 1);
    for (const auto& r : rows) m.set(r.task, r.step, r.score);
    out.emplace(key, std::move(m));
  }
  return out;
}

std::map<std::string, ScoreMatrix> read_step_scores_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return read_step_scores_csv(ss.str());
}

std::string format_report(const std::map<std::string, ScoreMatrix>& runs, ForgetAveraging averaging) {
  std::ostringstream os;
  for (const auto& [name, m] : runs) {
    const int T = m.size();
    os << "== " << name << " ==\n";
    os << std::left << std::setw(8) << "step";
    for (const auto& t : m.tasks()) os << std::right << std::setw(12) << t.name;
    os << '\n';
    for (int j = 1; j <= T; ++j) {
      os << std::left << std::setw(8) << ("S" + std::to_string(j));
      for (int i = 1; i <= T; ++i) {
        std::string cell;
        if (i <= j) {
          const auto v = m.get(i, j);
          cell = v ? fmt(*v) : "?";
        }
        os << std::right << std::setw(12) << cell;
      }
      os << '\n';
    }
    if (!m.complete()) {
      os << "(incomplete)\n\n";
      continue;
    }
    Aggregates a;
    try {
      a = aggregate(m, averaging);
    } catch (const Error& e) {
      os << "(" << e.what() << ")\n\n";
      continue;
    }
    os << std::left << std::setw(8) << "forget";
    for (double f : a.per_task_forget) os << std::right << std::setw(11) << fmt(f) << '%';
    os << '\n';
    os << "avg_cider " << fmt(a.avg_cider) << "  avg_acc " << fmt(a.avg_acc) << "  avg_forget "
       << fmt(a.avg_forget) << "%\n\n";
  }
  return os.str();
}

std::string format_report_csv(const std::map<std::string, ScoreMatrix>& runs,
                              ForgetAveraging averaging) {
  std::ostringstream os;
  os << "run,kind,task,step,value\n";
  for (const auto& [name, m] : runs) {
    for (int i = 1; i <= m.size(); ++i) {
      for (int j = i; j <= m.size(); ++j) {
        if (auto v = m.get(i, j)) os << name << ",score," << i << ',' << j << ',' << exact(*v) << '\n';
      }
    }
    if (!m.complete()) continue;
    Aggregates a;
    try {
      a = aggregate(m, averaging);
    } catch (const Error&) {
      continue;
    }
    for (std::size_t i = 0; i < a.per_task_forget.size(); ++i) {
      os << name << ",forget," << i + 1 << ",," << exact(a.per_task_forget[i]) << '\n';
    }
    if (a.avg_cider) os << name << ",avg_cider,,," << exact(*a.avg_cider) << '\n';
    if (a.avg_acc) os << name << ",avg_acc,,," << exact(*a.avg_acc) << '\n';
    if (a.avg_forget) os << name << ",avg_forget,,," << exact(*a.avg_forget) << '\n';
  }
  return os.str();
}

}  // namespace moincl
