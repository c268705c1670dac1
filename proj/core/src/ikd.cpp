#include "moincl/ikd.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>

#include "moincl/error.hpp"
#include "moincl/losses.hpp"

namespace moincl {
namespace {

constexpr std::array<std::string_view, 16> kNouns{
    "apple", "river", "garden", "window", "teacher", "bridge", "candle", "forest",
    "letter", "pocket", "market", "engine", "pillow", "ladder", "basket", "mirror"};
constexpr std::array<std::string_view, 8> kAdjectives{"quiet", "bright", "heavy", "cold",
                                                      "ancient", "tiny", "smooth", "busy"};
constexpr std::array<std::string_view, 10> kNumbers{"one", "two", "three", "four", "five",
                                                    "six", "seven", "eight", "nine", "ten"};
constexpr std::array<std::string_view, 6> kTopics{"friendship", "weather", "cooking",
                                                  "music", "travel", "sleep"};

// Content words of the scene grammar, so the text-only base meets them once.
std::vector<std::string> lexicon() {
  std::vector<std::string> out;
  for (int k = 0; k < 4; ++k) {
    out.emplace_back(word(static_cast<Color>(k)));
    out.emplace_back(word(static_cast<Shape>(k)));
    out.emplace_back(word(static_cast<Sound>(k)));
    out.emplace_back(word(static_cast<Direction>(k)));
  }
  for (int k = 0; k < 2; ++k) out.emplace_back(word(static_cast<Loudness>(k)));
  for (const char* w : {"above", "moves", "object", "sound"}) out.emplace_back(w);
  return out;
}

std::vector<std::string> lexicon_templates() {
  std::vector<std::string> out;
  for (const auto& w : lexicon()) {
    out.push_back("repeat the word " + w);
    out.push_back("say the word " + w + " twice");
    out.push_back("write a sentence that uses the word " + w);
  }
  return out;
}

std::vector<std::string> template_space() {
  std::vector<std::string> out;
  auto s = [](std::string_view v) { return std::string(v); };
  for (auto n : kNouns) {
    out.push_back("repeat the word " + s(n));
    out.push_back("spell the word " + s(n));
    out.push_back("write a sentence that uses the word " + s(n));
    for (auto a : kAdjectives) {
      out.push_back("write a short story about a " + s(a) + " " + s(n));
      out.push_back("explain why a " + s(n) + " might be " + s(a));
    }
    for (auto m : kNouns) {
      if (m != n) out.push_back("compare a " + s(n) + " with a " + s(m));
    }
  }
  for (std::size_t i = 0; i < kNumbers.size(); ++i) {
    for (std::size_t j = i + 1; j < kNumbers.size(); ++j) {
      out.push_back("count from " + s(kNumbers[i]) + " to " + s(kNumbers[j]));
    }
  }
  for (auto t : kTopics) {
    for (auto num : {"two", "three", "four"}) {
      out.push_back("list " + std::string(num) + " facts about " + s(t));
      out.push_back("give " + std::string(num) + " tips on " + s(t));
    }
    out.push_back("write a poem about " + s(t));
    out.push_back("summarize what people enjoy about " + s(t));
  }
  return out;
}

void check_batch(std::span<const std::vector<int>> batch) {
  if (batch.empty()) throw Error("empty instruction batch");
}

}  // namespace

InstructionSet::InstructionSet(std::vector<std::string> instructions)
    : instructions_(std::move(instructions)) {
  if (instructions_.empty()) throw Error("empty instruction set");
  for (const auto& text : instructions_) {
    for (const auto& w : split_words(text)) {
      if (!w.empty() && w.front() == '<') throw Error("instruction contains a placeholder token: " + text);
    }
  }
}

InstructionSet InstructionSet::bundled(int count, std::uint64_t seed) {
  auto lex = lexicon_templates();
  auto rest = template_space();
  const std::size_t cap = lex.size() + rest.size();
  if (count <= 0 || static_cast<std::size_t>(count) > cap) {
    throw Error("instruction count must be in [1, " + std::to_string(cap) + "]");
  }
  Rng rng(mix_seed(seed, 0x1d5));
  rng.shuffle(lex);
  rng.shuffle(rest);
  lex.insert(lex.end(), rest.begin(), rest.end());
  lex.resize(static_cast<std::size_t>(count));
  rng.shuffle(lex);
  return InstructionSet(std::move(lex));
}

InstructionSet InstructionSet::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read instruction file " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(is, line);) {
    line = normalize_text(line);
    if (!line.empty()) lines.push_back(line);
  }
  return InstructionSet(std::move(lines));
}

void InstructionSet::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw Error("cannot write instruction file " + path.string());
  for (const auto& line : instructions_) os << line << '\n';
}

std::vector<std::string> InstructionSet::sample(int n, Rng& rng) const {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  const int size = static_cast<int>(instructions_.size());
  for (int k = 0; k < n; ++k) out.push_back(instructions_[static_cast<std::size_t>(rng.uniform_int(size))]);
  return out;
}

std::vector<std::vector<int>> encode_instructions(std::span<const std::string> texts,
                                                  const Vocabulary& vocab, const ModelDims& dims) {
  std::vector<std::vector<int>> out;
  for (const auto& t : texts) {
    auto ids = vocab.encode(t);
    if (static_cast<int>(ids.size()) + 1 <= dims.context) out.push_back(std::move(ids));
  }
  return out;
}

double ikd_loss(const ModelState& current, FrozenOutputs& old,
                std::span<const std::vector<int>> batch) {
  check_batch(batch);
  double total = 0.0;
  for (const auto& ids : batch) {
    const auto layout = make_text_layout(ids, current.dims());
    total += kl_divergence_seq(forward(current, layout), old(layout));
  }
  return total / static_cast<double>(batch.size());
}

double ikd_loss_grad(const ModelState& current, FrozenOutputs& old,
                     std::span<const std::vector<int>> batch, const TrainableSelection& selection,
                     GradMap& grads, double scale) {
  check_batch(batch);
  const double w = scale / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& ids : batch) {
    const auto layout = make_text_layout(ids, current.dims());
    TrainingPass pass(current, layout);
    auto lg = kl_divergence_seq_grad(pass.distribution(), old(layout));
    total += lg.value;
    lg.dlogits *= w;
    pass.backward(lg.dlogits, selection, grads);
  }
  return total / static_cast<double>(batch.size());
}

double ikd_loss(const ModelState& current, const ModelState& old,
                std::span<const std::vector<int>> batch) {
  FrozenOutputs outputs(old, false);
  return ikd_loss(current, outputs, batch);
}

double ikd_loss_grad(const ModelState& current, const ModelState& old,
                     std::span<const std::vector<int>> batch, const TrainableSelection& selection,
                     GradMap& grads, double scale) {
  FrozenOutputs outputs(old, false);
  return ikd_loss_grad(current, outputs, batch, selection, grads, scale);
}

}  // namespace moincl
