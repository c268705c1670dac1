#include "moincl/ptgm.hpp"

#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "moincl/error.hpp"
#include "moincl/rng.hpp"
#include "moincl/syndata.hpp"

namespace moincl {
namespace {

constexpr std::array<std::string_view, 4> kOrdinals{"first", "second", "third", "fourth"};

// Caption read back into (attribute, attribute[, attribute]) tuples. The
// relation list holds the phrase joining entity k-1 and entity k.
struct ParsedCaption {
  struct Entity {
    std::string a;  // colour, or loudness for audio
    std::string b;  // shape, or sound for audio
    std::string direction;
  };
  std::vector<Entity> entities;
  std::vector<std::string> relations;
};

[[noreturn]] void bad_caption(std::string_view caption) {
  throw Error("caption does not follow the grammar: '" + std::string(caption) + "'");
}

ParsedCaption parse_caption(std::string_view caption, Modality modality) {
  const auto w = split_words(normalize_text(caption));
  ParsedCaption out;
  std::size_t i = 0;
  auto take = [&]() -> const std::string& {
    if (i >= w.size()) bad_caption(caption);
    return w[i++];
  };
  while (true) {
    if (take() != "a") bad_caption(caption);
    ParsedCaption::Entity e;
    e.a = take();
    e.b = take();
    if (modality == Modality::Video) {
      if (take() != "moves") bad_caption(caption);
      e.direction = take();
    }
    out.entities.push_back(std::move(e));
    if (i == w.size()) break;
    const std::string& joiner = take();
    if (modality == Modality::Image) {
      if (joiner == "above") {
        out.relations.push_back("above");
      } else if (joiner == "left" && i < w.size() && w[i] == "of") {
        ++i;
        out.relations.push_back("left of");
      } else {
        bad_caption(caption);
      }
    } else if (joiner != (modality == Modality::Audio ? "then" : "and")) {
      bad_caption(caption);
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> candidates(const ParsedCaption& p,
                                                            Modality modality) {
  std::vector<std::pair<std::string, std::string>> out;
  const auto& es = p.entities;
  switch (modality) {
    case Modality::Image:
      for (std::size_t k = 1; k < es.size(); ++k) {
        out.emplace_back(es[k - 1].a + " " + es[k - 1].b,
                         "what is " + p.relations[k - 1] + " a " + es[k].a + " " + es[k].b + " ?");
      }
      for (const auto& e : es) {
        out.emplace_back(e.a, "what color is the " + e.b + " ?");
        out.emplace_back(e.b, "what shape is the " + e.a + " object ?");
      }
      break;
    case Modality::Audio:
      for (std::size_t k = 0; k < es.size() && k < kOrdinals.size(); ++k) {
        out.emplace_back(es[k].b, "what is the " + std::string(kOrdinals[k]) + " sound ?");
        out.emplace_back(es[k].a, "how loud is the " + std::string(kOrdinals[k]) + " sound ?");
      }
      break;
    case Modality::Video:
      for (const auto& e : es) {
        out.emplace_back(e.a + " " + e.b, "what moves " + e.direction + " ?");
        out.emplace_back(e.direction, "where does the " + e.b + " move ?");
        out.emplace_back(e.a, "what color is the " + e.b + " ?");
      }
      break;
  }
  return out;
}

// Round 3 of the oracle: reads the answer off the caption text alone.
std::string answer_from_caption(const ParsedCaption& p, Modality modality,
                                std::string_view question) {
  const auto q = split_words(normalize_text(question));
  const auto n = q.size();
  auto is = [&](std::initializer_list<std::string_view> prefix) {
    if (n < prefix.size()) return false;
    std::size_t k = 0;
    for (auto s : prefix) {
      if (!s.empty() && q[k] != s) return false;
      ++k;
    }
    return true;
  };
  if (n == 0 || q.back() != "?") return {};
  const auto& es = p.entities;

  if (modality == Modality::Audio) {
    if (n < 6 || q[n - 2] != "sound") return {};
    std::size_t idx = kOrdinals.size();
    for (std::size_t k = 0; k < kOrdinals.size(); ++k) {
      if (q[n - 3] == kOrdinals[k]) idx = k;
    }
    if (idx >= es.size()) return {};
    if (n == 6 && is({"what", "is", "the"})) return es[idx].b;
    if (n == 7 && is({"how", "loud", "is", "the"})) return es[idx].a;
    return {};
  }
  if (n == 6 && is({"what", "color", "is", "the"})) {
    for (const auto& e : es) {
      if (e.b == q[4]) return e.a;
    }
    return {};
  }
  if (modality == Modality::Image) {
    if (n == 7 && is({"what", "shape", "is", "the", "", "object"})) {
      for (const auto& e : es) {
        if (e.a == q[4]) return e.b;
      }
      return {};
    }
    if (is({"what", "is"})) {
      // what is <relation> a <colour> <shape> ?
      const std::string rel = n == 7 ? q[2] : (n == 8 ? q[2] + " " + q[3] : std::string());
      if (rel.empty() || q[n - 4] != "a") return {};
      for (std::size_t k = 1; k < es.size(); ++k) {
        if (p.relations[k - 1] == rel && es[k].a == q[n - 3] && es[k].b == q[n - 2]) {
          return es[k - 1].a + " " + es[k - 1].b;
        }
      }
    }
    return {};
  }
  if (n == 4 && is({"what", "moves"})) {
    for (const auto& e : es) {
      if (e.direction == q[2]) return e.a + " " + e.b;
    }
    return {};
  }
  if (n == 6 && is({"where", "does", "the", "", "move"})) {
    for (const auto& e : es) {
      if (e.b == q[3]) return e.direction;
    }
  }
  return {};
}

std::string first_words(std::string_view text, std::size_t k) {
  const auto w = split_words(normalize_text(text));
  std::string out;
  for (std::size_t i = 0; i < w.size() && i < k; ++i) {
    if (w[i] == "?") break;
    if (!out.empty()) out += ' ';
    out += w[i];
  }
  return out;
}

// Keeps the text before the first '?' and terminates it with one.
std::string as_question(std::string_view text) {
  std::string out;
  for (const auto& w : split_words(normalize_text(text))) {
    if (w == "?") break;
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out.empty() ? out : out + " ?";
}

std::uint64_t fnv(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

QaGeneration oracle_qa(const std::string& caption, Modality modality, const Scene* scene,
                       std::uint64_t selector) {
  if (scene == nullptr) throw Error("GRAMMAR_ORACLE requires the sample's scene record");
  if (modality_of(*scene) != modality) throw Error("scene modality does not match the task");
  if (render_caption(*scene) != caption) {
    throw Error("caption does not describe the scene: '" + caption + "'");
  }
  const auto parsed = parse_caption(caption, modality);
  const auto cands = candidates(parsed, modality);
  if (cands.empty()) bad_caption(caption);
  const auto& [short_answer, question] = cands[selector % cands.size()];

  QaGeneration g;
  g.short_answer = short_answer;
  g.question = question;
  g.answer = answer_from_caption(parsed, modality, question);
  g.prompts = {qa_prompts::round1(modality, caption),
               qa_prompts::round2(modality, caption, short_answer),
               qa_prompts::round3(caption, question)};
  if (g.answer.empty()) {
    g.answer = short_answer;
    g.fell_back = true;
  }
  return g;
}

QaGeneration prompted_qa(const std::string& caption, Modality modality,
                         const TextGenerator& generate) {
  if (!generate) throw Error("LM_PROMPTED backend has no generator");
  QaGeneration g;
  g.prompts.push_back(qa_prompts::round1(modality, caption));
  g.short_answer = first_words(generate(g.prompts.back()), 2);
  g.prompts.push_back(qa_prompts::round2(modality, caption, g.short_answer));
  g.question = as_question(generate(g.prompts.back()));
  if (g.question.empty()) throw Error("round 2 produced no question");
  g.prompts.push_back(qa_prompts::round3(caption, g.question));
  g.answer = first_words(generate(g.prompts.back()), 2);
  if (g.answer.empty()) {
    std::clog << "[ptgm] empty round-3 answer for '" << g.question
              << "'; using round-1 answer '" << g.short_answer << "'\n";
    g.answer = g.short_answer;
    g.fell_back = true;
  }
  if (g.answer.empty()) throw Error("rounds 1 and 3 produced no answer");
  return g;
}

}  // namespace

std::string pseudo_caption_instruction(Modality modality) {
  return "describe the " + std::string(modality_word(modality));
}

std::string pseudo_caption_instruction(std::string_view modality_name) {
  for (Modality m : kAllModalities) {
    const std::string lowered = normalize_text(modality_name);
    if (lowered == modality_word(m) || lowered == normalize_text(to_string(m))) {
      return pseudo_caption_instruction(m);
    }
  }
  throw Error("unknown modality: '" + std::string(modality_name) + "'");
}

namespace qa_prompts {

std::string round1(Modality modality, std::string_view caption) {
  return "Given the " + std::string(modality_word(modality)) + " context: '" +
         std::string(caption) +
         "', generate a potential short answer from it. Provide just one or two words. The "
         "answer words should be strictly selected from the context. Provide only the answer, "
         "nothing else. Answer:";
}

std::string round2(Modality modality, std::string_view caption, std::string_view short_answer) {
  return "Given the " + std::string(modality_word(modality)) + " context: '" +
         std::string(caption) + "' and the answer: '" + std::string(short_answer) +
         "', generate a question for the answer that can be inferred from the context. Provide "
         "only one question and nothing else. Question:";
}

std::string round3(std::string_view caption, std::string_view question) {
  return "Answer the question using the given context. The answer should be only one or two "
         "words. Context: '" +
         std::string(caption) + "'. Question: '" + std::string(question) + "'. Answer:";
}

}  // namespace qa_prompts

QaGeneratorBackend QaGeneratorBackend::grammar_oracle(std::uint64_t seed) {
  QaGeneratorBackend b;
  b.kind_ = QaBackendKind::GrammarOracle;
  b.seed_ = seed;
  return b;
}

QaGeneratorBackend QaGeneratorBackend::lm_prompted(TextGenerator generator) {
  if (!generator) throw Error("LM_PROMPTED backend needs a generator");
  QaGeneratorBackend b;
  b.kind_ = QaBackendKind::LmPrompted;
  b.generator_ = std::move(generator);
  return b;
}

std::vector<std::pair<std::string, std::string>> grammar_qa_candidates(std::string_view caption,
                                                                       Modality modality) {
  const std::string y = normalize_text(caption);
  if (y.empty()) throw Error("empty caption");
  return candidates(parse_caption(y, modality), modality);
}

QaGeneration three_round_qa(std::string_view caption, Modality modality,
                            const QaGeneratorBackend& backend, const Scene* scene) {
  const std::string y = normalize_text(caption);
  if (y.empty()) throw Error("empty caption");
  if (backend.kind() == QaBackendKind::LmPrompted) return prompted_qa(y, modality, backend.generator());
  return oracle_qa(y, modality, scene, mix_seed(backend.seed(), fnv(y)));
}

QaGeneration three_round_qa(std::string_view caption, Modality modality,
                            const QaGeneratorBackend& backend, const Scene* scene,
                            std::uint64_t selector) {
  const std::string y = normalize_text(caption);
  if (y.empty()) throw Error("empty caption");
  if (backend.kind() == QaBackendKind::LmPrompted) return prompted_qa(y, modality, backend.generator());
  return oracle_qa(y, modality, scene, selector);
}

bool pseudo_gate_open(const LearnedState& learned, const TaskDescriptor& current) {
  if (!learned.has_modality(current.modality)) return false;
  for (TaskType p : learned.learned_types(current.modality)) {
    if (p != current.task_type) return true;
  }
  return false;
}

std::vector<PseudoSample> generate_pseudo_batch(std::span<const Sample> batch,
                                                const LearnedState& learned,
                                                const TaskDescriptor& current,
                                                const QaGeneratorBackend& backend,
                                                std::vector<PseudoAuditRecord>* audit,
                                                int* skipped) {
  std::vector<PseudoSample> out;
  if (skipped != nullptr) *skipped = 0;
  if (!pseudo_gate_open(learned, current)) return out;
  const Modality m = current.modality;
  for (const auto& sample : batch) {
    for (TaskType p : learned.learned_types(m)) {
      if (p == current.task_type) continue;
      PseudoSample ps;
      ps.modality_input = sample.modality_input;
      ps.source_task_type = p;
      if (p == TaskType::Captioning) {
        ps.pseudo_input_text = pseudo_caption_instruction(m);
        ps.pseudo_target_text = sample.caption;
      } else {
        const std::string& y =
            current.task_type == TaskType::Captioning ? sample.target_text : sample.caption;
        QaGeneration g;
        try {
          g = three_round_qa(y, m, backend, &sample.modality_input);
        } catch (const Error& e) {
          if (backend.kind() != QaBackendKind::LmPrompted) throw;
          std::clog << "[ptgm] skipped sample: " << e.what() << '\n';
          if (skipped != nullptr) ++*skipped;
          continue;
        }
        ps.pseudo_input_text = g.question;
        ps.pseudo_target_text = g.answer;
        if (audit != nullptr) audit->push_back({g.question, g.answer, y, backend.kind(), g.fell_back});
      }
      if (ps.pseudo_target_text.empty()) continue;
      out.push_back(std::move(ps));
    }
  }
  return out;
}

void write_pseudo_audit(const std::vector<PseudoAuditRecord>& records,
                        const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["question"] = r.question;
    j["answer"] = r.answer;
    j["source_caption"] = r.source_caption;
    j["backend"] = to_string(r.backend);
    j["fell_back"] = r.fell_back;
    os << j.dump() << '\n';
  }
}

TextGenerator make_lm_text_generator(Snapshot model, const Vocabulary& vocab, int max_new_tokens) {
  if (!model) throw Error("null model snapshot");
  return [model = std::move(model), vocab, max_new_tokens](const std::string& prompt) {
    std::vector<int> ids;
    for (const auto& w : split_words(normalize_text(prompt))) {
      if (vocab.contains(w)) ids.push_back(vocab.id(w));
    }
    const auto out = generate_greedy(*model, nullptr, ids, max_new_tokens);
    return vocab.decode(out);
  };
}

std::vector<std::string> qa_prompt_corpus() {
  std::vector<std::string> out;
  for (Modality m : kAllModalities) {
    out.push_back(normalize_text(qa_prompts::round1(m, "")));
    out.push_back(normalize_text(qa_prompts::round2(m, "", "")));
  }
  out.push_back(normalize_text(qa_prompts::round3("", "")));
  return out;
}

}  // namespace moincl
