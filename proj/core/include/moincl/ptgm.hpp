#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "moincl/config.hpp"
#include "moincl/learned_state.hpp"
#include "moincl/model.hpp"
#include "moincl/text.hpp"
#include "moincl/types.hpp"

namespace moincl {

/// "describe the <modality>".
std::string pseudo_caption_instruction(Modality modality);
/// Same, from a modality name; throws for names outside the registered set.
std::string pseudo_caption_instruction(std::string_view modality_name);

/// Prompt strings of the three-round QA-from-caption pipeline.
namespace qa_prompts {
std::string round1(Modality modality, std::string_view caption);
std::string round2(Modality modality, std::string_view caption, std::string_view short_answer);
std::string round3(std::string_view caption, std::string_view question);
}  // namespace qa_prompts

/// Prompt in, completion out.
using TextGenerator = std::function<std::string(const std::string& prompt)>;

class QaGeneratorBackend {
 public:
  /// Rule-based rounds over the caption grammar; needs the sample's scene.
  static QaGeneratorBackend grammar_oracle(std::uint64_t seed);
  /// Prompts a frozen text generator with the three round templates.
  static QaGeneratorBackend lm_prompted(TextGenerator generator);

  QaBackendKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  const TextGenerator& generator() const { return generator_; }

 private:
  QaBackendKind kind_ = QaBackendKind::GrammarOracle;
  std::uint64_t seed_ = 0;
  TextGenerator generator_;
};

struct QaGeneration {
  std::string question;      // pseudo input text
  std::string answer;        // pseudo target
  std::string short_answer;  // round-1 output
  bool fell_back = false;    // round 3 came back empty; answer is the round-1 output
  std::vector<std::string> prompts;
};

/// Throws moincl::Error for an empty caption, for GRAMMAR_ORACLE without a
/// scene, and when LM_PROMPTED cannot produce a question or any answer.
QaGeneration three_round_qa(std::string_view caption, Modality modality,
                            const QaGeneratorBackend& backend, const Scene* scene = nullptr);
/// GRAMMAR_ORACLE with an explicit round-1 candidate index (taken modulo the
/// candidate count) instead of one drawn from the backend seed.
QaGeneration three_round_qa(std::string_view caption, Modality modality,
                            const QaGeneratorBackend& backend, const Scene* scene,
                            std::uint64_t selector);

/// Round-1 candidates of the grammar oracle in selection order: (short answer, question).
std::vector<std::pair<std::string, std::string>> grammar_qa_candidates(std::string_view caption,
                                                                       Modality modality);

struct PseudoAuditRecord {
  std::string question;
  std::string answer;
  std::string source_caption;
  QaBackendKind backend = QaBackendKind::GrammarOracle;
  bool fell_back = false;
};

/// One PseudoSample per (sample, learned type p != current type) when the
/// current modality has been learned before; empty otherwise. Samples whose
/// LM_PROMPTED generation fails are skipped and counted in `skipped`.
std::vector<PseudoSample> generate_pseudo_batch(std::span<const Sample> batch,
                                                const LearnedState& learned,
                                                const TaskDescriptor& current,
                                                const QaGeneratorBackend& backend,
                                                std::vector<PseudoAuditRecord>* audit = nullptr,
                                                int* skipped = nullptr);

/// True iff the gate admits pseudo targets for `current`.
bool pseudo_gate_open(const LearnedState& learned, const TaskDescriptor& current);

void write_pseudo_audit(const std::vector<PseudoAuditRecord>& records,
                        const std::filesystem::path& path);

/// Greedy text completion with a frozen LM; OOV prompt words are dropped.
TextGenerator make_lm_text_generator(Snapshot model, const Vocabulary& vocab, int max_new_tokens);

/// Words of the three prompt templates, for vocabulary construction.
std::vector<std::string> qa_prompt_corpus();

}  // namespace moincl
