#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "moincl/error.hpp"
#include "moincl/ptgm.hpp"
#include "moincl/syndata.hpp"

using namespace moincl;

namespace {

TaskDescriptor task(int index, Modality m, TaskType t) { return {index, m, t, "ds", 10}; }

LearnedState learned(std::initializer_list<std::pair<Modality, TaskType>> done) {
  LearnedState s;
  int i = 1;
  for (const auto& [m, t] : done) s = s.commit_task(task(i++, m, t));
  return s;
}

bool contains(const std::string& text, std::string_view phrase) {
  return text.find(phrase) != std::string::npos;
}

std::size_t word_count(const std::string& s) { return split_words(s).size(); }

// Scripted stand-in for a prompted LM.
struct FakeLm {
  std::string round1 = "red circle";
  std::string round2 = "what is above a blue square";
  std::string round3 = "red circle";
  std::vector<std::string>* seen = nullptr;

  std::string operator()(const std::string& prompt) const {
    if (seen) seen->push_back(prompt);
    if (contains(prompt, "generate a potential short answer")) return round1;
    if (contains(prompt, "generate a question for the answer")) return round2;
    return round3;
  }
};

const ImageScene kExample{{{Color::Red, Shape::Circle, 0, 1}, {Color::Blue, Shape::Square, 2, 2}}};

}  // namespace

TEST_CASE("pseudo caption instructions") {
  CHECK(pseudo_caption_instruction(Modality::Image) == "describe the image");
  CHECK(pseudo_caption_instruction(Modality::Audio) == "describe the audio");
  CHECK(pseudo_caption_instruction(Modality::Video) == "describe the video");
  CHECK(pseudo_caption_instruction("AUD") == "describe the audio");
  CHECK_THROWS_WITH_AS(pseudo_caption_instruction("depth"), "unknown modality: 'depth'", Error);
}

TEST_CASE("grammar oracle example pair") {
  const Scene scene = kExample;
  REQUIRE(render_caption(scene) == "a red circle above a blue square");
  const auto qa = three_round_qa("a red circle above a blue square", Modality::Image,
                                 QaGeneratorBackend::grammar_oracle(0), &scene, 0);
  CHECK(qa.question == "what is above a blue square ?");
  CHECK(qa.answer == "red circle");
  CHECK_FALSE(qa.fell_back);
}

TEST_CASE("grammar oracle needs a matching scene") {
  const Scene scene = kExample;
  const auto backend = QaGeneratorBackend::grammar_oracle(0);
  CHECK_THROWS_AS(three_round_qa("a red circle above a blue square", Modality::Image, backend), Error);
  CHECK_THROWS_AS(three_round_qa("a green star", Modality::Image, backend, &scene), Error);
  CHECK_THROWS_AS(three_round_qa("", Modality::Image, backend, &scene), Error);
}

TEST_CASE("grammar oracle pairs are short, grounded and correct") {
  int pairs = 0;
  for (Modality m : kAllModalities) {
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
      const Scene scene = generate_scene(m, seed);
      const auto caption = render_caption(scene);
      const auto qa =
          three_round_qa(caption, m, QaGeneratorBackend::grammar_oracle(seed % 7), &scene);
      INFO(caption, " | ", qa.question, " -> ", qa.answer);
      CHECK(word_count(qa.answer) >= 1);
      CHECK(word_count(qa.answer) <= 2);
      CHECK(qa.question.ends_with("?"));
      const auto caption_words = split_words(caption);
      for (const auto& w : split_words(qa.answer)) {
        CHECK(std::find(caption_words.begin(), caption_words.end(), w) != caption_words.end());
      }
      CHECK(answer_question(scene, qa.question) == std::optional<std::string>(qa.answer));
      ++pairs;
    }
  }
  CHECK(pairs == 1200);
}

TEST_CASE("grammar oracle is deterministic in caption, scene and seed") {
  const Scene scene = generate_scene(Modality::Video, 3);
  const auto caption = render_caption(scene);
  const auto a = three_round_qa(caption, Modality::Video, QaGeneratorBackend::grammar_oracle(5), &scene);
  const auto b = three_round_qa(caption, Modality::Video, QaGeneratorBackend::grammar_oracle(5), &scene);
  CHECK(a.question == b.question);
  CHECK(a.answer == b.answer);
}

TEST_CASE("every candidate selector yields a verified pair") {
  for (Modality m : kAllModalities) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const Scene scene = generate_scene(m, seed);
      const auto caption = render_caption(scene);
      const auto candidates = grammar_qa_candidates(caption, m);
      REQUIRE_FALSE(candidates.empty());
      for (std::uint64_t k = 0; k < candidates.size(); ++k) {
        const auto qa = three_round_qa(caption, m, QaGeneratorBackend::grammar_oracle(0), &scene, k);
        CHECK(qa.short_answer == candidates[k].first);
        CHECK(answer_question(scene, qa.question) == std::optional<std::string>(qa.answer));
      }
    }
  }
}

TEST_CASE("prompted backend instantiates the three templates verbatim") {
  std::vector<std::string> seen;
  FakeLm lm;
  lm.seen = &seen;
  const auto qa = three_round_qa("a red circle above a blue square", Modality::Image,
                                 QaGeneratorBackend::lm_prompted(lm));
  REQUIRE(seen.size() == 3);
  CHECK(qa.prompts == seen);
  CHECK(seen[0] ==
        "Given the image context: 'a red circle above a blue square', generate a potential short "
        "answer from it. Provide just one or two words. The answer words should be strictly "
        "selected from the context. Provide only the answer, nothing else. Answer:");
  CHECK(seen[1] ==
        "Given the image context: 'a red circle above a blue square' and the answer: 'red circle', "
        "generate a question for the answer that can be inferred from the context. Provide only "
        "one question and nothing else. Question:");
  CHECK(contains(seen[2], "Answer the question using the given context. The answer should be only "
                          "one or two words."));
  CHECK(contains(seen[2], "Question: 'what is above a blue square ?'"));
  CHECK(contains(seen[0], "Provide just one or two words"));
  CHECK(contains(seen[1], "Provide only one question"));
  CHECK(contains(seen[2], "The answer should be only one or two words"));
  CHECK(qa.question == "what is above a blue square ?");
  CHECK(qa.answer == "red circle");
  CHECK_FALSE(qa.fell_back);
}

TEST_CASE("prompted backend falls back to the round-one answer") {
  FakeLm lm;
  lm.round3 = "";
  const auto qa = three_round_qa("a loud bark then a soft horn then a soft bell then a loud splash",
                                 Modality::Audio, QaGeneratorBackend::lm_prompted(lm));
  CHECK(qa.fell_back);
  CHECK(qa.answer == "red circle");

  FakeLm wordy;
  wordy.round3 = "the answer is red";
  const auto trimmed = three_round_qa("a red circle", Modality::Image, QaGeneratorBackend::lm_prompted(wordy));
  CHECK(word_count(trimmed.answer) <= 2);

  FakeLm mute;
  mute.round2 = "";
  CHECK_THROWS_AS(three_round_qa("a red circle", Modality::Image, QaGeneratorBackend::lm_prompted(mute)), Error);
  CHECK_THROWS_AS(three_round_qa("", Modality::Image, QaGeneratorBackend::lm_prompted(FakeLm{})), Error);
}

TEST_CASE("gate follows the learned state") {
  const auto img_cap = task(2, Modality::Image, TaskType::Captioning);
  CHECK_FALSE(pseudo_gate_open(LearnedState{}, img_cap));
  CHECK_FALSE(pseudo_gate_open(learned({{Modality::Audio, TaskType::Captioning}}), img_cap));
  CHECK_FALSE(pseudo_gate_open(learned({{Modality::Image, TaskType::Captioning}}), img_cap));
  CHECK(pseudo_gate_open(learned({{Modality::Image, TaskType::QA}}), img_cap));
  CHECK(pseudo_gate_open(learned({{Modality::Image, TaskType::QA}, {Modality::Image, TaskType::Captioning}}),
                         img_cap));
  // An entry opened at task start but never committed does not count.
  CHECK_FALSE(pseudo_gate_open(LearnedState{}.begin_task(img_cap), img_cap));
}

TEST_CASE("pseudo batches") {
  const auto data = generate_task_dataset(task(2, Modality::Audio, TaskType::QA), {6, 2, 2}, 1);
  const auto backend = QaGeneratorBackend::grammar_oracle(0);

  SUBCASE("captioning targets from the stored caption") {
    const auto ls = learned({{Modality::Audio, TaskType::Captioning}});
    const auto pseudo = generate_pseudo_batch(data.train, ls, task(2, Modality::Audio, TaskType::QA), backend);
    REQUIRE(pseudo.size() == data.train.size());
    for (std::size_t k = 0; k < pseudo.size(); ++k) {
      CHECK(pseudo[k].pseudo_input_text == "describe the audio");
      CHECK(pseudo[k].pseudo_target_text == data.train[k].caption);
      CHECK(pseudo[k].source_task_type == TaskType::Captioning);
    }
  }

  SUBCASE("closed gate gives nothing") {
    CHECK(generate_pseudo_batch(data.train, LearnedState{}, task(1, Modality::Audio, TaskType::QA), backend).empty());
    const auto other = learned({{Modality::Image, TaskType::Captioning}});
    CHECK(generate_pseudo_batch(data.train, other, task(2, Modality::Audio, TaskType::QA), backend).empty());
  }

  SUBCASE("QA targets from the caption, with an audit trail") {
    const auto cap = generate_task_dataset(task(2, Modality::Image, TaskType::Captioning), {6, 2, 2}, 2);
    const auto ls = learned({{Modality::Image, TaskType::QA}});
    std::vector<PseudoAuditRecord> audit;
    const auto pseudo = generate_pseudo_batch(cap.train, ls, task(2, Modality::Image, TaskType::Captioning),
                                              backend, &audit);
    REQUIRE(pseudo.size() == cap.train.size());
    REQUIRE(audit.size() == pseudo.size());
    for (std::size_t k = 0; k < pseudo.size(); ++k) {
      CHECK(pseudo[k].source_task_type == TaskType::QA);
      CHECK(word_count(pseudo[k].pseudo_target_text) <= 2);
      CHECK(answer_question(pseudo[k].modality_input, pseudo[k].pseudo_input_text) ==
            std::optional<std::string>(pseudo[k].pseudo_target_text));
      CHECK(audit[k].source_caption == cap.train[k].caption);
    }
    const auto path = std::filesystem::temp_directory_path() / "moincl_audit.jsonl";
    write_pseudo_audit(audit, path);
    std::ifstream in(path);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.contains("question"));
      CHECK(j.contains("source_caption"));
      ++lines;
    }
    CHECK(lines == static_cast<int>(audit.size()));
    std::filesystem::remove(path);
  }

  SUBCASE("both learned types produce one sample each") {
    const auto ls = learned({{Modality::Audio, TaskType::Captioning}, {Modality::Audio, TaskType::QA}});
    const auto pseudo = generate_pseudo_batch(data.train, ls, task(3, Modality::Audio, TaskType::QA), backend);
    CHECK(pseudo.size() == data.train.size());
  }
}
