#include "doctest.h"

#include <set>

#include "moincl/error.hpp"
#include "moincl/syndata.hpp"
#include "moincl/text.hpp"

using namespace moincl;

namespace {

ImageScene image(std::vector<SceneObject> objects) { return ImageScene{std::move(objects)}; }

// Words an exhaustive walk of the generators can emit.
std::set<std::string> emitted_words() {
  std::set<std::string> words;
  auto add = [&](const std::string& text) {
    for (const auto& w : split_words(normalize_text(text))) words.insert(w);
  };
  for (Modality m : kAllModalities) {
    add(caption_instruction(m));
    for (std::uint64_t seed = 0; seed < 3000; ++seed) {
      const Scene s = generate_scene(m, seed);
      add(render_caption(s));
      for (int k = 0; k < qa_variant_count(s); ++k) {
        const auto qa = render_qa(s, k);
        add(qa.question);
        add(qa.answer);
      }
    }
  }
  return words;
}

}  // namespace

TEST_CASE("scene generation is deterministic and valid") {
  for (Modality m : kAllModalities) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const Scene a = generate_scene(m, seed);
      CHECK(a == generate_scene(m, seed));
      CHECK(modality_of(a) == m);
      CHECK_NOTHROW(validate_scene(a));
    }
  }
}

TEST_CASE("video clips have four frames of their movers") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto v = std::get<VideoClip>(generate_scene(Modality::Video, seed));
    const auto frames = v.frames();
    REQUIRE(frames.size() == 4);
    for (const auto& f : frames) CHECK(f.objects.size() == v.movers.size());
  }
}

TEST_CASE("single-object caption") {
  CHECK(render_caption(image({{Color::Red, Shape::Circle, 2, 1}})) == "a red circle");
}

TEST_CASE("two-object relation word follows the row order") {
  int above = 0;
  int left = 0;
  for (int r1 = 0; r1 < kGridSize; ++r1) {
    for (int c1 = 0; c1 < kGridSize; ++c1) {
      for (int r2 = r1; r2 < kGridSize; ++r2) {
        for (int c2 = 0; c2 < kGridSize; ++c2) {
          if (r2 == r1 && c2 <= c1) continue;
          const auto cap = render_caption(
              image({{Color::Red, Shape::Circle, r1, c1}, {Color::Blue, Shape::Square, r2, c2}}));
          if (r1 < r2) {
            CHECK(cap == "a red circle above a blue square");
            ++above;
          } else {
            CHECK(cap == "a red circle left of a blue square");
            ++left;
          }
        }
      }
    }
  }
  CHECK(above + left == 16 * 15 / 2);
}

TEST_CASE("audio caption starts with the first event") {
  AudioClip clip;
  clip.events = {AudioEvent{Sound::Bark, Loudness::Loud}, AudioEvent{Sound::Horn, Loudness::Soft},
                 AudioEvent{Sound::Bell, Loudness::Soft}, AudioEvent{Sound::Splash, Loudness::Loud}};
  CHECK(render_caption(clip) == "a loud bark then a soft horn then a soft bell then a loud splash");
}

TEST_CASE("QA examples") {
  const Scene one = image({{Color::Red, Shape::Circle, 0, 0}});
  CHECK(render_qa(one, 0) == QaPair{"what color is the circle ?", "red"});

  const Scene two = image({{Color::Blue, Shape::Square, 0, 0}, {Color::Red, Shape::Circle, 1, 2}});
  CHECK(answer_question(two, "what color is the square ?") == std::optional<std::string>("blue"));
  CHECK(answer_question(two, "what color is the star ?") == std::nullopt);
}

TEST_CASE("oracle re-derives every stored QA answer") {
  for (const auto& ds : generate_benchmark(default_task_order(200), {200, 50, 50}, 0)) {
    if (ds.descriptor.task_type != TaskType::QA) continue;
    for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
      for (const auto& s : *split) {
        const auto a = answer_question(s.modality_input, s.input_text);
        REQUIRE(a.has_value());
        CHECK(*a == s.target_text);
      }
    }
  }
}

TEST_CASE("oracle agrees with every question form of every scene") {
  for (Modality m : kAllModalities) {
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
      const Scene s = generate_scene(m, seed);
      for (int k = 0; k < qa_variant_count(s); ++k) {
        const auto qa = render_qa(s, k);
        INFO(render_caption(s), " | ", qa.question, " -> ", qa.answer, " got ",
             answer_question(s, qa.question).value_or("<none>"));
        CHECK(answer_question(s, qa.question) == std::optional<std::string>(qa.answer));
      }
    }
  }
}

TEST_CASE("captions mention every object's attributes") {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto img = std::get<ImageScene>(generate_scene(Modality::Image, seed));
    const auto cap = render_caption(img);
    for (const auto& o : img.objects) {
      CHECK(cap.find(std::string(word(o.color)) + " " + std::string(word(o.shape))) != std::string::npos);
    }
    const auto vid = std::get<VideoClip>(generate_scene(Modality::Video, seed));
    const auto vcap = render_caption(vid);
    for (const auto& mv : vid.movers) {
      CHECK(vcap.find(std::string(word(mv.color)) + " " + std::string(word(mv.shape))) != std::string::npos);
    }
  }
}

TEST_CASE("dataset splits have the requested sizes and disjoint scenes") {
  const auto order = default_task_order(200);
  const auto ds = generate_task_dataset(order[0], {200, 50, 50}, 0);
  CHECK(ds.train.size() == 200);
  CHECK(ds.val.size() == 50);
  CHECK(ds.test.size() == 50);
  std::set<std::string> train_keys, val_keys, test_keys;
  for (const auto& s : ds.train) train_keys.insert(canonical_scene_key(s.modality_input));
  for (const auto& s : ds.val) val_keys.insert(canonical_scene_key(s.modality_input));
  for (const auto& s : ds.test) test_keys.insert(canonical_scene_key(s.modality_input));
  for (const auto& k : val_keys) CHECK_FALSE(train_keys.contains(k));
  for (const auto& k : test_keys) {
    CHECK_FALSE(train_keys.contains(k));
    CHECK_FALSE(val_keys.contains(k));
  }
}

TEST_CASE("captioning samples use the modality template") {
  for (const auto& ds : generate_benchmark(default_task_order(30), {30, 10, 10}, 1)) {
    if (ds.descriptor.task_type != TaskType::Captioning) continue;
    for (const auto& s : ds.train) {
      CHECK(s.input_text == caption_instruction(ds.descriptor.modality));
      CHECK(s.target_text == s.caption);
    }
  }
}

TEST_CASE("serialized datasets are byte-identical for a fixed seed and parse back") {
  const auto order = default_task_order(40);
  const auto a = generate_benchmark(order, {40, 10, 10}, 5);
  const auto b = generate_benchmark(order, {40, 10, 10}, 5);
  REQUIRE(a.size() == 6);
  std::set<std::string> labels;
  for (std::size_t i = 0; i < a.size(); ++i) {
    labels.insert(a[i].descriptor.label());
    const auto text = serialize_dataset(a[i]);
    CHECK(text == serialize_dataset(b[i]));
    const auto parsed = parse_dataset(a[i].descriptor, text);
    CHECK(serialize_dataset(parsed) == text);
  }
  CHECK(labels == std::set<std::string>{"IMG-CAP", "IMG-QA", "AUD-CAP", "AUD-QA", "VID-CAP", "VID-QA"});
}

TEST_CASE("grammar terminals are closed under generation") {
  const auto words = emitted_words();
  const auto terms = grammar_terminals();
  const std::set<std::string> term_set(terms.begin(), terms.end());
  CHECK(term_set.size() == terms.size());
  CHECK(words == term_set);
  // Golden: exhaustive enumeration of the grammar's terminals.
  CHECK(terms.size() == 44);
  CHECK(build_vocabulary(terms).size() == 44 + special::kCount);
}

TEST_CASE("invalid scenes are rejected") {
  CHECK_THROWS_AS(validate_scene(image({{Color::Red, Shape::Circle, 0, 0}, {Color::Red, Shape::Star, 1, 1}})), Error);
  CHECK_THROWS_AS(validate_scene(image({})), Error);
}
