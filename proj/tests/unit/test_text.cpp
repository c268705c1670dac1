#include "doctest.h"

#include <filesystem>

#include "moincl/error.hpp"
#include "moincl/syndata.hpp"
#include "moincl/text.hpp"

using namespace moincl;

TEST_CASE("normalize_text lowercases, strips punctuation and splits question marks") {
  CHECK(normalize_text("A  Red circle") == "a red circle");
  CHECK(normalize_text("What color is the circle?") == "what color is the circle ?");
  CHECK(normalize_text("  hello, world!  ") == "hello world");
  CHECK(normalize_text("") == "");
}

TEST_CASE("vocabulary counts specials first") {
  const std::vector<std::string> corpus{"a red circle"};
  const auto v = Vocabulary::build(corpus);
  CHECK(v.size() == 3 + special::kCount);
  CHECK(v.id("a") == special::kCount);
  CHECK(v.is_special(special::kPad));
  CHECK(v.is_special(special::kVideo));
  CHECK_FALSE(v.is_special(v.id("red")));
  for (int id = 0; id < special::kCount; ++id) CHECK(v.id(v.token(id)) == id);
}

TEST_CASE("vocabulary deduplicates") {
  const std::vector<std::string> corpus{"a a a"};
  const auto v = Vocabulary::build(corpus);
  CHECK(v.size() == 1 + special::kCount);
}

TEST_CASE("empty corpus is rejected") {
  const std::vector<std::string> corpus;
  CHECK_THROWS_WITH_AS(Vocabulary::build(corpus), "empty corpus", Error);
}

TEST_CASE("encode and decode round trip") {
  const std::vector<std::string> corpus{"a red circle"};
  const auto v = Vocabulary::build(corpus);
  const auto ids = v.encode("a red circle");
  CHECK(ids == std::vector<int>{v.id("a"), v.id("red"), v.id("circle")});
  CHECK(v.decode(ids) == "a red circle");
  CHECK(v.encode("").empty());
  CHECK(v.decode(std::vector<int>{}) == "");
  CHECK(v.encode("A  Red circle") == ids);
}

TEST_CASE("decode skips specials") {
  const std::vector<std::string> corpus{"a red circle"};
  const auto v = Vocabulary::build(corpus);
  const std::vector<int> ids{special::kBos, v.id("red"), special::kEos};
  CHECK(v.decode(ids) == "red");
}

TEST_CASE("out-of-vocabulary tokens are named") {
  const std::vector<std::string> corpus{"a red circle"};
  const auto v = Vocabulary::build(corpus);
  CHECK_THROWS_WITH_AS(v.encode("a blue circle"), doctest::Contains("'blue'"), Error);
}

TEST_CASE("vocabulary save and load preserve ids and fingerprint") {
  const std::vector<std::string> corpus{"a red circle", "the blue square ?"};
  const auto v = Vocabulary::build(corpus);
  const auto path = std::filesystem::temp_directory_path() / "moincl_vocab_test.txt";
  v.save(path);
  const auto w = Vocabulary::load(path);
  std::filesystem::remove(path);
  CHECK(w.tokens() == v.tokens());
  CHECK(w.fingerprint() == v.fingerprint());
}

TEST_CASE("round trip holds for every generated dataset string") {
  const auto v = build_vocabulary(grammar_terminals());
  for (const auto& ds : generate_benchmark(default_task_order(40), {40, 10, 10}, 3)) {
    for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
      for (const auto& s : *split) {
        for (const auto& text : {s.input_text, s.target_text, s.caption}) {
          CHECK(v.decode(v.encode(text)) == normalize_text(text));
        }
      }
    }
  }
}
