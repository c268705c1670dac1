#include "moincl/text.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "moincl/error.hpp"

namespace moincl {

std::string normalize_text(std::string_view text) {
  std::string spaced;
  spaced.reserve(text.size() + 8);
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (ch == '?') {
      spaced += " ? ";
    } else if (std::isalnum(c)) {
      spaced += static_cast<char>(std::tolower(c));
    } else if (std::isspace(c)) {
      spaced += ' ';
    }
    // Other punctuation is dropped.
  }
  std::string out;
  out.reserve(spaced.size());
  for (char ch : spaced) {
    if (ch == ' ' && (out.empty() || out.back() == ' ')) continue;
    out += ch;
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

int modality_token(Modality m) {
  switch (m) {
    case Modality::Image: return special::kImage;
    case Modality::Audio: return special::kAudio;
    case Modality::Video: return special::kVideo;
  }
  return special::kPad;
}

namespace {
const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> kTokens{"<pad>",   "<bos>",   "<eos>", "<sep>",
                                                "<image>", "<audio>", "<video>"};
  return kTokens;
}
}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw Error("duplicate vocabulary token: " + tokens_[i]);
    }
  }
}

Vocabulary Vocabulary::build(std::span<const std::string> corpus) {
  if (corpus.empty()) throw Error("empty corpus");
  std::vector<std::string> tokens = special_tokens();
  std::unordered_map<std::string, int> seen;
  for (const auto& t : tokens) seen.emplace(t, 0);
  for (const auto& text : corpus) {
    for (auto& w : split_words(normalize_text(text))) {
      if (seen.emplace(w, 0).second) tokens.push_back(std::move(w));
    }
  }
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocabulary(std::span<const std::string> corpus) { return Vocabulary::build(corpus); }

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary file: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) tokens.push_back(line);
  }
  const auto& sp = special_tokens();
  if (tokens.size() < sp.size() || !std::equal(sp.begin(), sp.end(), tokens.begin())) {
    throw Error("vocabulary file does not start with the special tokens: " + path.string());
  }
  return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write vocabulary file: " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(normalize_text(text))) {
    auto it = index_.find(w);
    if (it == index_.end()) throw Error("out-of-vocabulary token: '" + w + "'");
    ids.push_back(it->second);
  }
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= size()) throw Error("token id out of range: " + std::to_string(id));
    if (is_special(id)) continue;
    if (!out.empty()) out += ' ';
    out += tokens_[static_cast<std::size_t>(id)];
  }
  return out;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) throw Error("out-of-vocabulary token: '" + std::string(token) + "'");
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw Error("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : tokens_) {
    for (char c : t) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    h ^= 0x0a;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace moincl
