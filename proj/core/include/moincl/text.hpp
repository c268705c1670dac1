#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "moincl/scene.hpp"

namespace moincl {

/// Lowercase, drop punctuation other than '?', split '?' into its own token,
/// collapse whitespace. Applied before tokenization and QA exact-match.
std::string normalize_text(std::string_view text);

/// Whitespace split of already-normalized text.
std::vector<std::string> split_words(std::string_view text);

namespace special {
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kSep = 3;
inline constexpr int kImage = 4;
inline constexpr int kAudio = 5;
inline constexpr int kVideo = 6;
inline constexpr int kCount = 7;
}  // namespace special

int modality_token(Modality m);

/// Word-level vocabulary. Special tokens occupy ids [0, special::kCount).
class Vocabulary {
 public:
  /// Throws moincl::Error("empty corpus") for an empty corpus.
  static Vocabulary build(std::span<const std::string> corpus);
  static Vocabulary load(const std::filesystem::path& path);

  void save(const std::filesystem::path& path) const;

  /// Normalizes first; throws moincl::Error naming the first out-of-vocabulary token.
  std::vector<int> encode(std::string_view text) const;
  /// Skips special tokens.
  std::string decode(std::span<const int> ids) const;

  bool contains(std::string_view token) const;
  int id(std::string_view token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  bool is_special(int id) const { return id >= 0 && id < special::kCount; }

  /// FNV-1a over the token list; recorded in checkpoint manifests.
  std::uint64_t fingerprint() const;

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  explicit Vocabulary(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

Vocabulary build_vocabulary(std::span<const std::string> corpus);

}  // namespace moincl
