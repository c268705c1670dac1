#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "moincl/model.hpp"
#include "moincl/rng.hpp"
#include "moincl/text.hpp"

namespace moincl {

/// Text-only instructions shared by every task of a run.
class InstructionSet {
 public:
  /// `count` distinct imperative sentences built from fixed templates, in a
  /// seed-dependent order. Throws if `count` exceeds the template space.
  static InstructionSet bundled(int count = 512, std::uint64_t seed = 0);
  /// One instruction per line; blank lines are skipped.
  static InstructionSet load(const std::filesystem::path& path);
  explicit InstructionSet(std::vector<std::string> instructions);

  void save(const std::filesystem::path& path) const;

  const std::vector<std::string>& instructions() const { return instructions_; }
  std::size_t size() const { return instructions_.size(); }

  /// `n` instructions drawn uniformly with replacement.
  std::vector<std::string> sample(int n, Rng& rng) const;

 private:
  std::vector<std::string> instructions_;
};

/// Mean over the batch of the per-position KL(current || old) from teacher
/// forcing each instruction's own tokens. Throws on an empty batch.
double ikd_loss(const ModelState& current, const ModelState& old,
                std::span<const std::vector<int>> batch);

/// Same value; accumulates scale * d(loss)/d(theta) for `selection` into `grads`.
double ikd_loss_grad(const ModelState& current, const ModelState& old,
                     std::span<const std::vector<int>> batch, const TrainableSelection& selection,
                     GradMap& grads, double scale = 1.0);

/// Variants reading the old model's outputs through a memo.
double ikd_loss(const ModelState& current, FrozenOutputs& old,
                std::span<const std::vector<int>> batch);
double ikd_loss_grad(const ModelState& current, FrozenOutputs& old,
                     std::span<const std::vector<int>> batch, const TrainableSelection& selection,
                     GradMap& grads, double scale = 1.0);

/// Encodes instructions, dropping any that do not fit the context.
std::vector<std::vector<int>> encode_instructions(std::span<const std::string> texts,
                                                  const Vocabulary& vocab, const ModelDims& dims);

}  // namespace moincl
