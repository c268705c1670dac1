#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moincl/config.hpp"
#include "moincl/scene.hpp"
#include "moincl/tensor.hpp"

namespace moincl {

/// Frozen/trainable split of the toy MLLM. Encoders and the LM base never
/// change after construction (the base only during its text pre-training).
enum class ParamGroup { Encoder, Projection, LmBase, LmAdapter };

std::string_view to_string(ParamGroup g);

struct Parameter {
  Matrix value;
  ParamGroup group = ParamGroup::LmBase;
  std::optional<Modality> modality;
};

using ParamMap = std::map<std::string, Parameter>;
using GradMap = std::map<std::string, Matrix>;

/// Raw slot features per modality, before the frozen encoder.
int raw_feature_width(Modality m);
/// Number of LM-space embeddings a payload of this modality produces.
int slot_count(Modality m);

/// Parameters selected for gradient accumulation.
struct TrainableSelection {
  bool adapters = true;
  std::optional<Modality> projection;
  bool lm_base = false;

  bool contains(const Parameter& p) const;
};

/// Θ: every tensor of the model. θ (the LM component used for fusion and
/// distillation) is the LmAdapter group.
class ModelState {
 public:
  /// Random encoders/projections/base, LoRA A random and LoRA B zero.
  static ModelState initialize(const ModelDims& dims, int vocab_size, std::uint64_t seed);

  const ModelDims& dims() const { return dims_; }
  int vocab_size() const { return vocab_size_; }

  const ParamMap& params() const { return params_; }
  const Matrix& at(const std::string& name) const;
  Matrix& mutable_at(const std::string& name);
  bool has(const std::string& name) const { return params_.contains(name); }

  std::vector<std::string> names(ParamGroup group) const;
  std::vector<std::string> names(const TrainableSelection& selection) const;

  /// FNV-1a over names and tensor bytes; optionally restricted to one group.
  std::uint64_t hash() const;
  std::uint64_t hash(ParamGroup group) const;

  /// Zero-filled gradient buffers for the selection.
  GradMap zero_grads(const TrainableSelection& selection) const;

  /// Used by the checkpoint reader.
  static ModelState from_parts(const ModelDims& dims, int vocab_size, ParamMap params);

 private:
  ModelDims dims_;
  int vocab_size_ = 0;
  ParamMap params_;
};

/// Immutable handle on a frozen copy of the parameters.
using Snapshot = std::shared_ptr<const ModelState>;
Snapshot snapshot(const ModelState& state);

/// Per-position probability vectors with a mask of active (non-PAD) positions.
struct SequenceDistribution {
  Matrix probs;  // positions x vocab
  std::vector<std::uint8_t> mask;

  int positions() const { return static_cast<int>(probs.rows()); }
  int active_positions() const;
  static SequenceDistribution from_logits(const Matrix& logits);
};

/// One model input laid out as rows:
///   multimodal: [BOS][<mod>][slot...][prompt...][SEP][target...]
///   text-only:  [BOS][text...]
/// `predict_positions[k]` is the row whose output predicts `targets[k]`.
struct SequenceLayout {
  const Scene* payload = nullptr;
  std::vector<int> tokens;  // -1 marks a modality slot row
  int slot_begin = 0;
  int slot_count = 0;
  std::vector<int> predict_positions;
  std::vector<int> targets;

  int length() const { return static_cast<int>(tokens.size()); }
};

/// Teacher-forced layout predicting `target` followed by EOS. Throws on context overflow.
SequenceLayout make_multimodal_layout(const Scene& payload, std::span<const int> prompt,
                                      std::span<const int> target, const ModelDims& dims);
/// Layout predicting each text token and a closing EOS from its prefix.
SequenceLayout make_text_layout(std::span<const int> text, const ModelDims& dims);

/// Frozen featurizer output, one row per slot.
Matrix encode_features(const Scene& payload, const ModelState& state);
/// Encoder then the modality's projection: slot_count(m) x embed.
Matrix encode_and_project(const Scene& payload, const ModelState& state);

struct ForwardTrace;

/// Teacher-forced pass that keeps activations for backprop.
class TrainingPass {
 public:
  TrainingPass(const ModelState& state, const SequenceLayout& layout);
  ~TrainingPass();
  TrainingPass(TrainingPass&&) noexcept;
  TrainingPass& operator=(TrainingPass&&) noexcept;

  const SequenceDistribution& distribution() const;
  const Matrix& logits() const;

  /// Accumulates d(loss)/d(param) into `grads` for the selected parameters,
  /// given d(loss)/d(logits) at the prediction positions.
  void backward(const Matrix& dlogits, const TrainableSelection& selection, GradMap& grads) const;

 private:
  const ModelState* state_;
  std::unique_ptr<ForwardTrace> trace_;
};

/// Inference-only teacher-forced distribution.
SequenceDistribution forward(const ModelState& state, const SequenceLayout& layout);
SequenceDistribution forward(const ModelState& state, const Scene& payload,
                             std::span<const int> prompt, std::span<const int> target);

/// Teacher-forced distributions of a frozen model, memoized by layout.
/// The model must outlive this object and stay unchanged.
class FrozenOutputs {
 public:
  explicit FrozenOutputs(const ModelState& model, bool memoize = true)
      : model_(&model), memoize_(memoize) {}

  const SequenceDistribution& operator()(const SequenceLayout& layout);
  const ModelState& model() const { return *model_; }
  std::size_t cached() const { return cache_.size(); }

 private:
  const ModelState* model_;
  bool memoize_;
  SequenceDistribution scratch_;
  std::map<std::string, SequenceDistribution> cache_;
};

/// Greedy decoding with a key/value cache. `payload == nullptr` decodes from a
/// text-only prefix [BOS][prompt...]; otherwise from [BOS][<mod>][slots][prompt][SEP].
/// Stops at EOS or after max_len tokens; the prefix is left-truncated when it
/// would not leave room in the context.
std::vector<int> generate_greedy(const ModelState& state, const Scene* payload,
                                 std::span<const int> prompt, int max_len);

}  // namespace moincl
