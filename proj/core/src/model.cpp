#include "moincl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "moincl/error.hpp"
#include "moincl/rng.hpp"
#include "moincl/text.hpp"

namespace moincl {
namespace {

constexpr double kRmsEps = 1e-6;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr std::array<const char*, 4> kAttnNames{"q", "k", "v", "o"};

std::string layer_prefix(int l) { return "lm.layer" + std::to_string(l) + "."; }

std::string encoder_name(Modality m, const char* what) {
  return "encoder." + std::string(modality_word(m)) + "." + what;
}

std::string projection_name(Modality m, const char* what) {
  return "projection." + std::string(modality_word(m)) + "." + what;
}

Matrix random_matrix(Rng& rng, int rows, int cols, double scale) {
  Matrix m(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) m(r, c) = scale * rng.normal();
  }
  return m;
}

std::uint64_t fnv_bytes(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

Matrix positional_encoding(int length, int embed) {
  Matrix pe(length, embed);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < embed; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / embed);
      pe(pos, i) = std::sin(pos * freq);
      if (i + 1 < embed) pe(pos, i + 1) = std::cos(pos * freq);
    }
  }
  return pe;
}

const Matrix& cached_positional(int length, int embed) {
  thread_local std::map<std::pair<int, int>, Matrix> cache;
  auto key = std::make_pair(length, embed);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, positional_encoding(length, embed)).first;
  return it->second;
}

// Rows normalized to unit RMS; `inv` receives 1/rms per row.
Matrix rms_norm(const Matrix& x, Vector& inv) {
  const int d = static_cast<int>(x.cols());
  inv.resize(x.rows());
  Matrix y(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r) {
    const double ms = x.row(r).squaredNorm() / d;
    inv(r) = 1.0 / std::sqrt(ms + kRmsEps);
    y.row(r) = x.row(r) * inv(r);
  }
  return y;
}

Matrix rms_norm_backward(const Matrix& y, const Vector& inv, const Matrix& dy) {
  const int d = static_cast<int>(y.cols());
  Matrix dx(y.rows(), y.cols());
  for (int r = 0; r < y.rows(); ++r) {
    const double dot = dy.row(r).dot(y.row(r)) / d;
    dx.row(r) = inv(r) * (dy.row(r) - dot * y.row(r));
  }
  return dx;
}

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + 0.044715 * u * u * u))); }

double gelu_grad(double u) {
  const double t = std::tanh(kGeluC * (u + 0.044715 * u * u * u));
  return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * u * u);
}

template <class Row>
void softmax_row_inplace(Row&& row, int valid) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < valid; ++j) mx = std::max(mx, row(j));
  double sum = 0.0;
  for (int j = 0; j < valid; ++j) {
    row(j) = std::exp(row(j) - mx);
    sum += row(j);
  }
  for (int j = 0; j < valid; ++j) row(j) /= sum;
  for (int j = valid; j < row.size(); ++j) row(j) = 0.0;
}

struct EffectiveLayer {
  std::array<Matrix, 4> attn;  // W + B A for q, k, v, o
  const Matrix* up = nullptr;
  const Matrix* down = nullptr;
};

std::vector<EffectiveLayer> effective_layers(const ModelState& state) {
  std::vector<EffectiveLayer> out(state.dims().layers);
  for (int l = 0; l < state.dims().layers; ++l) {
    const auto p = layer_prefix(l);
    for (int k = 0; k < 4; ++k) {
      const std::string base = p + "attn." + kAttnNames[k];
      out[l].attn[k] = state.at(base + ".weight") +
                       state.at(base + ".lora_b") * state.at(base + ".lora_a");
    }
    out[l].up = &state.at(p + "mlp.up.weight");
    out[l].down = &state.at(p + "mlp.down.weight");
  }
  return out;
}

// Raw slot features of one still image into rows [row0, row0 + kMaxObjects).
void image_raw(const ImageScene& img, Matrix& raw, int row0) {
  for (std::size_t k = 0; k < img.objects.size() && k < kMaxObjects; ++k) {
    const auto& o = img.objects[k];
    const int r = row0 + static_cast<int>(k);
    raw(r, 0) = 1.0;
    raw(r, 1 + static_cast<int>(o.color)) = 1.0;
    raw(r, 5 + static_cast<int>(o.shape)) = 1.0;
    raw(r, 9 + o.row) = 1.0;
    raw(r, 13 + o.col) = 1.0;
  }
}

Matrix raw_features(const Scene& payload) {
  const Modality m = modality_of(payload);
  Matrix raw = Matrix::Zero(slot_count(m), raw_feature_width(m));
  if (const auto* img = std::get_if<ImageScene>(&payload)) {
    image_raw(*img, raw, 0);
  } else if (const auto* aud = std::get_if<AudioClip>(&payload)) {
    for (int k = 0; k < kAudioEvents; ++k) {
      raw(k, 0) = 1.0;
      raw(k, 1 + static_cast<int>(aud->events[k].sound)) = 1.0;
      raw(k, 5 + static_cast<int>(aud->events[k].loudness)) = 1.0;
    }
  } else {
    const auto frames = std::get<VideoClip>(payload).frames();
    for (int f = 0; f < kVideoFrames; ++f) image_raw(frames[f], raw, f * kMaxObjects);
  }
  return raw;
}

}  // namespace

std::string_view to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::Encoder: return "encoder";
    case ParamGroup::Projection: return "projection";
    case ParamGroup::LmBase: return "lm_base";
    case ParamGroup::LmAdapter: return "lm_adapter";
  }
  return "?";
}

int raw_feature_width(Modality m) {
  switch (m) {
    case Modality::Image:
    case Modality::Video: return 17;
    case Modality::Audio: return 7;
  }
  return 0;
}

int slot_count(Modality m) {
  switch (m) {
    case Modality::Image: return kMaxObjects;
    case Modality::Audio: return kAudioEvents;
    case Modality::Video: return kVideoFrames * kMaxObjects;
  }
  return 0;
}

bool TrainableSelection::contains(const Parameter& p) const {
  switch (p.group) {
    case ParamGroup::Encoder: return false;
    case ParamGroup::Projection: return projection.has_value() && p.modality == projection;
    case ParamGroup::LmBase: return lm_base;
    case ParamGroup::LmAdapter: return adapters;
  }
  return false;
}

ModelState ModelState::initialize(const ModelDims& dims, int vocab_size, std::uint64_t seed) {
  dims.validate();
  if (vocab_size <= special::kCount) throw Error("vocabulary too small for model");
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  ModelState s;
  s.dims_ = dims;
  s.vocab_size_ = vocab_size;
  const int d = dims.embed;
  auto add = [&](const std::string& name, Matrix value, ParamGroup g,
                 std::optional<Modality> m = std::nullopt) {
    s.params_.emplace(name, Parameter{std::move(value), g, m});
  };
  for (Modality m : kAllModalities) {
    const int raw = raw_feature_width(m);
    add(encoder_name(m, "weight"), random_matrix(rng, dims.feature, raw, 1.5 / std::sqrt(raw)),
        ParamGroup::Encoder, m);
    add(encoder_name(m, "bias"), random_matrix(rng, dims.feature, 1, 0.1), ParamGroup::Encoder, m);
  }
  for (Modality m : kAllModalities) {
    add(projection_name(m, "weight"),
        random_matrix(rng, d, dims.feature, 1.0 / std::sqrt(dims.feature)), ParamGroup::Projection,
        m);
    add(projection_name(m, "bias"), Matrix::Zero(d, 1), ParamGroup::Projection, m);
  }
  add("lm.token_embedding", random_matrix(rng, vocab_size, d, 1.0), ParamGroup::LmBase);
  const double attn_scale = 1.0 / std::sqrt(d);
  const double out_scale = attn_scale / std::sqrt(2.0 * dims.layers);
  for (int l = 0; l < dims.layers; ++l) {
    const auto p = layer_prefix(l);
    for (int k = 0; k < 4; ++k) {
      const std::string base = p + "attn." + kAttnNames[k];
      add(base + ".weight", random_matrix(rng, d, d, k == 3 ? out_scale : attn_scale),
          ParamGroup::LmBase);
      add(base + ".lora_a", random_matrix(rng, dims.rank, d, 1.0), ParamGroup::LmAdapter);
      add(base + ".lora_b", Matrix::Zero(d, dims.rank), ParamGroup::LmAdapter);
    }
    add(p + "mlp.up.weight", random_matrix(rng, 4 * d, d, attn_scale), ParamGroup::LmBase);
    add(p + "mlp.down.weight", random_matrix(rng, d, 4 * d, 1.0 / std::sqrt(4.0 * d) / std::sqrt(2.0 * dims.layers)),
        ParamGroup::LmBase);
  }
  add("lm.head.weight", random_matrix(rng, vocab_size, d, attn_scale), ParamGroup::LmBase);
  return s;
}

ModelState ModelState::from_parts(const ModelDims& dims, int vocab_size, ParamMap params) {
  ModelState reference = initialize(dims, vocab_size, 0);
  if (reference.params_.size() != params.size()) throw Error("parameter census mismatch");
  for (const auto& [name, p] : reference.params_) {
    auto it = params.find(name);
    if (it == params.end()) throw Error("missing parameter: " + name);
    if (it->second.value.rows() != p.value.rows() || it->second.value.cols() != p.value.cols()) {
      throw Error("shape mismatch for parameter: " + name);
    }
    it->second.group = p.group;
    it->second.modality = p.modality;
  }
  ModelState s;
  s.dims_ = dims;
  s.vocab_size_ = vocab_size;
  s.params_ = std::move(params);
  return s;
}

const Matrix& ModelState::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter: " + name);
  return it->second.value;
}

Matrix& ModelState::mutable_at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter: " + name);
  return it->second.value;
}

std::vector<std::string> ModelState::names(ParamGroup group) const {
  std::vector<std::string> out;
  for (const auto& [name, p] : params_) {
    if (p.group == group) out.push_back(name);
  }
  return out;
}

std::vector<std::string> ModelState::names(const TrainableSelection& selection) const {
  std::vector<std::string> out;
  for (const auto& [name, p] : params_) {
    if (selection.contains(p)) out.push_back(name);
  }
  return out;
}

std::uint64_t ModelState::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, p] : params_) {
    h = fnv_bytes(h, name.data(), name.size());
    h = fnv_bytes(h, p.value.data(), sizeof(double) * static_cast<std::size_t>(p.value.size()));
  }
  return h;
}

std::uint64_t ModelState::hash(ParamGroup group) const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, p] : params_) {
    if (p.group != group) continue;
    h = fnv_bytes(h, name.data(), name.size());
    h = fnv_bytes(h, p.value.data(), sizeof(double) * static_cast<std::size_t>(p.value.size()));
  }
  return h;
}

GradMap ModelState::zero_grads(const TrainableSelection& selection) const {
  GradMap g;
  for (const auto& [name, p] : params_) {
    if (selection.contains(p)) g.emplace(name, Matrix::Zero(p.value.rows(), p.value.cols()));
  }
  return g;
}

Snapshot snapshot(const ModelState& state) { return std::make_shared<const ModelState>(state); }

int SequenceDistribution::active_positions() const {
  return static_cast<int>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

SequenceDistribution SequenceDistribution::from_logits(const Matrix& logits) {
  SequenceDistribution d;
  d.probs = logits;
  for (int r = 0; r < d.probs.rows(); ++r) {
    auto row = d.probs.row(r);
    softmax_row_inplace(row, static_cast<int>(row.size()));
  }
  d.mask.assign(static_cast<std::size_t>(logits.rows()), 1);
  return d;
}

SequenceLayout make_multimodal_layout(const Scene& payload, std::span<const int> prompt,
                                      std::span<const int> target, const ModelDims& dims) {
  const Modality m = modality_of(payload);
  SequenceLayout L;
  L.payload = &payload;
  L.tokens.push_back(special::kBos);
  L.tokens.push_back(modality_token(m));
  L.slot_begin = static_cast<int>(L.tokens.size());
  L.slot_count = slot_count(m);
  L.tokens.insert(L.tokens.end(), static_cast<std::size_t>(L.slot_count), -1);
  L.tokens.insert(L.tokens.end(), prompt.begin(), prompt.end());
  L.tokens.push_back(special::kSep);
  const int sep = L.length() - 1;
  L.tokens.insert(L.tokens.end(), target.begin(), target.end());
  if (L.length() > dims.context) {
    throw Error("context overflow: sequence length " + std::to_string(L.length()) +
                " exceeds context " + std::to_string(dims.context) + " (prompt " +
                std::to_string(prompt.size()) + ", target " + std::to_string(target.size()) + ")");
  }
  for (std::size_t k = 0; k <= target.size(); ++k) {
    L.predict_positions.push_back(sep + static_cast<int>(k));
    L.targets.push_back(k < target.size() ? target[k] : special::kEos);
  }
  return L;
}

SequenceLayout make_text_layout(std::span<const int> text, const ModelDims& dims) {
  SequenceLayout L;
  L.tokens.push_back(special::kBos);
  L.tokens.insert(L.tokens.end(), text.begin(), text.end());
  if (L.length() > dims.context) {
    throw Error("context overflow: text length " + std::to_string(L.length()) +
                " exceeds context " + std::to_string(dims.context));
  }
  for (std::size_t k = 0; k <= text.size(); ++k) {
    L.predict_positions.push_back(static_cast<int>(k));
    L.targets.push_back(k < text.size() ? text[k] : special::kEos);
  }
  return L;
}

Matrix encode_features(const Scene& payload, const ModelState& state) {
  const Modality m = modality_of(payload);
  const std::string wname = encoder_name(m, "weight");
  if (!state.has(wname)) throw Error("no encoder registered for modality " + std::string(to_string(m)));
  const Matrix raw = raw_features(payload);
  Matrix pre = raw * state.at(wname).transpose();
  pre.rowwise() += state.at(encoder_name(m, "bias")).col(0).transpose();
  return pre.array().tanh().matrix();
}

Matrix encode_and_project(const Scene& payload, const ModelState& state) {
  const Modality m = modality_of(payload);
  const Matrix feats = encode_features(payload, state);
  Matrix e = feats * state.at(projection_name(m, "weight")).transpose();
  e.rowwise() += state.at(projection_name(m, "bias")).col(0).transpose();
  return e;
}

struct LayerCache {
  Matrix x_in, h1, q, k, v, a, x1, h2, u, g;
  Vector inv1, inv2;
  std::vector<Matrix> probs;  // per head, T x T
};

struct ForwardTrace {
  SequenceLayout layout;
  std::vector<EffectiveLayer> layers;
  Matrix features;  // slot features when a payload is present
  std::vector<LayerCache> caches;
  Matrix x_final, h_final;
  Vector inv_final;
  Matrix logits;
  SequenceDistribution dist;
};

namespace {

void run_forward(const ModelState& state, ForwardTrace& t) {
  const auto& dims = state.dims();
  const auto& L = t.layout;
  const int T = L.length();
  const int d = dims.embed;
  const int H = dims.heads;
  const int dh = dims.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (T > dims.context) throw Error("context overflow: sequence length " + std::to_string(T));

  t.layers = effective_layers(state);
  const Matrix& tok = state.at("lm.token_embedding");
  const Matrix& pe = cached_positional(dims.context, d);

  Matrix x(T, d);
  Matrix slots;
  if (L.payload != nullptr) {
    const Modality m = modality_of(*L.payload);
    t.features = encode_features(*L.payload, state);
    slots = t.features * state.at(projection_name(m, "weight")).transpose();
    slots.rowwise() += state.at(projection_name(m, "bias")).col(0).transpose();
  }
  for (int r = 0; r < T; ++r) {
    const int id = L.tokens[static_cast<std::size_t>(r)];
    if (id < 0) {
      x.row(r) = slots.row(r - L.slot_begin);
    } else {
      if (id >= state.vocab_size()) throw Error("token id out of range: " + std::to_string(id));
      x.row(r) = tok.row(id);
    }
    x.row(r) += pe.row(r);
  }

  t.caches.resize(static_cast<std::size_t>(dims.layers));
  for (int l = 0; l < dims.layers; ++l) {
    auto& c = t.caches[static_cast<std::size_t>(l)];
    const auto& W = t.layers[static_cast<std::size_t>(l)];
    c.x_in = x;
    c.h1 = rms_norm(x, c.inv1);
    c.q = c.h1 * W.attn[0].transpose();
    c.k = c.h1 * W.attn[1].transpose();
    c.v = c.h1 * W.attn[2].transpose();
    c.a.resize(T, d);
    c.probs.resize(static_cast<std::size_t>(H));
    for (int h = 0; h < H; ++h) {
      Matrix s = c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose() * scale;
      for (int i = 0; i < T; ++i) {
        auto row = s.row(i);
        softmax_row_inplace(row, i + 1);
      }
      c.a.middleCols(h * dh, dh) = s * c.v.middleCols(h * dh, dh);
      c.probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    c.x1 = x + c.a * W.attn[3].transpose();
    c.h2 = rms_norm(c.x1, c.inv2);
    c.u = c.h2 * W.up->transpose();
    c.g = c.u.unaryExpr([](double u) { return gelu(u); });
    x = c.x1 + c.g * W.down->transpose();
  }
  t.x_final = x;
  t.h_final = rms_norm(x, t.inv_final);
  const Matrix& head = state.at("lm.head.weight");
  const int P = static_cast<int>(L.predict_positions.size());
  Matrix hp(P, d);
  for (int k = 0; k < P; ++k) hp.row(k) = t.h_final.row(L.predict_positions[static_cast<std::size_t>(k)]);
  t.logits = hp * head.transpose();
  t.dist = SequenceDistribution::from_logits(t.logits);
}

void accumulate(GradMap& grads, const std::string& name, const Matrix& g) {
  auto it = grads.find(name);
  if (it == grads.end()) {
    grads.emplace(name, g);
  } else {
    it->second += g;
  }
}

}  // namespace

TrainingPass::TrainingPass(const ModelState& state, const SequenceLayout& layout)
    : state_(&state), trace_(std::make_unique<ForwardTrace>()) {
  trace_->layout = layout;
  run_forward(state, *trace_);
}

TrainingPass::~TrainingPass() = default;
TrainingPass::TrainingPass(TrainingPass&&) noexcept = default;
TrainingPass& TrainingPass::operator=(TrainingPass&&) noexcept = default;

const SequenceDistribution& TrainingPass::distribution() const { return trace_->dist; }
const Matrix& TrainingPass::logits() const { return trace_->logits; }

void TrainingPass::backward(const Matrix& dlogits, const TrainableSelection& selection,
                            GradMap& grads) const {
  const ModelState& state = *state_;
  const ForwardTrace& t = *trace_;
  const auto& dims = state.dims();
  const auto& L = t.layout;
  const int T = L.length();
  const int d = dims.embed;
  const int H = dims.heads;
  const int dh = dims.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int P = static_cast<int>(L.predict_positions.size());
  if (dlogits.rows() != P || dlogits.cols() != state.vocab_size()) {
    throw Error("dlogits shape mismatch");
  }

  const Matrix& head = state.at("lm.head.weight");
  Matrix dhf = Matrix::Zero(T, d);
  Matrix dhp = dlogits * head;
  for (int k = 0; k < P; ++k) dhf.row(L.predict_positions[static_cast<std::size_t>(k)]) += dhp.row(k);
  if (selection.lm_base) {
    Matrix hp(P, d);
    for (int k = 0; k < P; ++k) hp.row(k) = t.h_final.row(L.predict_positions[static_cast<std::size_t>(k)]);
    accumulate(grads, "lm.head.weight", dlogits.transpose() * hp);
  }
  Matrix dx = rms_norm_backward(t.h_final, t.inv_final, dhf);

  auto weight_grad = [&](const std::string& base, const Matrix& dw_eff) {
    if (selection.lm_base) accumulate(grads, base + ".weight", dw_eff);
    if (selection.adapters) {
      accumulate(grads, base + ".lora_b", dw_eff * state.at(base + ".lora_a").transpose());
      accumulate(grads, base + ".lora_a", state.at(base + ".lora_b").transpose() * dw_eff);
    }
  };

  for (int l = dims.layers - 1; l >= 0; --l) {
    const auto& c = t.caches[static_cast<std::size_t>(l)];
    const auto& W = t.layers[static_cast<std::size_t>(l)];
    const auto p = layer_prefix(l);

    // MLP branch.
    Matrix dg = dx * (*W.down);
    if (selection.lm_base) accumulate(grads, p + "mlp.down.weight", dx.transpose() * c.g);
    Matrix du = dg.cwiseProduct(c.u.unaryExpr([](double u) { return gelu_grad(u); }));
    if (selection.lm_base) accumulate(grads, p + "mlp.up.weight", du.transpose() * c.h2);
    Matrix dh2 = du * (*W.up);
    Matrix dx1 = dx + rms_norm_backward(c.h2, c.inv2, dh2);

    // Attention branch.
    Matrix da = dx1 * W.attn[3];
    weight_grad(p + "attn.o", dx1.transpose() * c.a);
    Matrix dq(T, d), dk(T, d), dv(T, d);
    for (int h = 0; h < H; ++h) {
      const Matrix& pr = c.probs[static_cast<std::size_t>(h)];
      const auto dah = da.middleCols(h * dh, dh);
      Matrix dp = dah * c.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = pr.transpose() * dah;
      Matrix ds = pr.cwiseProduct(dp);
      const Vector rowdot = ds.rowwise().sum();
      ds -= pr.cwiseProduct(rowdot.replicate(1, T));
      dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh) * scale;
      dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh) * scale;
    }
    weight_grad(p + "attn.q", dq.transpose() * c.h1);
    weight_grad(p + "attn.k", dk.transpose() * c.h1);
    weight_grad(p + "attn.v", dv.transpose() * c.h1);
    Matrix dh1 = dq * W.attn[0] + dk * W.attn[1] + dv * W.attn[2];
    dx = dx1 + rms_norm_backward(c.h1, c.inv1, dh1);
  }

  if (selection.lm_base) {
    Matrix dtok = Matrix::Zero(state.vocab_size(), d);
    for (int r = 0; r < T; ++r) {
      const int id = L.tokens[static_cast<std::size_t>(r)];
      if (id >= 0) dtok.row(id) += dx.row(r);
    }
    accumulate(grads, "lm.token_embedding", dtok);
  }
  if (L.payload != nullptr) {
    const Modality m = modality_of(*L.payload);
    if (selection.projection == m) {
      const Matrix de = dx.middleRows(L.slot_begin, L.slot_count);
      accumulate(grads, projection_name(m, "weight"), de.transpose() * t.features);
      accumulate(grads, projection_name(m, "bias"), de.colwise().sum().transpose());
    }
  }
}

SequenceDistribution forward(const ModelState& state, const SequenceLayout& layout) {
  ForwardTrace t;
  t.layout = layout;
  run_forward(state, t);
  return std::move(t.dist);
}

SequenceDistribution forward(const ModelState& state, const Scene& payload,
                             std::span<const int> prompt, std::span<const int> target) {
  return forward(state, make_multimodal_layout(payload, prompt, target, state.dims()));
}

namespace {

// Row-at-a-time decoder with per-layer key/value caches.
class IncrementalDecoder {
 public:
  explicit IncrementalDecoder(const ModelState& state)
      : state_(state), layers_(effective_layers(state)),
        pe_(cached_positional(state.dims().context, state.dims().embed)) {
    const auto& dims = state.dims();
    keys_.assign(static_cast<std::size_t>(dims.layers), Matrix(dims.context, dims.embed));
    values_.assign(static_cast<std::size_t>(dims.layers), Matrix(dims.context, dims.embed));
  }

  int position() const { return pos_; }

  // Feeds one input row (embedding without position) and returns final hidden state.
  RowVector push(const RowVector& embedding) {
    const auto& dims = state_.dims();
    if (pos_ >= dims.context) throw Error("context overflow during decoding");
    const int dh = dims.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    RowVector x = embedding + pe_.row(pos_);
    for (int l = 0; l < dims.layers; ++l) {
      const auto& W = layers_[static_cast<std::size_t>(l)];
      auto& K = keys_[static_cast<std::size_t>(l)];
      auto& V = values_[static_cast<std::size_t>(l)];
      RowVector h = x / std::sqrt(x.squaredNorm() / dims.embed + kRmsEps);
      RowVector q = h * W.attn[0].transpose();
      K.row(pos_) = h * W.attn[1].transpose();
      V.row(pos_) = h * W.attn[2].transpose();
      RowVector a(dims.embed);
      for (int hd = 0; hd < dims.heads; ++hd) {
        RowVector s = q.segment(hd * dh, dh) * K.block(0, hd * dh, pos_ + 1, dh).transpose() * scale;
        softmax_row_inplace(s, pos_ + 1);
        a.segment(hd * dh, dh) = s * V.block(0, hd * dh, pos_ + 1, dh);
      }
      x += a * W.attn[3].transpose();
      RowVector h2 = x / std::sqrt(x.squaredNorm() / dims.embed + kRmsEps);
      RowVector u = h2 * W.up->transpose();
      x += u.unaryExpr([](double v) { return gelu(v); }) * W.down->transpose();
    }
    ++pos_;
    return x / std::sqrt(x.squaredNorm() / dims.embed + kRmsEps);
  }

  RowVector push_token(int id) { return push(state_.at("lm.token_embedding").row(id)); }

  int argmax_next(const RowVector& hidden) const {
    RowVector logits = hidden * state_.at("lm.head.weight").transpose();
    int best = 0;
    for (int j = 1; j < logits.size(); ++j) {
      if (logits(j) > logits(best)) best = j;
    }
    return best;
  }

 private:
  const ModelState& state_;
  std::vector<EffectiveLayer> layers_;
  const Matrix& pe_;
  std::vector<Matrix> keys_, values_;
  int pos_ = 0;
};

}  // namespace

std::vector<int> generate_greedy(const ModelState& state, const Scene* payload,
                                 std::span<const int> prompt, int max_len) {
  std::vector<int> out;
  if (max_len <= 0) return out;
  const int context = state.dims().context;
  IncrementalDecoder dec(state);
  RowVector hidden;
  if (payload != nullptr) {
    const Modality m = modality_of(*payload);
    const int prefix = 3 + slot_count(m) + static_cast<int>(prompt.size());
    if (prefix > context) {
      throw Error("context overflow: prefix length " + std::to_string(prefix) +
                  " exceeds context " + std::to_string(context));
    }
    max_len = std::min(max_len, context - prefix + 1);
    const Matrix slots = encode_and_project(*payload, state);
    dec.push_token(special::kBos);
    dec.push_token(modality_token(m));
    for (int k = 0; k < slots.rows(); ++k) dec.push(slots.row(k));
    for (int id : prompt) dec.push_token(id);
    hidden = dec.push_token(special::kSep);
  } else {
    // Keep the newest prompt tokens when [BOS][prompt] plus the output would overflow.
    const int room = std::max(0, context - 1 - (max_len - 1));
    const std::size_t keep = std::min(prompt.size(), static_cast<std::size_t>(room));
    max_len = std::min(max_len, context - static_cast<int>(keep));
    hidden = dec.push_token(special::kBos);
    for (std::size_t i = prompt.size() - keep; i < prompt.size(); ++i) hidden = dec.push_token(prompt[i]);
  }
  for (int step = 0; step < max_len; ++step) {
    const int next = dec.argmax_next(hidden);
    if (next == special::kEos) break;
    out.push_back(next);
    if (step + 1 < max_len) hidden = dec.push_token(next);
  }
  return out;
}

const SequenceDistribution& FrozenOutputs::operator()(const SequenceLayout& layout) {
  if (!memoize_) {
    scratch_ = forward(*model_, layout);
    return scratch_;
  }
  std::string key = layout.payload != nullptr ? canonical_scene_key(*layout.payload) : std::string();
  key += '|';
  for (int t : layout.tokens) key += std::to_string(t) + ',';
  auto it = cache_.find(key);
  if (it == cache_.end()) it = cache_.emplace(std::move(key), forward(*model_, layout)).first;
  return it->second;
}

}  // namespace moincl
