#include "doctest.h"

#include <filesystem>

#include "moincl/checkpoint.hpp"
#include "moincl/error.hpp"
#include "moincl/losses.hpp"
#include "moincl/model.hpp"
#include "moincl/optim.hpp"
#include "moincl/rng.hpp"
#include "moincl/syndata.hpp"
#include "moincl/text.hpp"

using namespace moincl;

namespace {

constexpr int kVocab = 20;
const ModelDims kTiny{16, 1, 2, 48, 4, 8};

Scene image_scene() { return generate_scene(Modality::Image, 4); }

// Moves every adapter off its zero init so LoRA gradients are non-trivial.
void perturb(ModelState& s, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (const auto& name : s.names(ParamGroup::LmAdapter)) {
    auto& m = s.mutable_at(name);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += scale * rng.normal();
  }
}

}  // namespace

TEST_CASE("initialisation is deterministic in the seed") {
  const auto a = ModelState::initialize(kTiny, kVocab, 1);
  const auto b = ModelState::initialize(kTiny, kVocab, 1);
  const auto c = ModelState::initialize(kTiny, kVocab, 2);
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
  for (const auto& name : a.names(ParamGroup::LmAdapter)) {
    if (name.ends_with("lora_b")) CHECK(a.at(name).isZero());
  }
}

TEST_CASE("every group is present with the expected membership") {
  const auto s = ModelState::initialize(kTiny, kVocab, 0);
  CHECK(s.names(ParamGroup::Encoder).size() == 6);
  CHECK(s.names(ParamGroup::Projection).size() == 6);
  CHECK(s.names(ParamGroup::LmAdapter).size() == 8 * static_cast<std::size_t>(kTiny.layers));
  const auto sel = TrainableSelection{true, Modality::Audio, false};
  for (const auto& name : s.names(sel)) {
    const auto& p = s.params().at(name);
    CHECK((p.group == ParamGroup::LmAdapter ||
           (p.group == ParamGroup::Projection && p.modality == Modality::Audio)));
  }
}

TEST_CASE("output rows are probability distributions") {
  const auto s = ModelState::initialize(kTiny, kVocab, 0);
  const std::vector<int> prompt{7, 8};
  const std::vector<int> target{9, 10, 11};
  for (Modality m : kAllModalities) {
    const auto d = forward(s, generate_scene(m, 2), prompt, target);
    CHECK(d.positions() == 4);
    for (int r = 0; r < d.positions(); ++r) {
      CHECK(d.probs.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(d.probs.row(r).minCoeff() > 0.0);
    }
  }
}

TEST_CASE("layouts place targets after the separator") {
  const std::vector<int> prompt{7, 8};
  const std::vector<int> target{9, 10};
  const auto scene = image_scene();
  const auto l = make_multimodal_layout(scene, prompt, target, kTiny);
  const int slots = slot_count(Modality::Image);
  CHECK(l.length() == 2 + slots + 2 + 1 + 2);
  CHECK(l.tokens[0] == special::kBos);
  CHECK(l.tokens[1] == special::kImage);
  CHECK(l.targets == std::vector<int>{9, 10, special::kEos});
  CHECK(l.tokens[static_cast<std::size_t>(l.predict_positions[0])] == special::kSep);

  const std::vector<int> text{7, 8, 9};
  const auto t = make_text_layout(text, kTiny);
  CHECK(t.targets == std::vector<int>{7, 8, 9, special::kEos});
  CHECK(t.predict_positions == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("context overflow is an error") {
  const std::vector<int> prompt(60, 7);
  const std::vector<int> target{9};
  CHECK_THROWS_AS(make_multimodal_layout(image_scene(), prompt, target, kTiny), Error);
  CHECK_THROWS_AS(make_text_layout(prompt, kTiny), Error);
}

TEST_CASE("greedy decoding") {
  const auto s = ModelState::initialize(kTiny, kVocab, 0);
  const auto scene = image_scene();
  const std::vector<int> prompt{7};
  CHECK(generate_greedy(s, &scene, prompt, 0).empty());
  const auto out = generate_greedy(s, &scene, prompt, 5);
  CHECK(out.size() <= 5);
  CHECK(out == generate_greedy(s, &scene, prompt, 5));
  for (int id : out) CHECK(id != special::kEos);
}

TEST_CASE("greedy decoding agrees with the teacher-forced argmax") {
  auto s = ModelState::initialize(kTiny, kVocab, 3);
  perturb(s, 9, 0.5);
  const auto scene = image_scene();
  const std::vector<int> prompt{7, 12};
  const auto out = generate_greedy(s, &scene, prompt, 6);
  const auto d = forward(s, scene, prompt, out);
  for (std::size_t k = 0; k < out.size(); ++k) {
    Eigen::Index arg = 0;
    d.probs.row(static_cast<Eigen::Index>(k)).maxCoeff(&arg);
    CHECK(arg == out[k]);
  }
}

TEST_CASE("snapshots are unaffected by later updates") {
  auto s = ModelState::initialize(kTiny, kVocab, 0);
  const auto snap = snapshot(s);
  const auto before = snap->hash();
  perturb(s, 1, 0.1);
  CHECK(snap->hash() == before);
  CHECK(s.hash() != before);
  CHECK(s.hash(ParamGroup::LmBase) == snap->hash(ParamGroup::LmBase));
}

TEST_CASE("a single sample can be memorised") {
  auto s = ModelState::initialize(kTiny, kVocab, 0);
  const auto scene = image_scene();
  const std::vector<int> prompt{7};
  const std::vector<int> target{9, 13, 10};
  const auto layout = make_multimodal_layout(scene, prompt, target, kTiny);
  const TrainableSelection sel{true, Modality::Image, true};
  AdamW opt(0.0);
  double loss = 0.0;
  for (int step = 0; step < 150; ++step) {
    TrainingPass pass(s, layout);
    const auto lg = cross_entropy_seq_grad(pass.distribution(), layout.targets);
    loss = lg.value;
    auto g = s.zero_grads(sel);
    pass.backward(lg.dlogits, sel, g);
    opt.step(s, g, 1e-2);
  }
  CHECK(loss < 0.05);
  CHECK(generate_greedy(s, &scene, prompt, 8) == target);
}

TEST_CASE("backward matches finite differences") {
  auto s = ModelState::initialize(kTiny, kVocab, 5);
  perturb(s, 6, 0.3);
  const auto scene = generate_scene(Modality::Video, 8);
  const std::vector<int> prompt{7, 8};
  const std::vector<int> target{9, 10, 11};
  const auto layout = make_multimodal_layout(scene, prompt, target, kTiny);
  const TrainableSelection sel{true, Modality::Video, true};
  auto loss = [&](const ModelState& m) { return cross_entropy_seq(forward(m, layout), layout.targets); };

  TrainingPass pass(s, layout);
  const auto lg = cross_entropy_seq_grad(pass.distribution(), layout.targets);
  auto grads = s.zero_grads(sel);
  pass.backward(lg.dlogits, sel, grads);

  Rng rng(11);
  double worst = 0.0;
  for (const auto& [name, g] : grads) {
    for (int k = 0; k < 2; ++k) {
      const auto i = static_cast<Eigen::Index>(rng.uniform_int(static_cast<int>(g.size())));
      const double h = 1e-5;
      const double orig = s.at(name).data()[i];
      s.mutable_at(name).data()[i] = orig + h;
      const double up = loss(s);
      s.mutable_at(name).data()[i] = orig - h;
      const double down = loss(s);
      s.mutable_at(name).data()[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double an = g.data()[i];
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-7});
      INFO(name, " fd=", fd, " an=", an);
      CHECK(rel < 1e-4);
      worst = std::max(worst, rel);
    }
  }
  MESSAGE("worst relative error " << worst);
}

TEST_CASE("frozen outputs match a fresh forward pass") {
  auto s = ModelState::initialize(kTiny, kVocab, 0);
  perturb(s, 2, 0.2);
  const auto scene = image_scene();
  const std::vector<int> prompt{7};
  const std::vector<int> target{9, 10};
  const auto layout = make_multimodal_layout(scene, prompt, target, kTiny);
  FrozenOutputs memo(s);
  const Matrix first = memo(layout).probs;
  const Matrix again = memo(layout).probs;
  CHECK(memo.cached() == 1);
  CHECK(first == forward(s, layout).probs);
  CHECK(again == first);
}

TEST_CASE("checkpoint round trip") {
  auto s = ModelState::initialize(kTiny, kVocab, 0);
  perturb(s, 3, 0.2);
  const auto path = std::filesystem::temp_directory_path() / "moincl_test.ckpt";
  save_checkpoint(path, s, CheckpointManifest{kTiny, kVocab, 42, 2, "MOINCL"});
  const auto loaded = load_checkpoint(path);
  CHECK(loaded.state.hash() == s.hash());
  CHECK(loaded.manifest.dims == kTiny);
  CHECK(loaded.manifest.vocab_fingerprint == 42);
  CHECK(loaded.manifest.task_index == 2);
  CHECK(loaded.manifest.method == "MOINCL");
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), Error);
}
