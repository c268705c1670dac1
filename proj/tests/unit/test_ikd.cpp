#include "doctest.h"

#include <filesystem>
#include <set>

#include "moincl/error.hpp"
#include "moincl/ikd.hpp"
#include "moincl/losses.hpp"
#include "moincl/optim.hpp"
#include "moincl/syndata.hpp"
#include "moincl/trainer.hpp"

using namespace moincl;

namespace {

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.task_order = default_task_order(20);
  cfg.dims = ModelDims{16, 1, 2, 48, 4, 8};
  cfg.instruction_count = 64;
  cfg.pretrain_steps = 0;
  return cfg;
}

void perturb(ModelState& s, ParamGroup group, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& name : s.names(group)) {
    auto& m = s.mutable_at(name);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += 0.3 * rng.normal();
  }
}

}  // namespace

TEST_CASE("bundled set is distinct, text-only and deterministic") {
  const auto set = InstructionSet::bundled(512, 0);
  REQUIRE(set.size() == 512);
  const std::set<std::string> unique(set.instructions().begin(), set.instructions().end());
  CHECK(unique.size() == 512);
  for (const auto& s : set.instructions()) {
    CHECK_FALSE(s.empty());
    CHECK(s.find('<') == std::string::npos);
  }
  CHECK(InstructionSet::bundled(512, 0).instructions() == set.instructions());
  CHECK(InstructionSet::bundled(512, 1).instructions() != set.instructions());
  CHECK_THROWS_AS(InstructionSet::bundled(1000000, 0), Error);
}

TEST_CASE("instructions never coincide with dataset strings") {
  const auto set = InstructionSet::bundled(512, 0);
  std::set<std::string> data_strings;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    for (const auto& ds : generate_benchmark(default_task_order(200), {200, 50, 50}, seed)) {
      for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
        for (const auto& s : *split) {
          data_strings.insert(s.input_text);
          data_strings.insert(s.target_text);
          data_strings.insert(s.caption);
        }
      }
    }
  }
  for (const auto& s : set.instructions()) CHECK_FALSE(data_strings.contains(normalize_text(s)));
}

TEST_CASE("construction rejects empty sets and placeholders") {
  CHECK_THROWS_AS(InstructionSet(std::vector<std::string>{}), Error);
  CHECK_THROWS_AS(InstructionSet(std::vector<std::string>{"describe the <image>"}), Error);
}

TEST_CASE("save and load") {
  const auto set = InstructionSet::bundled(32, 3);
  const auto path = std::filesystem::temp_directory_path() / "moincl_instructions.txt";
  set.save(path);
  CHECK(InstructionSet::load(path).instructions() == set.instructions());
  std::filesystem::remove(path);
}

TEST_CASE("sampling draws from the set") {
  const auto set = InstructionSet::bundled(16, 0);
  Rng rng(1);
  const auto batch = set.sample(40, rng);
  CHECK(batch.size() == 40);
  const std::set<std::string> all(set.instructions().begin(), set.instructions().end());
  for (const auto& s : batch) CHECK(all.contains(s));
}

TEST_CASE("loss is zero for identical models and symmetric in batch order") {
  const auto cfg = tiny_config();
  const auto base = prepare_base(cfg);
  auto batch = encode_instructions(base.instructions.instructions(), base.vocab, cfg.dims);
  batch.resize(6);
  CHECK(std::abs(ikd_loss(base.state, base.state, batch)) < 1e-12);

  auto cur = base.state;
  perturb(cur, ParamGroup::LmAdapter, 5);
  const double loss = ikd_loss(cur, base.state, batch);
  CHECK(loss > 0.0);
  auto reversed = batch;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(ikd_loss(cur, base.state, reversed) == doctest::Approx(loss).epsilon(1e-12));

  FrozenOutputs memo(base.state);
  CHECK(ikd_loss(cur, memo, batch) == doctest::Approx(loss).epsilon(1e-12));

  CHECK_THROWS_WITH_AS(ikd_loss(cur, base.state, std::span<const std::vector<int>>{}),
                       "empty instruction batch", Error);
}

TEST_CASE("encoders and projections do not reach the loss") {
  const auto cfg = tiny_config();
  const auto base = prepare_base(cfg);
  auto batch = encode_instructions(base.instructions.instructions(), base.vocab, cfg.dims);
  batch.resize(4);
  auto cur = base.state;
  perturb(cur, ParamGroup::LmAdapter, 1);
  const double before = ikd_loss(cur, base.state, batch);
  perturb(cur, ParamGroup::Encoder, 2);
  perturb(cur, ParamGroup::Projection, 3);
  CHECK(ikd_loss(cur, base.state, batch) == before);

  auto grads = cur.zero_grads(task_selection(Modality::Image));
  ikd_loss_grad(cur, base.state, batch, task_selection(Modality::Image), grads);
  for (const auto& [name, g] : grads) {
    if (cur.params().at(name).group == ParamGroup::Projection) CHECK(g.isZero());
  }
}

TEST_CASE("gradient matches finite differences") {
  const auto cfg = tiny_config();
  const auto base = prepare_base(cfg);
  auto batch = encode_instructions(base.instructions.instructions(), base.vocab, cfg.dims);
  batch.resize(3);
  auto cur = base.state;
  perturb(cur, ParamGroup::LmAdapter, 7);
  const TrainableSelection sel{true, std::nullopt, false};
  auto grads = cur.zero_grads(sel);
  const double scale = 0.7;
  const double value = ikd_loss_grad(cur, base.state, batch, sel, grads, scale);
  CHECK(value == doctest::Approx(ikd_loss(cur, base.state, batch)).epsilon(1e-12));
  Rng rng(9);
  for (const auto& [name, g] : grads) {
    const auto i = static_cast<Eigen::Index>(rng.uniform_int(static_cast<int>(g.size())));
    const double orig = cur.at(name).data()[i];
    cur.mutable_at(name).data()[i] = orig + 1e-5;
    const double up = ikd_loss(cur, base.state, batch);
    cur.mutable_at(name).data()[i] = orig - 1e-5;
    const double down = ikd_loss(cur, base.state, batch);
    cur.mutable_at(name).data()[i] = orig;
    const double fd = scale * (up - down) / 2e-5;
    const double an = g.data()[i];
    CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-7}) < 1e-4);
  }
}

TEST_CASE("adapter training on a new modality without distillation drifts the text outputs") {
  const auto cfg = tiny_config();
  const auto base = prepare_base(cfg);
  const auto data = generate_task_dataset(parse_task_order("VID-CAP", 20)[0], {20, 2, 2}, 0);
  const auto old = snapshot(base.state);
  auto model = base.state;
  const auto sel = task_selection(Modality::Video);
  AdamW opt(0.0);
  for (int step = 0; step < 200; ++step) {
    const auto& s = data.train[static_cast<std::size_t>(step) % data.train.size()];
    const auto prompt = base.vocab.encode(s.input_text);
    const auto target = base.vocab.encode(s.target_text);
    const auto layout = make_multimodal_layout(s.modality_input, prompt, target, cfg.dims);
    TrainingPass pass(model, layout);
    const auto lg = cross_entropy_seq_grad(pass.distribution(), layout.targets);
    auto grads = model.zero_grads(sel);
    pass.backward(lg.dlogits, sel, grads);
    opt.step(model, grads, 3e-3);
  }
  auto batch = encode_instructions(base.instructions.instructions(), base.vocab, cfg.dims);
  CHECK(ikd_loss(model, *old, batch) > 0.0);
}
