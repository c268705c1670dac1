#include <benchmark/benchmark.h>

#include "moincl/losses.hpp"
#include "moincl/metrics.hpp"
#include "moincl/model.hpp"
#include "moincl/rng.hpp"
#include "moincl/syndata.hpp"

using namespace moincl;

namespace {

constexpr int kVocab = 142;

SequenceLayout caption_layout(const Scene& scene, const ModelDims& dims) {
  const std::vector<int> prompt{7, 8, 9};
  const std::vector<int> target{10, 11, 12, 13, 14, 15, 16, 17, 18};
  return make_multimodal_layout(scene, prompt, target, dims);
}

void BM_Forward(benchmark::State& state) {
  const ModelDims dims{static_cast<int>(state.range(0)), 2, 4, 64, 8, 32};
  const auto model = ModelState::initialize(dims, kVocab, 0);
  const auto scene = generate_scene(Modality::Video, 1);
  const auto layout = caption_layout(scene, dims);
  for (auto _ : state) benchmark::DoNotOptimize(forward(model, layout));
}
BENCHMARK(BM_Forward)->Arg(64)->Arg(128);

void BM_ForwardBackward(benchmark::State& state) {
  const ModelDims dims{static_cast<int>(state.range(0)), 2, 4, 64, 8, 32};
  const auto model = ModelState::initialize(dims, kVocab, 0);
  const auto scene = generate_scene(Modality::Video, 1);
  const auto layout = caption_layout(scene, dims);
  const auto sel = TrainableSelection{true, Modality::Video, false};
  for (auto _ : state) {
    TrainingPass pass(model, layout);
    const auto lg = cross_entropy_seq_grad(pass.distribution(), layout.targets);
    auto grads = model.zero_grads(sel);
    pass.backward(lg.dlogits, sel, grads);
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(64)->Arg(128);

void BM_GreedyDecode(benchmark::State& state) {
  const ModelDims dims{128, 2, 4, 64, 8, 32};
  const auto model = ModelState::initialize(dims, kVocab, 0);
  const auto scene = generate_scene(Modality::Image, 1);
  const std::vector<int> prompt{7, 8, 9};
  for (auto _ : state) benchmark::DoNotOptimize(generate_greedy(model, &scene, prompt, 24));
}
BENCHMARK(BM_GreedyDecode);

void BM_Cider(benchmark::State& state) {
  std::vector<std::string> cands;
  std::vector<std::vector<std::string>> refs;
  for (int i = 0; i < state.range(0); ++i) {
    const auto scene = generate_scene(Modality::Image, static_cast<std::uint64_t>(i));
    refs.push_back({render_caption(scene)});
    cands.push_back(render_caption(generate_scene(Modality::Image, static_cast<std::uint64_t>(i) + 7)));
  }
  for (auto _ : state) benchmark::DoNotOptimize(cider(cands, refs));
}
BENCHMARK(BM_Cider)->Arg(50)->Arg(500);

}  // namespace

BENCHMARK_MAIN();
