#include <cstddef>

#include <benchmark/benchmark.h>

#include "sslforge/common/rng.h"
#include "sslforge/data/augment.h"
#include "sslforge/data/synthetic.h"

namespace sslforge {
namespace {

void BM_StandardAugment(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  const LabeledImages data = gen_synthetic_dataset(1, 4, size, 7);
  const AugPolicy policy = AugPolicy::standard(size, 0.4, 1.0);
  Rng rng(8);
  for (auto _ : state) benchmark::DoNotOptimize(apply_augmentation(data.images[0], policy, rng));
}
BENCHMARK(BM_StandardAugment)->Arg(24)->Arg(32);

void BM_MultiCropViews(benchmark::State& state) {
  const auto n_local = static_cast<std::size_t>(state.range(0));
  const LabeledImages data = gen_synthetic_dataset(1, 4, 24, 9);
  const MultiCropPolicy policy;
  Rng rng(10);
  for (auto _ : state) benchmark::DoNotOptimize(make_views(data.images[0], policy, n_local, rng));
}
BENCHMARK(BM_MultiCropViews)->Arg(0)->Arg(4);

}  // namespace
}  // namespace sslforge
