// Serial reference kernels against their OpenMP versions. Threads follow
// OMP_NUM_THREADS.

#include "seedgrow/hdbscan.hpp"
#include "seedgrow/mask_filter.hpp"
#include "seedgrow/projection.hpp"

#include <benchmark/benchmark.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <random>

using namespace seedgrow;

namespace {

CameraView bench_view(int w, int h) {
  CameraView v;
  v.view_id = "bench";
  v.width = w;
  v.height = h;
  v.intrinsics << 0.8 * w, 0, (w - 1) / 2.0, 0, 0.8 * w, (h - 1) / 2.0, 0, 0, 1;
  return v;
}

PointCloud bench_cloud(std::size_t n) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<float> xy(-2.0f, 2.0f), z(1.0f, 6.0f);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.positions.emplace_back(xy(rng), xy(rng), z(rng));
  return c;
}

std::vector<Eigen::Vector3d> bench_points(std::size_t n) {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Eigen::Vector3d> p(n);
  for (auto& x : p) x = {u(rng), u(rng), u(rng)};
  return p;
}

MaskSuperpointTable bench_table(std::size_t masks, std::size_t views, int superpoints) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> sp(0, superpoints - 1), len(3, 40);
  MaskSuperpointTable t;
  for (std::size_t j = 0; j < views; ++j) t.view_ids.push_back("v" + std::to_string(j));
  t.sets.resize(masks);
  for (std::size_t m = 0; m < masks; ++m) {
    t.mask_ids.push_back(static_cast<MaskId>(m));
    t.origin_views.push_back(t.view_ids[m % views]);
    for (std::size_t j = 0; j < views; ++j) {
      std::vector<SuperpointId> s;
      const int start = sp(rng), n = len(rng);
      for (int k = 0; k < n; ++k) s.push_back((start + k) % superpoints);
      std::sort(s.begin(), s.end());
      t.sets[m].push_back(std::move(s));
    }
  }
  return t;
}

template <bool Serial>
void BM_rasterize(benchmark::State& state) {
  const auto view = bench_view(640, 480);
  const auto proj = project_points(bench_cloud(static_cast<std::size_t>(state.range(0))), view);
  MappingConfig cfg;
  for (auto _ : state) {
    auto d = Serial ? serial::rasterize_depth(proj, view, cfg) : rasterize_depth(proj, view, cfg);
    benchmark::DoNotOptimize(d.values.data());
  }
}

template <bool Serial>
void BM_visibility(benchmark::State& state) {
  const auto view = bench_view(640, 480);
  const auto proj = project_points(bench_cloud(static_cast<std::size_t>(state.range(0))), view);
  MappingConfig cfg;
  const auto depth = rasterize_depth(proj, view, cfg);
  for (auto _ : state) {
    auto m = Serial ? serial::verify_visibility(proj, view, depth, cfg) : verify_visibility(proj, view, depth, cfg);
    benchmark::DoNotOptimize(m.visible.data());
  }
}

template <bool Serial>
void BM_core_distances(benchmark::State& state) {
  const auto p = bench_points(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto c = Serial ? serial::core_distances(p, 30) : core_distances(p, 30);
    benchmark::DoNotOptimize(c.data());
  }
}

template <bool Serial>
void BM_mst(benchmark::State& state) {
  const auto p = bench_points(static_cast<std::size_t>(state.range(0)));
  const auto core = core_distances(p, 30);
  for (auto _ : state) {
    auto e = Serial ? serial::mutual_reachability_mst(p, core) : mutual_reachability_mst(p, core);
    benchmark::DoNotOptimize(e.data());
  }
}

template <bool Serial>
void BM_cooccurrence(benchmark::State& state) {
  const auto t = bench_table(static_cast<std::size_t>(state.range(0)), 10, 400);
  for (auto _ : state) {
    auto s = Serial ? serial::cooccurrence_scores(t, ScoreNormalization::cooccurring)
                    : cooccurrence_scores(t, ScoreNormalization::cooccurring);
    benchmark::DoNotOptimize(s.data());
  }
}

}  // namespace

BENCHMARK(BM_rasterize<true>)->Name("rasterize/serial")->Arg(100000)->Arg(1000000);
BENCHMARK(BM_rasterize<false>)->Name("rasterize/omp")->Arg(100000)->Arg(1000000);
BENCHMARK(BM_visibility<true>)->Name("visibility/serial")->Arg(100000)->Arg(1000000);
BENCHMARK(BM_visibility<false>)->Name("visibility/omp")->Arg(100000)->Arg(1000000);
BENCHMARK(BM_core_distances<true>)->Name("core_distances/serial")->Arg(5000)->Arg(20000);
BENCHMARK(BM_core_distances<false>)->Name("core_distances/omp")->Arg(5000)->Arg(20000);
BENCHMARK(BM_mst<true>)->Name("mst/serial")->Arg(2000)->Arg(8000);
BENCHMARK(BM_mst<false>)->Name("mst/omp")->Arg(2000)->Arg(8000);
BENCHMARK(BM_cooccurrence<true>)->Name("cooccurrence/serial")->Arg(100)->Arg(400);
BENCHMARK(BM_cooccurrence<false>)->Name("cooccurrence/omp")->Arg(100)->Arg(400);

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::err);
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
