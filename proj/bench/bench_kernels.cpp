#include <benchmark/benchmark.h>

#include <memory>

#include "faceforge/kernels.hpp"

using namespace faceforge;

namespace {

const MorphableModel& model()
{
    static const auto m = make_toy_model(11, 500, 20, 10);
    return m;
}

std::vector<Coefficients> coeffs(std::size_t n)
{
    Rng rng(1);
    return sample_shape(rng, 0.8, n, model());
}

const std::vector<Mesh>& meshes()
{
    static const auto m = [] {
        const auto c = coeffs(32);
        return kernels::decode_batch_serial(model(), c);
    }();
    return m;
}

std::vector<kernels::RenderJob> jobs()
{
    std::vector<kernels::RenderJob> out;
    Camera cam;
    cam.resolution = 256;
    for (const auto& m : meshes()) {
        out.push_back({&m, cam});
    }
    return out;
}

std::vector<Vec3> scan_points(std::size_t n)
{
    Rng rng(2);
    std::vector<Vec3> p;
    for (std::size_t i = 0; i < n; ++i) {
        p.push_back({rng.uniform(-90, 90), rng.uniform(-110, 110), rng.uniform(-90, 90)});
    }
    return p;
}

struct LossInputs {
    RegionMask mask;
    std::vector<std::vector<double>> preds;
    std::vector<std::vector<Vec3>> gts;
    std::vector<const std::vector<Vec3>*> targets;
};

const LossInputs& loss_inputs()
{
    static const auto in = [] {
        LossInputs l;
        l.mask = RegionMask::from_model(model());
        const auto c = coeffs(128);
        for (std::size_t i = 0; i < c.size(); ++i) {
            l.preds.push_back(c[i].beta);
            l.gts.push_back(shaped_template(model(), c[(i + 1) % c.size()].beta));
        }
        for (const auto& g : l.gts) {
            l.targets.push_back(&g);
        }
        return l;
    }();
    return in;
}

void BM_decode_serial(benchmark::State& s)
{
    const auto c = coeffs(64);
    for (auto _ : s) {
        benchmark::DoNotOptimize(kernels::decode_batch_serial(model(), c));
    }
}
void BM_decode_omp(benchmark::State& s)
{
    const auto c = coeffs(64);
    for (auto _ : s) {
        benchmark::DoNotOptimize(kernels::decode_batch_omp(model(), c, 0));
    }
}

void BM_render_serial(benchmark::State& s)
{
    const auto j = jobs();
    for (auto _ : s) {
        benchmark::DoNotOptimize(kernels::render_batch_serial(j));
    }
}
void BM_render_omp(benchmark::State& s)
{
    const auto j = jobs();
    for (auto _ : s) {
        benchmark::DoNotOptimize(kernels::render_batch_omp(j, 0));
    }
}

void BM_nearest_serial(benchmark::State& s)
{
    const Bvh bvh(meshes()[0]);
    const auto p = scan_points(20000);
    for (auto _ : s) {
        benchmark::DoNotOptimize(kernels::nearest_batch_serial(bvh, p));
    }
}
void BM_nearest_omp(benchmark::State& s)
{
    const Bvh bvh(meshes()[0]);
    const auto p = scan_points(20000);
    for (auto _ : s) {
        benchmark::DoNotOptimize(kernels::nearest_batch_omp(bvh, p, 0));
    }
}
void BM_nearest_brute_force(benchmark::State& s)
{
    const auto p = scan_points(500);
    for (auto _ : s) {
        benchmark::DoNotOptimize(kernels::nearest_brute_force(meshes()[0], p));
    }
}

void BM_loss_serial(benchmark::State& s)
{
    const auto& l = loss_inputs();
    for (auto _ : s) {
        benchmark::DoNotOptimize(kernels::loss_grad_batch_serial(model(), l.mask, l.preds, l.targets));
    }
}
void BM_loss_omp(benchmark::State& s)
{
    const auto& l = loss_inputs();
    for (auto _ : s) {
        benchmark::DoNotOptimize(kernels::loss_grad_batch_omp(model(), l.mask, l.preds, l.targets, 0));
    }
}

} // namespace

BENCHMARK(BM_decode_serial);
BENCHMARK(BM_decode_omp);
BENCHMARK(BM_render_serial);
BENCHMARK(BM_render_omp);
BENCHMARK(BM_nearest_serial);
BENCHMARK(BM_nearest_omp);
BENCHMARK(BM_nearest_brute_force);
BENCHMARK(BM_loss_serial);
BENCHMARK(BM_loss_omp);

BENCHMARK_MAIN();
