#include "doctest.h"

#include <cstring>

#include "faceforge/error.hpp"
#include "faceforge/kernels.hpp"
#include "test_util.hpp"

using namespace faceforge;

namespace {

bool same_bits(double a, double b)
{
    return std::memcmp(&a, &b, sizeof a) == 0;
}

std::vector<Coefficients> random_coeffs(const MorphableModel& m, std::size_t n, Rng& rng)
{
    std::vector<Coefficients> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto c = Coefficients::zeros(m);
        c.beta = testutil::gaussian_vector(rng, m.n_shape, 0.8);
        c.psi = testutil::gaussian_vector(rng, m.n_expr, 0.5);
        c.theta = testutil::gaussian_vector(rng, m.n_pose(), 0.1);
        out.push_back(std::move(c));
    }
    return out;
}

} // namespace

TEST_CASE("decode batch: OpenMP matches serial for several worker counts")
{
    const auto& m = testutil::toy();
    Rng rng(1);
    const auto coeffs = random_coeffs(m, 37, rng);
    const auto ref = kernels::decode_batch_serial(m, coeffs);
    for (int w : {1, 2, 3, 8}) {
        const auto got = kernels::decode_batch_omp(m, coeffs, w);
        REQUIRE(got.size() == ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) {
            CHECK(got[i].vertices == ref[i].vertices);
        }
    }
}

TEST_CASE("render batch: OpenMP matches serial")
{
    const auto& m = testutil::toy();
    Rng rng(2);
    const auto meshes = kernels::decode_batch_serial(m, random_coeffs(m, 6, rng));
    std::vector<kernels::RenderJob> jobs;
    for (const auto& mesh : meshes) {
        auto cam = sample_camera(rng, 250.0, 300.0);
        cam.resolution = 96;
        jobs.push_back({&mesh, cam});
    }
    const auto ref = kernels::render_batch_serial(jobs);
    for (int w : {2, 4}) {
        const auto got = kernels::render_batch_omp(jobs, w);
        for (std::size_t i = 0; i < ref.size(); ++i) {
            CHECK(std::memcmp(got[i].depth.data(), ref[i].depth.data(), ref[i].depth.size() * sizeof(float)) == 0);
        }
    }
    CHECK(ref[0].coverage_fraction() > 0.05);
}

TEST_CASE("nearest batch: OpenMP matches serial and brute force")
{
    Rng rng(3);
    const auto mesh = testutil::random_mesh(rng, 300);
    std::vector<Vec3> pts;
    for (int i = 0; i < 400; ++i) {
        pts.push_back(testutil::random_point(rng, -1.5, 1.5));
    }
    const Bvh bvh(mesh);
    const auto ref = kernels::nearest_batch_serial(bvh, pts);
    const auto got = kernels::nearest_batch_omp(bvh, pts, 3);
    const auto bf = kernels::nearest_brute_force(mesh, pts);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(same_bits(got[i].distance, ref[i].distance));
        CHECK(got[i].triangle == ref[i].triangle);
        CHECK(std::abs(bf[i].distance - ref[i].distance) < 1e-9);
    }
}

TEST_CASE("loss batch: OpenMP matches serial")
{
    const auto& m = testutil::toy();
    const auto mask = RegionMask::from_model(m);
    Rng rng(4);
    std::vector<std::vector<double>> preds;
    std::vector<std::vector<Vec3>> gts;
    for (int i = 0; i < 25; ++i) {
        preds.push_back(testutil::gaussian_vector(rng, m.n_shape, 0.8));
        gts.push_back(shaped_template(m, testutil::gaussian_vector(rng, m.n_shape, 0.8)));
    }
    std::vector<const std::vector<Vec3>*> targets;
    for (const auto& g : gts) {
        targets.push_back(&g);
    }
    const auto ref = kernels::loss_grad_batch_serial(m, mask, preds, targets);
    const auto got = kernels::loss_grad_batch_omp(m, mask, preds, targets, 4);
    REQUIRE(ref.losses.size() == 25);
    for (std::size_t i = 0; i < ref.losses.size(); ++i) {
        CHECK(same_bits(ref.losses[i], got.losses[i]));
        CHECK(ref.grads[i] == got.grads[i]);
        CHECK(ref.losses[i] == masked_mesh_loss(m, mask, preds[i], gts[i]).loss);
    }
    CHECK(same_bits(kernels::ordered_sum(ref.losses), kernels::ordered_sum(got.losses)));
}

TEST_CASE("OpenMP kernels forward errors from worker threads")
{
    const auto& m = testutil::toy();
    std::vector<Coefficients> coeffs(5, Coefficients::zeros(m));
    coeffs[3].beta.resize(2);
    CHECK_THROWS_AS(kernels::decode_batch_omp(m, coeffs, 2), DimensionError);
    CHECK(kernels::resolve_workers(3) == 3);
    CHECK(kernels::resolve_workers(0) >= 1);
}
