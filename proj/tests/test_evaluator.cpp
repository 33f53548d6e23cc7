#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "faceforge/bvh.hpp"
#include "faceforge/error.hpp"
#include "faceforge/evaluate.hpp"
#include "faceforge/geometry.hpp"
#include "faceforge/kernels.hpp"
#include "faceforge/mesh_io.hpp"
#include "test_util.hpp"

using namespace faceforge;

namespace {

Eigen::Matrix3d random_rotation(Rng& rng)
{
    return rodrigues(testutil::random_point(rng, -3.0, 3.0));
}

double objective(const SimilarityTransform& t, const std::vector<Vec3>& src, const std::vector<Vec3>& dst)
{
    double s = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        s += (t.apply(src[i]) - dst[i]).squaredNorm();
    }
    return s;
}

Vec3 random_unit(Rng& rng)
{
    Vec3 d(rng.gaussian(), rng.gaussian(), rng.gaussian());
    return d.normalized();
}

// Points on the model surface, uniform over triangles by area.
std::vector<Vec3> surface_samples(const Mesh& mesh, Rng& rng, std::size_t n)
{
    std::vector<Vec3> out;
    const auto& tris = *mesh.triangles;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = tris[rng.below(tris.size())];
        double u = rng.uniform(), v = rng.uniform();
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        out.push_back(mesh.vertices[t[0]] + u * (mesh.vertices[t[1]] - mesh.vertices[t[0]]) +
                      v * (mesh.vertices[t[2]] - mesh.vertices[t[0]]));
    }
    return out;
}

EvalInput sphere_case(double scan_radius, Rng& rng, std::size_t n_points = 2000)
{
    EvalInput in;
    in.image_id = "sphere";
    in.prediction = testutil::uv_sphere(50.0, 90, 180);
    for (std::size_t i = 0; i < n_points; ++i) {
        in.scan_points.push_back(scan_radius * random_unit(rng));
    }
    for (int axis = 0; axis < 3; ++axis) {
        for (double sign : {1.0, -1.0}) {
            Vec3 e = Vec3::Zero();
            e[axis] = sign;
            in.pred_landmarks.push_back(50.0 * e);
            in.scan_landmarks.push_back(scan_radius * e);
        }
    }
    return in;
}

} // namespace

TEST_CASE("umeyama recovers identity and a known similarity")
{
    Rng rng(1);
    std::vector<Vec3> src;
    for (int i = 0; i < 10; ++i) {
        src.push_back(testutil::random_point(rng, -5, 5));
    }
    const auto id = umeyama_align(src, src, true);
    CHECK((id.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(id.translation.norm() < 1e-12);
    CHECK(id.scale == doctest::Approx(1.0).epsilon(1e-12));

    SimilarityTransform known;
    known.rotation = Eigen::AngleAxisd(std::acos(-1.0) / 6.0, Vec3::UnitZ()).toRotationMatrix();
    known.translation = {1, 2, 3};
    known.scale = 2.0;
    std::vector<Vec3> dst;
    for (const auto& p : src) {
        dst.push_back(known.apply(p));
    }
    const auto t = umeyama_align(src, dst, true);
    CHECK((t.rotation - known.rotation).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((t.translation - known.translation).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(t.scale - 2.0) < 1e-9);
    CHECK(alignment_rms(t, src, dst) < 1e-9);
    CHECK(t.rotation.determinant() == doctest::Approx(1.0));
}

TEST_CASE("umeyama on noisy correspondences is not beaten by random local search")
{
    Rng rng(2);
    for (bool with_scale : {true, false}) {
        std::vector<Vec3> src, dst;
        const auto r = random_rotation(rng);
        for (int i = 0; i < 12; ++i) {
            src.push_back(testutil::random_point(rng, -3, 3));
            dst.push_back(1.3 * (r * src.back()) + Vec3(0.5, -1, 2) + 0.1 * testutil::random_point(rng));
        }
        const auto best = umeyama_align(src, dst, with_scale);
        const double f0 = objective(best, src, dst);
        double found = std::numeric_limits<double>::infinity();
        for (int restart = 0; restart < 20; ++restart) {
            SimilarityTransform t = best;
            t.rotation = random_rotation(rng) * t.rotation;
            double step = 0.5;
            double f = objective(t, src, dst);
            for (int it = 0; it < 3000; ++it) {
                SimilarityTransform c = t;
                c.rotation = rodrigues(step * 0.2 * testutil::random_point(rng)) * c.rotation;
                c.translation += step * testutil::random_point(rng);
                if (with_scale) {
                    c.scale *= std::exp(step * 0.1 * rng.uniform(-1, 1));
                }
                const double fc = objective(c, src, dst);
                if (fc < f) {
                    f = fc;
                    t = c;
                } else if (it % 200 == 199) {
                    step *= 0.5;
                }
            }
            found = std::min(found, f);
        }
        CHECK(found >= f0 - 1e-9 * (1.0 + f0));
    }
}

TEST_CASE("umeyama rejects degenerate input")
{
    std::vector<Vec3> line = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {3, 3, 3}};
    CHECK_THROWS_AS(umeyama_align(line, line, true), Error);
    std::vector<Vec3> two = {{0, 0, 0}, {1, 0, 0}};
    CHECK_THROWS_AS(umeyama_align(two, two, false), Error);
}

TEST_CASE("point-triangle distance closed forms")
{
    const Vec3 a(0, 0, 0), b(3, 0, 0), c(0, 3, 0);
    const Vec3 centroid = (a + b + c) / 3.0;
    CHECK(point_triangle_distance(centroid + Vec3(0, 0, 2.5), a, b, c).distance == doctest::Approx(2.5).epsilon(1e-14));
    CHECK(point_triangle_distance(centroid, a, b, c).distance < 1e-14);
    const Vec3 beyond(-1, -2, 2);
    const auto hit = point_triangle_distance(beyond, a, b, c);
    CHECK(hit.distance == doctest::Approx((beyond - a).norm()).epsilon(1e-14));
    CHECK((hit.point - a).norm() < 1e-14);
    // Edge region of bc.
    const auto e = point_triangle_distance(Vec3(3, 3, 0), a, b, c);
    CHECK(e.distance == doctest::Approx(1.5 * std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("point-triangle distance agrees with a dense barycentric search")
{
    Rng rng(3);
    const int n = 140; // about 10^4 samples including edges and corners
    for (int trial = 0; trial < 20; ++trial) {
        const Vec3 a = testutil::random_point(rng), b = testutil::random_point(rng), c = testutil::random_point(rng);
        const Vec3 p = testutil::random_point(rng, -2, 2);
        double grid = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= n; ++i) {
            for (int j = 0; i + j <= n; ++j) {
                const double u = double(i) / n, v = double(j) / n;
                grid = std::min(grid, (a + u * (b - a) + v * (c - a) - p).norm());
            }
        }
        const double exact = point_triangle_distance(p, a, b, c).distance;
        CHECK(exact <= grid + 1e-12);
        CHECK(grid - exact < 1e-4);
    }
}

TEST_CASE("degenerate triangle falls back to its edges")
{
    const Vec3 a(0, 0, 0), b(2, 0, 0), mid(1, 0, 0);
    const Vec3 p(3, 1, 0);
    CHECK(point_triangle_distance(p, a, b, mid).distance ==
          doctest::Approx(point_segment_distance(p, a, b).distance).epsilon(1e-14));
    CHECK(point_triangle_distance(p, a, a, a).distance == doctest::Approx(p.norm()).epsilon(1e-14));
}

TEST_CASE("bvh nearest agrees with brute force")
{
    Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        const auto mesh = testutil::random_mesh(rng, 500);
        std::vector<Vec3> pts;
        for (int i = 0; i < 200; ++i) {
            pts.push_back(testutil::random_point(rng, -1.5, 1.5));
        }
        const Bvh tree(mesh);
        const Bvh fine(mesh, 1);
        const auto bf = kernels::nearest_brute_force(mesh, pts);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto h = tree.nearest(pts[i]);
            CHECK(std::abs(h.distance - bf[i].distance) < 1e-9);
            CHECK(std::abs(fine.nearest(pts[i]).distance - h.distance) < 1e-12);
        }
    }
}

TEST_CASE("bvh: points on the surface and a single triangle")
{
    Rng rng(5);
    const auto sphere = testutil::uv_sphere(10.0);
    const Bvh tree(sphere);
    for (const auto& p : surface_samples(sphere, rng, 300)) {
        CHECK(tree.nearest(p).distance < 1e-9);
    }
    Mesh one{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, std::make_shared<const std::vector<Triangle>>(std::vector<Triangle>{{0, 1, 2}})};
    const Bvh single(one);
    CHECK(single.nearest({0.25, 0.25, -4}).distance == doctest::Approx(4.0));
    CHECK(single.nearest({0.25, 0.25, -4}).triangle == 0);
}

TEST_CASE("evaluation of identical and rigidly displaced surfaces")
{
    Rng rng(6);
    const auto& m = testutil::toy();
    auto c = Coefficients::zeros(m);
    c.beta = testutil::gaussian_vector(rng, m.n_shape, 0.8);
    const auto pred = decode(m, c);
    const auto idx = default_landmark_indices(m);
    CHECK(idx.size() == 7);
    EvalInput in;
    in.image_id = "a";
    in.prediction = pred;
    in.scan_points = surface_samples(pred, rng, 1000);
    for (const auto& [name, v] : idx) {
        in.pred_landmarks.push_back(pred.vertices[v]);
    }
    in.scan_landmarks = in.pred_landmarks;

    const auto same = evaluate({in});
    REQUIRE(same.images[0].ok);
    CHECK(same.mean < 1e-9);

    SimilarityTransform move;
    move.rotation = random_rotation(rng);
    move.translation = {10, -20, 30};
    auto displaced = in;
    for (auto& p : displaced.scan_points) {
        p = move.apply(p);
    }
    for (auto& p : displaced.scan_landmarks) {
        p = move.apply(p);
    }
    const auto rep = evaluate({displaced}, {.with_scale = false});
    REQUIRE(rep.images[0].ok);
    CHECK(rep.mean < 1e-6);
    CHECK(rep.images[0].landmark_rms < 1e-9);
}

TEST_CASE("scan on a sphere inflated by 1 mm gives a mean distance of 1 mm")
{
    Rng rng(7);
    const auto rep = evaluate({sphere_case(51.0, rng)}, {.with_scale = false});
    REQUIRE(rep.images[0].ok);
    CHECK(std::abs(rep.mean - 1.0) <= 0.02);
    CHECK(std::abs(rep.median - 1.0) <= 0.02);
}

TEST_CASE("scores are invariant to a similarity applied to the prediction")
{
    Rng rng(8);
    const auto& m = testutil::toy();
    const auto idx = default_landmark_indices(m);
    for (int trial = 0; trial < 3; ++trial) {
        auto c = Coefficients::zeros(m);
        c.beta = testutil::gaussian_vector(rng, m.n_shape, 0.8);
        const auto pred = decode(m, c);
        c.beta = testutil::gaussian_vector(rng, m.n_shape, 0.8);
        const auto scan = decode(m, c);
        EvalInput in;
        in.image_id = "x";
        in.prediction = pred;
        in.scan_points = surface_samples(scan, rng, 500);
        for (const auto& [name, v] : idx) {
            in.pred_landmarks.push_back(pred.vertices[v]);
            in.scan_landmarks.push_back(scan.vertices[v]);
        }
        SimilarityTransform t;
        t.rotation = random_rotation(rng);
        t.translation = testutil::random_point(rng, -100, 100);
        t.scale = rng.uniform(0.5, 2.0);
        auto moved = in;
        for (auto& v : moved.prediction.vertices) {
            v = t.apply(v);
        }
        for (auto& v : moved.pred_landmarks) {
            v = t.apply(v);
        }
        const auto a = evaluate({in});
        const auto b = evaluate({moved});
        CHECK(std::abs(a.mean - b.mean) < 1e-6);
        CHECK(std::abs(a.median - b.median) < 1e-6);
        CHECK(std::abs(a.std - b.std) < 1e-6);
    }
}

TEST_CASE("pooled statistics: order independence, failures and std")
{
    Rng rng(9);
    auto a = sphere_case(51.0, rng, 300);
    auto b = sphere_case(52.5, rng, 500);
    b.image_id = "b";
    auto bad = a;
    bad.image_id = "bad";
    bad.pred_landmarks = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}};
    bad.scan_landmarks = bad.pred_landmarks;

    const auto r1 = evaluate({a, bad, b}, {.with_scale = false});
    const auto r2 = evaluate({b, a, bad}, {.with_scale = false, .workers = 2});
    CHECK(r1.n_failed == 1);
    CHECK(r1.pooled.size() == 800);
    CHECK(r1.mean == r2.mean);
    CHECK(r1.median == r2.median);
    CHECK(r1.std == r2.std);
    CHECK(r1.pooled == r2.pooled);
    CHECK(std::is_sorted(r1.pooled.begin(), r1.pooled.end()));
    const auto& failed = *std::find_if(r1.images.begin(), r1.images.end(), [](const ImageEval& e) { return !e.ok; });
    CHECK(failed.image_id == "bad");
    CHECK(failed.error.find("landmark") != std::string::npos);

    double mean = 0.0;
    for (double d : r1.pooled) {
        mean += d;
    }
    mean /= static_cast<double>(r1.pooled.size());
    double var = 0.0;
    for (double d : r1.pooled) {
        var += (d - mean) * (d - mean);
    }
    CHECK(std::abs(std::sqrt(var / static_cast<double>(r1.pooled.size())) - r1.std) < 1e-9);
    CHECK(std::abs(mean - r1.mean) < 1e-9);

    CHECK(r1.per_image_csv().rfind("image_id,ok,n_points,median,mean,std,landmark_rms,error\n", 0) == 0);
    CHECK(r1.summary_json().find("\"n_failed\": 1") != std::string::npos);
    const auto cum = r1.cumulative_error_csv();
    CHECK(cum.rfind("threshold_mm,fraction\n", 0) == 0);
    CHECK(cum.find("\n10.0000,1.000000000\n") != std::string::npos);
}

TEST_CASE("distance stats of a tiny set")
{
    const auto s = distance_stats({3.0, 1.0, 2.0, 4.0});
    CHECK(s.median == 2.5);
    CHECK(s.mean == 2.5);
    CHECK(s.std == doctest::Approx(std::sqrt(1.25)));
}

TEST_CASE("mesh files round-trip")
{
    const auto dir = testutil::temp_dir("mesh_io");
    const auto sphere = testutil::uv_sphere(3.0, 6, 8, {1, 2, 3});
    write_obj(sphere, dir / "s.obj");
    write_ply(sphere, dir / "s.ply");
    for (const auto& name : {"s.obj", "s.ply"}) {
        const auto back = read_mesh(dir / name);
        CHECK(back.vertices == sphere.vertices);
        CHECK(*back.triangles == *sphere.triangles);
    }

    SUBCASE("obj polygons and negative indices")
    {
        std::ofstream(dir / "q.obj") << "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\nf -4 -3 -1\n";
        const auto q = read_mesh(dir / "q.obj");
        REQUIRE(q.triangles->size() == 3);
        CHECK((*q.triangles)[1] == Triangle{0, 2, 3});
        CHECK((*q.triangles)[2] == Triangle{0, 1, 3});
    }
    SUBCASE("binary ply")
    {
        std::ofstream out(dir / "b.ply", std::ios::binary);
        out << "ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
               "element face 1\nproperty list uchar int vertex_indices\nend_header\n";
        const float v[9] = {0, 0, 0, 1, 0, 0, 0, 1, 0.5f};
        out.write(reinterpret_cast<const char*>(v), sizeof v);
        const unsigned char n = 3;
        const std::int32_t f[3] = {0, 1, 2};
        out.write(reinterpret_cast<const char*>(&n), 1);
        out.write(reinterpret_cast<const char*>(f), sizeof f);
        out.close();
        const auto b = read_mesh(dir / "b.ply");
        REQUIRE(b.vertices.size() == 3);
        CHECK(b.vertices[2].z() == 0.5);
        CHECK((*b.triangles)[0] == Triangle{0, 1, 2});
    }
    SUBCASE("malformed files")
    {
        std::ofstream(dir / "x.obj") << "v 0 0\n";
        CHECK_THROWS_AS(read_mesh(dir / "x.obj"), FormatError);
        std::ofstream(dir / "y.obj") << "v 0 0 0\nf 1 2 3\n";
        CHECK_THROWS_AS(read_mesh(dir / "y.obj"), FormatError);
    }
}

TEST_CASE("landmark files round-trip")
{
    const auto dir = testutil::temp_dir("landmarks");
    const std::map<std::string, Vec3> pts = {{"nose", {1.5, -2, 3}}, {"chin", {0, 0.125, 9}}};
    write_landmark_points(pts, dir / "p.json");
    CHECK(read_landmark_points(dir / "p.json") == pts);
    const std::map<std::string, std::uint32_t> idx = {{"nose", 12}, {"chin", 40}};
    write_landmark_indices(idx, dir / "i.json");
    CHECK(read_landmark_indices(dir / "i.json") == idx);

    Mesh mesh{std::vector<Vec3>(50, Vec3::Zero()), nullptr};
    mesh.vertices[12] = {7, 7, 7};
    std::vector<Vec3> p, s;
    match_landmarks(idx, mesh, {{"nose", {1, 1, 1}}, {"ear", {2, 2, 2}}}, p, s);
    REQUIRE(p.size() == 1);
    CHECK(p[0] == Vec3(7, 7, 7));
    CHECK(s[0] == Vec3(1, 1, 1));
}
