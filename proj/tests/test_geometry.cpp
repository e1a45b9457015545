// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <tuple>

#include "doctest.h"
#include "pointfield/chamfer.hpp"
#include "pointfield/cloud_pairs.hpp"
#include "pointfield/ply.hpp"
#include "pointfield/point_cloud.hpp"
#include "pointfield/rng.hpp"

using namespace pointfield;
using namespace pointfield::geo;
namespace fs = std::filesystem;

namespace {

PointCloud random_cloud(std::size_t n, Rng& rng, double spread = 1.0) {
    PointCloud c;
    c.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        c.points.push_back({spread * rng.normal(), spread * rng.normal(),
                            spread * rng.normal()});
    }
    return c;
}

std::set<std::tuple<double, double, double>> as_set(const PointCloud& c) {
    std::set<std::tuple<double, double, double>> s;
    for (const Vec3& p : c.points) {
        s.insert({p.x, p.y, p.z});
    }
    return s;
}

bool subset_of(const PointCloud& small, const PointCloud& big) {
    const auto big_set = as_set(big);
    for (const Vec3& p : small.points) {
        if (big_set.count({p.x, p.y, p.z}) == 0) {
            return false;
        }
    }
    return true;
}

fs::path tmp_file(const std::string& name) { return fs::temp_directory_path() / name; }

}  // namespace

TEST_CASE("normalize centers the centroid and caps the radius at one") {
    Rng rng(101);
    PointCloud c = random_cloud(200, rng, 7.0);
    for (Vec3& p : c.points) {
        p += {10.0, -4.0, 2.5};  // push the centroid well away from the origin
    }
    auto [unit, t] = normalize(c);
    Vec3 centroid;
    double max_r = 0.0;
    for (const Vec3& p : unit.points) {
        centroid += p;
        max_r = std::max(max_r, norm(p));
    }
    centroid = centroid / static_cast<double>(unit.size());
    CHECK(norm(centroid) < 1e-12);
    CHECK(max_r == doctest::Approx(1.0).epsilon(1e-12));

    SUBCASE("round-trip through the transform recovers the input") {
        const PointCloud back = t.invert(unit);
        for (std::size_t i = 0; i < c.size(); ++i) {
            CHECK(norm(back[i] - c[i]) < 1e-6 * std::max(1.0, norm(c[i])));
        }
    }
}

TEST_CASE("normalize degenerate clouds") {
    SUBCASE("single point maps to the origin with unit scale") {
        PointCloud c;
        c.points.push_back({3.0, -1.0, 2.0});
        auto [unit, t] = normalize(c);
        CHECK(norm(unit[0]) == 0.0);
        CHECK(t.scale == 1.0);
    }
    SUBCASE("all-coincident points keep scale one") {
        PointCloud c;
        for (int i = 0; i < 5; ++i) {
            c.points.push_back({1.0, 1.0, 1.0});
        }
        auto [unit, t] = normalize(c);
        CHECK(t.scale == 1.0);
        CHECK(norm(unit[3]) == 0.0);
    }
    SUBCASE("empty cloud is rejected") {
        CHECK_THROWS_AS(normalize(PointCloud{}), ContractViolation);
    }
}

TEST_CASE("ply round-trips are exact in both formats") {
    Rng rng(55);
    const PointCloud c = random_cloud(137, rng, 3.0);
    for (const PlyFormat fmt : {PlyFormat::kAscii, PlyFormat::kBinaryLittleEndian}) {
        const fs::path p = tmp_file("pointfield_roundtrip.ply");
        save_ply(c, p.string(), fmt);
        const PointCloud back = load_ply(p.string());
        REQUIRE(back.size() == c.size());
        for (std::size_t i = 0; i < c.size(); ++i) {
            CHECK(back[i] == c[i]);  // doubles survive both writers bit-exactly
        }
        fs::remove(p);
    }
}

TEST_CASE("ascii ply with extra properties and CRLF endings parses") {
    const fs::path p = tmp_file("pointfield_ascii.ply");
    std::ofstream os(p, std::ios::binary);
    os << "ply\r\n"
          "format ascii 1.0\r\n"
          "comment produced elsewhere\r\n"
          "element vertex 3\r\n"
          "property float x\r\n"
          "property float y\r\n"
          "property float z\r\n"
          "property uchar red\r\n"
          "end_header\r\n"
          "0 0 0 255\r\n"
          "1.5 0 0 128\r\n"
          "0 2.5 -1 0\r\n";
    os.close();
    const PointCloud c = load_ply(p.string());
    REQUIRE(c.size() == 3);
    CHECK(c[1].x == doctest::Approx(1.5));
    CHECK(c[2].z == doctest::Approx(-1.0));
    fs::remove(p);
}

TEST_CASE("binary ply with float32 coordinates and skipped fields loads") {
    const fs::path p = tmp_file("pointfield_bin.ply");
    std::ofstream os(p, std::ios::binary);
    os << "ply\n"
          "format binary_little_endian 1.0\n"
          "element vertex 2\n"
          "property float x\n"
          "property float y\n"
          "property float z\n"
          "property int label\n"
          "end_header\n";
    const float rows[2][3] = {{0.25f, -1.0f, 8.0f}, {1e-3f, 0.0f, -2.5f}};
    const std::int32_t labels[2] = {7, -1};
    for (int i = 0; i < 2; ++i) {
        os.write(reinterpret_cast<const char*>(rows[i]), sizeof(rows[i]));
        os.write(reinterpret_cast<const char*>(&labels[i]), sizeof(labels[i]));
    }
    os.close();
    const PointCloud c = load_ply(p.string());
    REQUIRE(c.size() == 2);
    CHECK(c[0].x == doctest::Approx(0.25));
    CHECK(c[1].z == doctest::Approx(-2.5));
    fs::remove(p);
}

TEST_CASE("malformed ply files fail with located parse errors") {
    auto write_and_expect_parse_error = [](const std::string& content,
                                           const std::string& needle) {
        const fs::path p = tmp_file("pointfield_bad.ply");
        std::ofstream os(p, std::ios::binary);
        os << content;
        os.close();
        try {
            load_ply(p.string());
            FAIL("expected ParseError for: ", needle);
        } catch (const ParseError& e) {
            INFO("message: ", e.what());
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
        fs::remove(p);
    };
    SUBCASE("missing magic") {
        write_and_expect_parse_error("plz\nformat ascii 1.0\nend_header\n", "line 1");
    }
    SUBCASE("unsupported property type") {
        write_and_expect_parse_error(
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty half x\nend_header\n0\n",
            "unsupported property type");
    }
    SUBCASE("list property in the vertex element") {
        write_and_expect_parse_error(
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float "
            "y\nproperty float z\nproperty list uchar int neighbors\nend_header\n0 0 0 0\n",
            "list property");
    }
    SUBCASE("integer-typed coordinate") {
        write_and_expect_parse_error(
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty int x\nproperty float "
            "y\nproperty float z\nend_header\n0 0 0\n",
            "must be float32 or float64");
    }
    SUBCASE("truncated ascii data") {
        write_and_expect_parse_error(
            "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float "
            "y\nproperty float z\nend_header\n0 0 0\n",
            "end of file");
    }
    SUBCASE("non-finite coordinate") {
        write_and_expect_parse_error(
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float "
            "y\nproperty float z\nend_header\nnan 0 0\n",
            "non-finite");
    }
}

TEST_CASE("truncated binary payload reports the byte position") {
    const fs::path p = tmp_file("pointfield_trunc.ply");
    std::ofstream os(p, std::ios::binary);
    os << "ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty double "
          "x\nproperty double y\nproperty double z\nend_header\n";
    const double one[3] = {1.0, 2.0, 3.0};
    os.write(reinterpret_cast<const char*>(one), sizeof(one));  // one vertex, not two
    os.close();
    CHECK_THROWS_AS(load_ply(p.string()), ParseError);
    fs::remove(p);
}

TEST_CASE("missing ply file raises an I/O error") {
    CHECK_THROWS_AS(load_ply("/nonexistent/cloud.ply"), IoError);
}

TEST_CASE("random downsampling draws an order-preserving uniform subset") {
    Rng rng(77);
    const PointCloud c = random_cloud(1000, rng);

    SUBCASE("retention 1 returns the identical cloud") {
        const PointCloud same = random_downsample(c, 1.0, 9);
        REQUIRE(same.size() == c.size());
        for (std::size_t i = 0; i < c.size(); ++i) {
            CHECK(same[i] == c[i]);
        }
    }
    SUBCASE("retention 0.5 keeps exactly half, all members of the input") {
        const PointCloud half = random_downsample(c, 0.5, 10);
        CHECK(half.size() == 500);
        CHECK(subset_of(half, c));
    }
    SUBCASE("same seed reproduces the draw, different seed changes it") {
        const PointCloud a = random_downsample(c, 0.3, 42);
        const PointCloud b = random_downsample(c, 0.3, 42);
        const PointCloud d = random_downsample(c, 0.3, 43);
        REQUIRE(a.size() == b.size());
        bool same = true;
        for (std::size_t i = 0; i < a.size(); ++i) {
            same = same && a[i] == b[i];
        }
        CHECK(same);
        CHECK(as_set(a) != as_set(d));
    }
    SUBCASE("nested draws form a subset chain") {
        Rng retr(5);
        for (int trial = 0; trial < 20; ++trial) {
            const double r1 = retr.uniform(0.2, 1.0);
            const double r2 = retr.uniform(0.2, 1.0);
            const PointCloud mid = random_downsample(c, r1, 100 + trial);
            const PointCloud fine = random_downsample(mid, r2, 200 + trial);
            CHECK(subset_of(fine, mid));
            CHECK(subset_of(mid, c));
        }
    }
    SUBCASE("out-of-range retention is rejected") {
        CHECK_THROWS_AS(random_downsample(c, 0.0, 1), ContractViolation);
        CHECK_THROWS_AS(random_downsample(c, 1.1, 1), ContractViolation);
    }
}

TEST_CASE("training pairs split the mid-level cloud exactly") {
    Rng rng(88);
    const PointCloud c = random_cloud(1000, rng);

    SUBCASE("retentions 0.5/0.5 give the expected sizes") {
        const CloudPair pair = make_training_pair(c, 0.5, 0.5, 7);
        CHECK(pair.condition.size() == 250);
        CHECK(pair.target_extra.size() == 250);
        CHECK(pair.full_target.size() == 500);
    }
    SUBCASE("condition and extra are disjoint for many seeds and retentions") {
        Rng retr(6);
        for (int trial = 0; trial < 200; ++trial) {
            const double r1 = retr.uniform(0.2, 1.0);
            const double r2 = retr.uniform(0.2, 1.0);
            CloudPair pair;
            try {
                pair = make_training_pair(c, r1, r2, 1000 + trial);
            } catch (const DegeneratePairError&) {
                continue;
            }
            const auto cond = as_set(pair.condition);
            const auto extra = as_set(pair.target_extra);
            bool disjoint = true;
            for (const auto& t : extra) {
                disjoint = disjoint && cond.count(t) == 0;
            }
            CHECK(disjoint);
            CHECK(subset_of(pair.condition, pair.full_target));
            CHECK(pair.condition.size() + pair.target_extra.size() ==
                  pair.full_target.size());
            CHECK(pair.condition.size() < pair.full_target.size());
        }
    }
    SUBCASE("an almost-1 second retention on a tiny cloud is degenerate") {
        Rng small_rng(3);
        const PointCloud small = random_cloud(10, small_rng);
        // mid level keeps 2 points; a 0.99 retention keeps both, leaving no extras
        CHECK_THROWS_AS(make_training_pair(small, 0.2, 0.99, 5), DegeneratePairError);
    }
    SUBCASE("preconditions are enforced") {
        CHECK_THROWS_AS(make_training_pair(c, 0.1, 0.5, 1), ContractViolation);
        CHECK_THROWS_AS(make_training_pair(c, 0.5, 1.0, 1), ContractViolation);
        Rng tiny_rng(4);
        const PointCloud tiny = random_cloud(5, tiny_rng);
        CHECK_THROWS_AS(make_training_pair(tiny, 0.5, 0.5, 1), ContractViolation);
    }
}

TEST_CASE("pair serialization round-trips clouds and metadata") {
    Rng rng(91);
    const PointCloud c = random_cloud(400, rng);
    const CloudPair pair = make_training_pair(c, 0.6, 0.4, 11);
    const PairMeta meta{0.6, 0.4, 11};
    const std::string stem = (fs::temp_directory_path() / "pointfield_pair").string();
    save_pair(pair, meta, stem);

    PairMeta back_meta;
    const CloudPair back = load_pair(stem, &back_meta);
    CHECK(back_meta.r1 == doctest::Approx(0.6));
    CHECK(back_meta.r2 == doctest::Approx(0.4));
    CHECK(back_meta.seed == 11);
    REQUIRE(back.condition.size() == pair.condition.size());
    REQUIRE(back.target_extra.size() == pair.target_extra.size());
    for (std::size_t i = 0; i < pair.condition.size(); ++i) {
        CHECK(back.condition[i] == pair.condition[i]);
    }
    // full_target layout is condition rows first, then the extras
    CHECK(back.full_target[0] == back.condition[0]);
    CHECK(back.full_target[back.condition.size()] == back.target_extra[0]);
    for (const char* suffix : {".condition.ply", ".extra.ply", ".meta.txt"}) {
        fs::remove(stem + suffix);
    }
}

TEST_CASE("chamfer distance matches hand values and the brute-force oracle") {
    SUBCASE("identical clouds have distance zero") {
        Rng rng(21);
        const PointCloud c = random_cloud(64, rng);
        CHECK(chamfer(c, c) == 0.0);
    }
    SUBCASE("two unit-separated singletons score two") {
        PointCloud a, b;
        a.points.push_back({0, 0, 0});
        b.points.push_back({1, 0, 0});
        CHECK(chamfer(a, b) == doctest::Approx(2.0).epsilon(1e-12));
    }
    SUBCASE("empty inputs are rejected") {
        PointCloud a;
        PointCloud b;
        b.points.push_back({0, 0, 0});
        CHECK_THROWS_AS(chamfer(a, b), ContractViolation);
    }
    SUBCASE("random pair agrees with the exhaustive double loop") {
        Rng rng(33);
        const PointCloud a = random_cloud(50, rng);
        const PointCloud b = random_cloud(70, rng, 1.3);
        double expect = 0.0;
        for (const Vec3& p : a.points) {
            double best = 1e300;
            for (const Vec3& q : b.points) {
                best = std::min(best, norm2(p - q));
            }
            expect += best / static_cast<double>(a.size());
        }
        for (const Vec3& q : b.points) {
            double best = 1e300;
            for (const Vec3& p : a.points) {
                best = std::min(best, norm2(q - p));
            }
            expect += best / static_cast<double>(b.size());
        }
        CHECK(std::abs(chamfer(a, b) - expect) < 1e-9);
        CHECK(std::abs(chamfer(a, b) - chamfer(b, a)) < 1e-15);
    }
    SUBCASE("applying one rigid motion to both clouds changes nothing") {
        Rng rng(34);
        const PointCloud a = random_cloud(40, rng);
        const PointCloud b = random_cloud(40, rng);
        const double base = chamfer(a, b);
        // rotation about z by 0.7 rad plus a translation
        const double cs = std::cos(0.7), sn = std::sin(0.7);
        const Vec3 shift{2.0, -1.0, 0.5};
        auto moved = [&](const PointCloud& c) {
            PointCloud out;
            for (const Vec3& p : c.points) {
                out.points.push_back(
                    Vec3{cs * p.x - sn * p.y, sn * p.x + cs * p.y, p.z} + shift);
            }
            return out;
        };
        CHECK(std::abs(chamfer(moved(a), moved(b)) - base) < 1e-9);
    }
}
