#include <doctest.h>

#include "unicon/hdsc.hpp"
#include "unicon/rng.hpp"

using namespace unicon;
using namespace unicon::hdsc;

TEST_SUITE("dense_coords") {
    TEST_CASE("native resolution reproduces the coordinate matrices") {
        // W=8, l=2, r=6: columns (2+j)/8
        CropBox box{1, 4, 2, 6, 5};
        const auto g = dense_coords(box, 8, 8, 10, 3, 4);
        for (int y = 0; y < 3; ++y) {
            CHECK(g.i_plane.at(y, 0) == doctest::Approx(0.25).epsilon(1e-12));
            CHECK(g.i_plane.at(y, 1) == doctest::Approx(0.375).epsilon(1e-12));
            CHECK(g.i_plane.at(y, 2) == doctest::Approx(0.5).epsilon(1e-12));
            CHECK(g.i_plane.at(y, 3) == doctest::Approx(0.625).epsilon(1e-12));
        }
        for (int x = 0; x < 4; ++x) {
            CHECK(g.j_plane.at(0, x) == doctest::Approx(1.0 / 8).epsilon(1e-12));
            CHECK(g.j_plane.at(1, x) == doctest::Approx(2.0 / 8).epsilon(1e-12));
            CHECK(g.j_plane.at(2, x) == doctest::Approx(3.0 / 8).epsilon(1e-12));
        }
        for (std::int64_t i = 0; i < g.k_plane.numel(); ++i)
            CHECK(g.k_plane[i] == doctest::Approx(0.5).epsilon(1e-12));
    }

    TEST_CASE("constant k plane") {
        CropBox box{0, 2, 0, 2, 5};
        const auto g = dense_coords(box, 4, 4, 10, 2, 2);
        for (std::int64_t i = 0; i < 4; ++i) CHECK(g.k_plane[i] == 0.5);
    }

    TEST_CASE("downsampling preserves corners") {
        CropBox box{1, 4, 2, 6, 0};
        const auto g = dense_coords(box, 8, 8, 4, 3, 2);
        CHECK(g.i_plane.at(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(g.i_plane.at(0, 1) == doctest::Approx(0.625).epsilon(1e-12));
    }

    TEST_CASE("values in [0,1] and strictly increasing ramps") {
        Rng rng(41);
        for (int trial = 0; trial < 500; ++trial) {
            const int H = 4 + static_cast<int>(rng.uniform_int(0, 40));
            const int W = 4 + static_cast<int>(rng.uniform_int(0, 40));
            const int Z = 1 + static_cast<int>(rng.uniform_int(0, 12));
            CropBox box;
            box.t = static_cast<int>(rng.uniform_int(0, H - 2));
            box.b = box.t + 2 + static_cast<int>(rng.uniform_int(0, H - box.t - 2));
            box.l = static_cast<int>(rng.uniform_int(0, W - 2));
            box.r = box.l + 2 + static_cast<int>(rng.uniform_int(0, W - box.l - 2));
            box.z = static_cast<int>(rng.uniform_int(0, Z - 1));
            const int oh = 2 + static_cast<int>(rng.uniform_int(0, 12));
            const int ow = 2 + static_cast<int>(rng.uniform_int(0, 12));
            const auto g = dense_coords(box, H, W, Z, oh, ow);
            for (std::int64_t i = 0; i < g.i_plane.numel(); ++i) {
                CHECK(g.i_plane[i] >= 0.0);
                CHECK(g.i_plane[i] <= 1.0);
                CHECK(g.j_plane[i] >= 0.0);
                CHECK(g.j_plane[i] <= 1.0);
                CHECK(g.k_plane[i] >= 0.0);
                CHECK(g.k_plane[i] <= 1.0);
            }
            for (int x = 1; x < ow; ++x) CHECK(g.i_plane.at(0, x) > g.i_plane.at(0, x - 1));
            for (int y = 1; y < oh; ++y) CHECK(g.j_plane.at(y, 0) > g.j_plane.at(y - 1, 0));
            // rows of i identical, columns of j identical
            for (int y = 1; y < oh; ++y)
                for (int x = 0; x < ow; ++x) CHECK(g.i_plane.at(y, x) == g.i_plane.at(0, x));
        }
    }

    TEST_CASE("identical content at different positions yields different grids") {
        CropBox a{0, 4, 0, 4, 0};
        CropBox b{4, 8, 4, 8, 0};
        const auto ga = dense_coords(a, 16, 16, 4, 4, 4);
        const auto gb = dense_coords(b, 16, 16, 4, 4, 4);
        CHECK(ga.i_plane.at(0, 0) != gb.i_plane.at(0, 0));
        CHECK(ga.j_plane.at(0, 0) != gb.j_plane.at(0, 0));
    }
}

TEST_SUITE("concat_coords") {
    TEST_CASE("channel count and pass-through") {
        CropBox box{0, 4, 0, 4, 1};
        const auto g = dense_coords(box, 8, 8, 4, 4, 4);
        Tensor feat({8, 4, 4});
        Rng rng(42);
        for (std::int64_t i = 0; i < feat.numel(); ++i) feat[i] = rng.normal();
        const Tensor out = concat_coords(feat, g);
        REQUIRE(out.dim(0) == 11);
        for (std::int64_t i = 0; i < feat.numel(); ++i) CHECK(out[i] == feat[i]);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                CHECK(out.at(8, y, x) == g.i_plane.at(y, x));
                CHECK(out.at(9, y, x) == g.j_plane.at(y, x));
                CHECK(out.at(10, y, x) == g.k_plane.at(y, x));
            }
    }

    TEST_CASE("resolution mismatch rejected") {
        CropBox box{0, 4, 0, 4, 0};
        const auto g = dense_coords(box, 8, 8, 4, 4, 4);
        Tensor feat({8, 5, 4});
        CHECK_THROWS_AS(concat_coords(feat, g), Error);
    }
}

TEST_SUITE("hdsc_plan") {
    TEST_CASE("three stages share their corner values") {
        CropBox box{10, 74, 20, 84, 2};
        const auto plan = hdsc_plan({{32, 32}, {64, 64}, {128, 128}}, box, 96, 96, 8);
        REQUIRE(plan.size() == 3);
        const double i0 = plan[0].i_plane.at(0, 0);
        const double i1 = plan[0].i_plane.at(0, 31);
        const double j0 = plan[0].j_plane.at(0, 0);
        const double j1 = plan[0].j_plane.at(31, 0);
        for (const auto& g : plan) {
            CHECK(g.i_plane.at(0, 0) == doctest::Approx(i0).epsilon(1e-12));
            CHECK(g.i_plane.at(0, g.w - 1) == doctest::Approx(i1).epsilon(1e-12));
            CHECK(g.j_plane.at(0, 0) == doctest::Approx(j0).epsilon(1e-12));
            CHECK(g.j_plane.at(g.h - 1, 0) == doctest::Approx(j1).epsilon(1e-12));
        }
    }

    TEST_CASE("single native-resolution stage is the base case") {
        CropBox box{2, 6, 1, 7, 0};
        const auto plan = hdsc_plan({{4, 6}}, box, 8, 8, 2);
        REQUIRE(plan.size() == 1);
        for (int x = 0; x < 6; ++x)
            CHECK(plan[0].i_plane.at(0, x) == doctest::Approx((1.0 + x) / 8).epsilon(1e-12));
        for (int y = 0; y < 4; ++y)
            CHECK(plan[0].j_plane.at(y, 0) == doctest::Approx((2.0 + y) / 8).epsilon(1e-12));
    }

    TEST_CASE("empty plan for empty stage list") {
        CropBox box{0, 2, 0, 2, 0};
        CHECK(hdsc_plan({}, box, 4, 4, 2).empty());
    }
}
