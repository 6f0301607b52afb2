#include <doctest.h>

#include "unicon/rng.hpp"
#include "unicon/tensor.hpp"

using namespace unicon;

TEST_SUITE("tensor") {
    TEST_CASE("shape and indexing") {
        Tensor t({2, 3, 4});
        CHECK(t.numel() == 24);
        t.at(1, 2, 3) = 5.0;
        CHECK(t[23] == 5.0);
        CHECK(t.at(0, 0, 0) == 0.0);
    }

    TEST_CASE("reshape preserves data, rejects bad sizes") {
        Tensor t = Tensor::from({2, 2}, {1, 2, 3, 4});
        Tensor r = t.reshaped({4});
        CHECK(r[3] == 4.0);
        CHECK_THROWS_AS(t.reshaped({5}), Error);
    }

    TEST_CASE("add_ requires matching shapes") {
        Tensor a({2, 2}), b({4});
        CHECK_THROWS_AS(a.add_(b), Error);
    }
}

TEST_SUITE("rng") {
    TEST_CASE("deterministic streams") {
        Rng a(42), b(42);
        for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
    }

    TEST_CASE("spawned streams differ from parent and each other") {
        Rng root(7);
        Rng c1 = root.spawn(1), c2 = root.spawn(2);
        CHECK(c1.uniform() != c2.uniform());
    }

    TEST_CASE("uniform_int covers the range") {
        Rng rng(3);
        bool saw_lo = false, saw_hi = false;
        for (int i = 0; i < 1000; ++i) {
            const auto v = rng.uniform_int(0, 3);
            CHECK(v >= 0);
            CHECK(v <= 3);
            saw_lo |= v == 0;
            saw_hi |= v == 3;
        }
        CHECK(saw_lo);
        CHECK(saw_hi);
    }

    TEST_CASE("normal moments") {
        Rng rng(11);
        double sum = 0.0, sq = 0.0;
        const int n = 200000;
        for (int i = 0; i < n; ++i) {
            const double v = rng.normal();
            sum += v;
            sq += v * v;
        }
        CHECK(std::fabs(sum / n) < 0.01);
        CHECK(std::fabs(sq / n - 1.0) < 0.02);
    }
}
