#include <doctest.h>

#include <json.hpp>

#include <fstream>

#include "support/tmpdir.hpp"
#include "unicon/data_model.hpp"
#include "unicon/image_io.hpp"
#include "unicon/rng.hpp"

using namespace unicon;
using testing::TmpDir;
using nlohmann::json;

namespace {

// Writes a little two-volume dataset and returns the manifest path.
std::string write_dataset(const TmpDir& dir, int age0 = 0, int age1 = 2,
                          bool break_mask_shape = false) {
    Rng rng(99);
    json doc;
    doc["name"] = "tiny";
    doc["split"] = "train";
    doc["volumes"] = json::array();
    for (int v = 0; v < 2; ++v) {
        const std::string vid = "vol" + std::to_string(v);
        std::filesystem::create_directories(dir.path() / vid);
        json jv;
        jv["volume_id"] = vid;
        jv["age_index"] = v == 0 ? age0 : age1;
        jv["cohort_tag"] = "C57";
        jv["size"] = {{"z", 3}, {"h", 10}, {"w", 12}};
        jv["slices"] = json::array();
        for (int z = 0; z < 3; ++z) {
            Tensor img({10, 12});
            for (std::int64_t i = 0; i < img.numel(); ++i) img[i] = rng.uniform();
            const std::string rel = vid + "/s" + std::to_string(z) + ".png";
            io::write_slice16(dir / rel, img);
            jv["slices"].push_back(rel);
        }
        Tensor mask(break_mask_shape && v == 1 ? std::vector<int>{6, 6}
                                               : std::vector<int>{10, 12});
        mask.at(2, 3) = 1.0;
        const std::string mrel = vid + "/m1.png";
        io::write_mask(dir / mrel, mask);
        jv["annotations"] = json::array({{{"z", 1}, {"mask", mrel}}});
        doc["volumes"].push_back(jv);
    }
    const std::string path = dir / "manifest.json";
    std::ofstream(path) << doc.dump(2);
    return path;
}

}  // namespace

TEST_SUITE("data_model") {
    TEST_CASE("manifest round trip") {
        TmpDir dir("manifest");
        const auto m = data::load_manifest(write_dataset(dir));
        CHECK(m.volumes.size() == 2);
        CHECK(m.volumes[0].age_index == 0);
        CHECK(m.volumes[1].age_index == 2);
        CHECK(m.volumes[0].Z == 3);
        CHECK(m.volumes[0].annotations.size() == 1);
    }

    TEST_CASE("bad age index rejected") {
        TmpDir dir("badage");
        const auto path = write_dataset(dir, 0, 4);
        CHECK_THROWS_WITH_AS(data::load_manifest(path), doctest::Contains("BadAgeIndex"),
                             Error);
    }

    TEST_CASE("missing slice file rejected") {
        TmpDir dir("missing");
        const auto path = write_dataset(dir);
        std::filesystem::remove(dir / "vol0/s2.png");
        try {
            data::load_manifest(path);
            FAIL("expected MissingFile");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::MissingFile);
        }
    }

    TEST_CASE("mask with wrong shape rejected") {
        TmpDir dir("shape");
        const auto path = write_dataset(dir, 0, 2, true);
        try {
            data::load_manifest(path);
            FAIL("expected ShapeMismatch");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ShapeMismatch);
        }
    }

    TEST_CASE("load_slice intensity scaling") {
        TmpDir dir("scale");
        Tensor img({4, 4});
        img.fill(1.0);
        io::write_slice16(dir / "ones.png", img);
        Tensor back = io::read_slice(dir / "ones.png");
        for (std::int64_t i = 0; i < back.numel(); ++i) CHECK(back[i] == 1.0);

        img.fill(0.0);
        io::write_slice16(dir / "zeros.png", img);
        back = io::read_slice(dir / "zeros.png");
        for (std::int64_t i = 0; i < back.numel(); ++i) CHECK(back[i] == 0.0);

        // 32768/65535 survives the round trip exactly
        img.fill(32768.0 / 65535.0);
        io::write_slice16(dir / "half.png", img);
        back = io::read_slice(dir / "half.png");
        CHECK(back[0] == doctest::Approx(32768.0 / 65535.0).epsilon(1e-12));
        CHECK(back[0] == doctest::Approx(0.50001).epsilon(1e-4));
    }

    TEST_CASE("load_slice bounds") {
        TmpDir dir("bounds");
        const auto m = data::load_manifest(write_dataset(dir));
        CHECK_THROWS_AS(data::load_slice(m.volumes[0], 3), Error);
        CHECK_THROWS_AS(data::load_slice(m.volumes[0], -1), Error);
        for (int z = 0; z < m.volumes[0].Z; ++z) CHECK_NOTHROW(data::load_slice(m.volumes[0], z));
    }

    TEST_CASE("save_prediction round trip is the identity") {
        TmpDir dir("pred");
        Rng rng(5);
        Tensor mask({9, 7});
        for (std::int64_t i = 0; i < mask.numel(); ++i) mask[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
        const auto path = data::save_prediction("volX", 12, mask, dir.str());
        const Tensor back = io::read_mask(path);
        REQUIRE(back.same_shape(mask));
        for (std::int64_t i = 0; i < mask.numel(); ++i) CHECK(back[i] == mask[i]);
    }

    TEST_CASE("save_prediction: all-zero mask reloads all-zero") {
        TmpDir dir("pred0");
        Tensor mask({5, 5});
        const auto path = data::save_prediction("volY", 0, mask, dir.str());
        const Tensor back = io::read_mask(path);
        CHECK(back.sum() == 0.0);
    }

    TEST_CASE("save_prediction rejects non-binary input") {
        TmpDir dir("predbad");
        Tensor mask({3, 3});
        mask.at(1, 1) = 0.5;
        CHECK_THROWS_AS(data::save_prediction("volZ", 0, mask, dir.str()), Error);
    }
}
