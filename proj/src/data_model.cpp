#include "unicon/data_model.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "unicon/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace unicon::data {

namespace {

std::string resolve(const fs::path& base, const std::string& rel) {
    fs::path p(rel);
    if (p.is_absolute()) return p.string();
    return (base / p).lexically_normal().string();
}

void check_image(const std::string& path, int h, int w, bool is_mask) {
    Tensor img = is_mask ? io::read_mask(path) : io::read_slice(path);
    if (img.dim(0) != h || img.dim(1) != w)
        throw Error(ErrorCode::ShapeMismatch,
                    path + " decodes to " + std::to_string(img.dim(0)) + "x" +
                        std::to_string(img.dim(1)) + ", expected " + std::to_string(h) +
                        "x" + std::to_string(w));
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
    if (!fs::exists(path)) throw Error(ErrorCode::MissingFile, path);
    std::ifstream in(path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::DecodeError, std::string("bad manifest JSON: ") + e.what());
    }

    const fs::path base = fs::path(path).parent_path();
    DatasetManifest m;
    m.name = doc.value("name", "");
    m.split = doc.value("split", "train");
    if (m.split != "train" && m.split != "test")
        throw Error(ErrorCode::DecodeError, "split must be train or test");

    std::set<std::string> ids;
    for (const auto& jv : doc.at("volumes")) {
        VolumeRecord v;
        v.volume_id = jv.at("volume_id").get<std::string>();
        v.age_index = jv.at("age_index").get<int>();
        v.cohort_tag = jv.value("cohort_tag", "");
        v.Z = jv.at("size").at("z").get<int>();
        v.H = jv.at("size").at("h").get<int>();
        v.W = jv.at("size").at("w").get<int>();

        if (!ids.insert(v.volume_id).second)
            throw Error(ErrorCode::DecodeError, "duplicate volume_id " + v.volume_id);
        if (v.age_index < 0 || v.age_index >= kNumAges)
            throw Error(ErrorCode::BadAgeIndex,
                        v.volume_id + " has age_index " + std::to_string(v.age_index));
        if (v.Z <= 0 || v.H <= 0 || v.W <= 0)
            throw Error(ErrorCode::DecodeError, v.volume_id + " has non-positive dims");

        for (const auto& sp : jv.at("slices"))
            v.slice_paths.push_back(resolve(base, sp.get<std::string>()));
        if (static_cast<int>(v.slice_paths.size()) != v.Z)
            throw Error(ErrorCode::DecodeError,
                        v.volume_id + ": slice list length != Z");

        for (const auto& ja : jv.at("annotations")) {
            Annotation a;
            a.z = ja.at("z").get<int>();
            a.mask_path = resolve(base, ja.at("mask").get<std::string>());
            if (a.z < 0 || a.z >= v.Z)
                throw Error(ErrorCode::IndexOutOfRange,
                            v.volume_id + ": annotated slice z=" + std::to_string(a.z));
            v.annotations.push_back(a);
        }
        std::sort(v.annotations.begin(), v.annotations.end(),
                  [](const Annotation& a, const Annotation& b) { return a.z < b.z; });

        for (const auto& sp : v.slice_paths) check_image(sp, v.H, v.W, false);
        for (const auto& a : v.annotations) check_image(a.mask_path, v.H, v.W, true);

        if (m.split == "train" && v.annotations.empty())
            throw Error(ErrorCode::NoAnnotatedSlices,
                        v.volume_id + " has no annotated slices in a train split");
        m.volumes.push_back(std::move(v));
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    const fs::path base = fs::path(path).parent_path();
    json doc;
    doc["name"] = manifest.name;
    doc["split"] = manifest.split;
    doc["volumes"] = json::array();
    for (const auto& v : manifest.volumes) {
        json jv;
        jv["volume_id"] = v.volume_id;
        jv["age_index"] = v.age_index;
        jv["cohort_tag"] = v.cohort_tag;
        jv["size"] = {{"z", v.Z}, {"h", v.H}, {"w", v.W}};
        jv["slices"] = json::array();
        for (const auto& sp : v.slice_paths)
            jv["slices"].push_back(fs::relative(sp, base).generic_string());
        jv["annotations"] = json::array();
        for (const auto& a : v.annotations)
            jv["annotations"].push_back(
                {{"z", a.z}, {"mask", fs::relative(a.mask_path, base).generic_string()}});
        doc["volumes"].push_back(std::move(jv));
    }
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path);
    out << doc.dump(2) << "\n";
}

Tensor load_slice(const VolumeRecord& record, int z) {
    if (z < 0 || z >= record.Z)
        throw Error(ErrorCode::IndexOutOfRange,
                    "z=" + std::to_string(z) + " outside [0," + std::to_string(record.Z) + ")");
    Tensor img = io::read_slice(record.slice_paths[static_cast<std::size_t>(z)]);
    if (img.dim(0) != record.H || img.dim(1) != record.W)
        throw Error(ErrorCode::ShapeMismatch, record.slice_paths[static_cast<std::size_t>(z)]);
    return img;
}

Tensor load_mask(const VolumeRecord& record, int z) {
    for (const auto& a : record.annotations)
        if (a.z == z) {
            Tensor m = io::read_mask(a.mask_path);
            if (m.dim(0) != record.H || m.dim(1) != record.W)
                throw Error(ErrorCode::ShapeMismatch, a.mask_path);
            return m;
        }
    throw Error(ErrorCode::IndexOutOfRange,
                record.volume_id + " has no annotation at z=" + std::to_string(z));
}

bool is_annotated(const VolumeRecord& record, int z) {
    for (const auto& a : record.annotations)
        if (a.z == z) return true;
    return false;
}

std::string save_prediction(const std::string& volume_id, int z, const Tensor& mask,
                            const std::string& out_dir) {
    fs::create_directories(out_dir);
    char zbuf[16];
    std::snprintf(zbuf, sizeof(zbuf), "%04d", z);
    const std::string path =
        (fs::path(out_dir) / (volume_id + "_z" + zbuf + ".png")).string();
    io::write_mask(path, mask);
    return path;
}

}  // namespace unicon::data
