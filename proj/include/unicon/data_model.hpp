#pragma once

#include <string>
#include <vector>

#include "unicon/tensor.hpp"

namespace unicon::data {

constexpr int kNumAges = 4;  // {0: E13.5, 1: E14.5, 2: E15.5, 3: E16.5}

struct Annotation {
    int z = 0;
    std::string mask_path;
};

struct VolumeRecord {
    std::string volume_id;
    int age_index = 0;
    int Z = 0, H = 0, W = 0;
    std::vector<std::string> slice_paths;   // length Z, absolute after load
    std::vector<Annotation> annotations;    // sorted by z
    std::string cohort_tag;
};

struct DatasetManifest {
    std::string name;
    std::string split;  // "train" | "test"
    std::vector<VolumeRecord> volumes;
};

/// Parses and validates a manifest JSON document. Paths in the file are
/// resolved relative to the manifest location. Every referenced slice and
/// mask is decoded once so downstream loads cannot fail.
DatasetManifest load_manifest(const std::string& path);

/// Writes a manifest; paths are stored relative to the output file.
void save_manifest(const DatasetManifest& manifest, const std::string& path);

/// Intensities rescaled to [0,1].
Tensor load_slice(const VolumeRecord& record, int z);

/// Mask for an annotated slice, values in {0,1}.
Tensor load_mask(const VolumeRecord& record, int z);

bool is_annotated(const VolumeRecord& record, int z);

/// Persists a binary prediction as <out_dir>/<volume_id>_z<z>.png and
/// returns the written path. Reload yields the identical mask.
std::string save_prediction(const std::string& volume_id, int z, const Tensor& mask,
                            const std::string& out_dir);

}  // namespace unicon::data
