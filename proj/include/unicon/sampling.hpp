#pragma once

#include <array>
#include <optional>
#include <vector>

#include "unicon/data_model.hpp"
#include "unicon/rng.hpp"
#include "unicon/tensor.hpp"

namespace unicon::sampling {

using data::VolumeRecord;

/// Half-open crop window [t,b) x [l,r) on slice z.
struct CropBox {
    int t = 0, b = 0, l = 0, r = 0;
    int z = 0;
    int height() const { return b - t; }
    int width() const { return r - l; }
};

struct CropSample {
    Tensor image;                       // [h,w], intensities in [0,1]
    std::optional<Tensor> mask;         // [h,w], {0,1}; present iff annotated slice
    CropBox box;
    std::array<double, 3> rel_center{}; // (x*, y*, z*)
    int age_index = 0;
    int vol_h = 0, vol_w = 0, vol_z = 0;  // source volume dims (H, W, Z)
};

/// x* = (l+r)/(2W), y* = (t+b)/(2H), z* = z/Z.
std::array<double, 3> relative_center(const CropBox& box, int H, int W, int Z);

/// Adds an independent uniform draw from [0, jitter_max] to each coordinate
/// (or [-jitter_max, jitter_max] in symmetric mode) and clamps to [0,1].
/// Training-time only; inference uses the exact center.
std::array<double, 3> jitter_center(const std::array<double, 3>& center, double jitter_max,
                                    Rng& rng, bool symmetric = false);

struct SampleOptions {
    int crop_h = 256, crop_w = 256;
    double jitter_max = 0.2;
    bool jitter_symmetric = false;
    bool augment = true;     // Bezier intensity + rotation/mirror
    bool training = true;    // jitter only when training
};

/// Draws one training sample: uniform annotated slice, uniform valid crop
/// position, jittered relative center, optional augmentation.
CropSample sample_crop(const VolumeRecord& record, const SampleOptions& opts, Rng& rng);

/// Monotone cubic Bezier intensity remap of [0,1] with endpoints (0,0),(1,1)
/// and two control points drawn uniformly from [0,1]^2 (resampled until the
/// curve is monotone in both coordinates).
Tensor bezier_intensity(const Tensor& image, Rng& rng);

/// Bezier remap with explicit control points; used by tests and by
/// bezier_intensity once points are drawn.
Tensor bezier_intensity_with(const Tensor& image, double x1, double y1, double x2, double y2);

/// Same 90-degree rotation and axis flips applied to image and mask.
/// The crop box and relative center are deliberately left untouched.
void spatial_augment(CropSample& sample, Rng& rng);

/// The deterministic transform behind spatial_augment. Non-square crops only
/// admit half turns; other turn counts degrade to 180-degree steps.
void spatial_transform(CropSample& sample, int quarter_turns, bool hflip, bool vflip);

/// Deterministic tiling of a full slice. Stride = floor(crop*(1-overlap));
/// the last row/column clamps flush to the border so coverage is complete.
std::vector<CropBox> tile_plan(const VolumeRecord& record, int z, int crop_h, int crop_w,
                               double overlap);

/// Extracts the image (and mask if annotated) for a given box.
CropSample extract_crop(const VolumeRecord& record, const CropBox& box);
CropSample extract_crop(const Tensor& slice, const std::optional<Tensor>& mask,
                        const VolumeRecord& record, const CropBox& box);

}  // namespace unicon::sampling
