#include "unicon/sampling.hpp"

#include <algorithm>
#include <cmath>

namespace unicon::sampling {

namespace {

void check_box(const CropBox& box, int H, int W) {
    if (!(0 <= box.t && box.t < box.b && box.b <= H && 0 <= box.l && box.l < box.r &&
          box.r <= W))
        throw Error(ErrorCode::ShapeError, "invalid crop box");
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

std::array<double, 3> relative_center(const CropBox& box, int H, int W, int Z) {
    check_box(box, H, W);
    if (Z < 1 || box.z < 0 || box.z >= Z)
        throw Error(ErrorCode::IndexOutOfRange, "slice index outside volume");
    return {static_cast<double>(box.l + box.r) / (2.0 * W),
            static_cast<double>(box.t + box.b) / (2.0 * H),
            static_cast<double>(box.z) / Z};
}

std::array<double, 3> jitter_center(const std::array<double, 3>& center, double jitter_max,
                                    Rng& rng, bool symmetric) {
    std::array<double, 3> out{};
    for (int i = 0; i < 3; ++i) {
        const double lo = symmetric ? -jitter_max : 0.0;
        out[static_cast<std::size_t>(i)] =
            clamp01(center[static_cast<std::size_t>(i)] + rng.uniform(lo, jitter_max));
    }
    return out;
}

CropSample extract_crop(const Tensor& slice, const std::optional<Tensor>& mask,
                        const VolumeRecord& record, const CropBox& box) {
    check_box(box, record.H, record.W);
    CropSample s;
    s.box = box;
    s.age_index = record.age_index;
    s.vol_h = record.H;
    s.vol_w = record.W;
    s.vol_z = record.Z;
    s.rel_center = relative_center(box, record.H, record.W, record.Z);
    const int h = box.height(), w = box.width();
    s.image = Tensor({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) s.image.at(y, x) = slice.at(box.t + y, box.l + x);
    if (mask) {
        Tensor m({h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) m.at(y, x) = mask->at(box.t + y, box.l + x);
        s.mask = std::move(m);
    }
    return s;
}

CropSample extract_crop(const VolumeRecord& record, const CropBox& box) {
    const Tensor slice = data::load_slice(record, box.z);
    std::optional<Tensor> mask;
    if (data::is_annotated(record, box.z)) mask = data::load_mask(record, box.z);
    return extract_crop(slice, mask, record, box);
}

CropSample sample_crop(const VolumeRecord& record, const SampleOptions& opts, Rng& rng) {
    if (record.annotations.empty())
        throw Error(ErrorCode::NoAnnotatedSlices, record.volume_id);
    if (opts.crop_h > record.H || opts.crop_w > record.W)
        throw Error(ErrorCode::CropTooLarge,
                    "crop " + std::to_string(opts.crop_h) + "x" + std::to_string(opts.crop_w) +
                        " exceeds slice " + std::to_string(record.H) + "x" +
                        std::to_string(record.W));

    const auto& ann = record.annotations[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(record.annotations.size()) - 1))];
    CropBox box;
    box.z = ann.z;
    box.t = static_cast<int>(rng.uniform_int(0, record.H - opts.crop_h));
    box.l = static_cast<int>(rng.uniform_int(0, record.W - opts.crop_w));
    box.b = box.t + opts.crop_h;
    box.r = box.l + opts.crop_w;

    CropSample s = extract_crop(record, box);
    if (opts.training)
        s.rel_center = jitter_center(s.rel_center, opts.jitter_max, rng, opts.jitter_symmetric);
    if (opts.augment) {
        s.image = bezier_intensity(s.image, rng);
        spatial_augment(s, rng);
    }
    return s;
}

namespace {

// Cubic Bezier with endpoints (0,0),(1,1).
inline double bez(double u, double p1, double p2) {
    const double v = 1.0 - u;
    return 3.0 * v * v * u * p1 + 3.0 * v * u * u * p2 + u * u * u;
}

bool monotone_curve(double x1, double y1, double x2, double y2) {
    double px = 0.0, py = 0.0;
    for (int i = 1; i <= 64; ++i) {
        const double u = i / 64.0;
        const double cx = bez(u, x1, x2), cy = bez(u, y1, y2);
        if (cx < px || cy < py) return false;
        px = cx;
        py = cy;
    }
    return true;
}

}  // namespace

Tensor bezier_intensity_with(const Tensor& image, double x1, double y1, double x2, double y2) {
    // Piecewise-linear inverse of x(u) sampled densely; endpoints stay exact.
    constexpr int kLut = 1024;
    std::array<double, kLut + 1> xs{}, ys{};
    for (int i = 0; i <= kLut; ++i) {
        const double u = static_cast<double>(i) / kLut;
        xs[static_cast<std::size_t>(i)] = bez(u, x1, x2);
        ys[static_cast<std::size_t>(i)] = bez(u, y1, y2);
    }
    Tensor out(image.shape());
    for (std::int64_t i = 0; i < image.numel(); ++i) {
        const double v = image[i];
        if (v <= 0.0) {
            out[i] = 0.0;
            continue;
        }
        if (v >= 1.0) {
            out[i] = 1.0;
            continue;
        }
        const auto it = std::upper_bound(xs.begin(), xs.end(), v);
        const std::size_t hi = std::min<std::size_t>(
            static_cast<std::size_t>(it - xs.begin()), kLut);
        const std::size_t lo = hi - 1;
        const double dx = xs[hi] - xs[lo];
        const double t = dx > 0.0 ? (v - xs[lo]) / dx : 0.0;
        out[i] = ys[lo] + t * (ys[hi] - ys[lo]);
    }
    return out;
}

Tensor bezier_intensity(const Tensor& image, Rng& rng) {
    double x1, y1, x2, y2;
    do {
        x1 = rng.uniform();
        y1 = rng.uniform();
        x2 = rng.uniform();
        y2 = rng.uniform();
    } while (!monotone_curve(x1, y1, x2, y2));
    return bezier_intensity_with(image, x1, y1, x2, y2);
}

namespace {

Tensor rot90(const Tensor& in, int quarter_turns) {
    Tensor cur = in;
    for (int q = 0; q < (quarter_turns & 3); ++q) {
        const int h = cur.dim(0), w = cur.dim(1);
        Tensor next({w, h});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) next.at(w - 1 - x, y) = cur.at(y, x);
        cur = std::move(next);
    }
    return cur;
}

Tensor flip(const Tensor& in, bool horizontal, bool vertical) {
    const int h = in.dim(0), w = in.dim(1);
    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.at(vertical ? h - 1 - y : y, horizontal ? w - 1 - x : x) = in.at(y, x);
    return out;
}

}  // namespace

void spatial_transform(CropSample& sample, int quarter_turns, bool hflip, bool vflip) {
    const int applied =
        (sample.image.dim(0) == sample.image.dim(1)) ? quarter_turns : (quarter_turns & 2);
    sample.image = flip(rot90(sample.image, applied), hflip, vflip);
    if (sample.mask) sample.mask = flip(rot90(*sample.mask, applied), hflip, vflip);
}

void spatial_augment(CropSample& sample, Rng& rng) {
    const int turns = static_cast<int>(rng.uniform_int(0, 3));
    const bool hflip = rng.bernoulli(0.5);
    const bool vflip = rng.bernoulli(0.5);
    spatial_transform(sample, turns, hflip, vflip);
}

std::vector<CropBox> tile_plan(const VolumeRecord& record, int z, int crop_h, int crop_w,
                               double overlap) {
    if (overlap < 0.0 || overlap >= 1.0)
        throw Error(ErrorCode::ShapeError, "overlap must be in [0,1)");
    if (crop_h > record.H || crop_w > record.W)
        throw Error(ErrorCode::CropTooLarge, "tile exceeds slice");
    if (z < 0 || z >= record.Z)
        throw Error(ErrorCode::IndexOutOfRange, "slice index outside volume");

    auto starts = [&](int extent, int crop) {
        const int stride = std::max(1, static_cast<int>(std::floor(crop * (1.0 - overlap))));
        std::vector<int> out;
        for (int p = 0;; p += stride) {
            if (p + crop >= extent) {
                out.push_back(extent - crop);
                break;
            }
            out.push_back(p);
        }
        return out;
    };

    std::vector<CropBox> plan;
    for (int t : starts(record.H, crop_h))
        for (int l : starts(record.W, crop_w))
            plan.push_back({t, t + crop_h, l, l + crop_w, z});
    return plan;
}

}  // namespace unicon::sampling
