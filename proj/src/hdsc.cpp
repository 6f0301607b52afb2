#include "unicon/hdsc.hpp"

#include <algorithm>

namespace unicon::hdsc {

namespace {

// Corner-aligned ramp: n samples from a to b inclusive; midpoint when n == 1.
std::vector<double> ramp(double a, double b, int n) {
    std::vector<double> out(static_cast<std::size_t>(n));
    if (n == 1) {
        out[0] = 0.5 * (a + b);
        return out;
    }
    const double step = (b - a) / (n - 1);
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = a + step * i;
    return out;
}

}  // namespace

CoordinateGrid dense_coords(const CropBox& box, int H, int W, int Z, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw Error(ErrorCode::ShapeError, "grid resolution must be positive");
    if (!(0 <= box.t && box.t < box.b && box.b <= H && 0 <= box.l && box.l < box.r &&
          box.r <= W && 0 <= box.z && box.z < Z))
        throw Error(ErrorCode::ShapeError, "invalid crop box for grid");

    CoordinateGrid g;
    g.source_box = box;
    g.h = out_h;
    g.w = out_w;
    g.i_plane = Tensor({out_h, out_w});
    g.j_plane = Tensor({out_h, out_w});
    g.k_plane = Tensor::full({out_h, out_w}, static_cast<double>(box.z) / Z);

    const auto cols = ramp(static_cast<double>(box.l) / W,
                           static_cast<double>(box.r - 1) / W, out_w);
    const auto rows = ramp(static_cast<double>(box.t) / H,
                           static_cast<double>(box.b - 1) / H, out_h);
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            g.i_plane.at(y, x) = cols[static_cast<std::size_t>(x)];
            g.j_plane.at(y, x) = rows[static_cast<std::size_t>(y)];
        }
    return g;
}

Tensor concat_coords(const Tensor& features, const CoordinateGrid& grid) {
    if (features.ndim() != 3 || features.dim(1) != grid.h || features.dim(2) != grid.w)
        throw Error(ErrorCode::ShapeError, "grid resolution does not match features");
    const int c = features.dim(0);
    const std::int64_t hw = static_cast<std::int64_t>(grid.h) * grid.w;
    Tensor out({c + 3, grid.h, grid.w});
    std::copy(features.data(), features.data() + c * hw, out.data());
    std::copy(grid.i_plane.data(), grid.i_plane.data() + hw, out.data() + c * hw);
    std::copy(grid.j_plane.data(), grid.j_plane.data() + hw, out.data() + (c + 1) * hw);
    std::copy(grid.k_plane.data(), grid.k_plane.data() + hw, out.data() + (c + 2) * hw);
    return out;
}

std::vector<CoordinateGrid> hdsc_plan(const std::vector<std::pair<int, int>>& resolutions,
                                      const CropBox& box, int H, int W, int Z) {
    std::vector<CoordinateGrid> plan;
    plan.reserve(resolutions.size());
    for (const auto& [h, w] : resolutions) plan.push_back(dense_coords(box, H, W, Z, h, w));
    return plan;
}

}  // namespace unicon::hdsc
