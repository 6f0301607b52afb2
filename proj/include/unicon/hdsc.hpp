#pragma once

#include <utility>
#include <vector>

#include "unicon/sampling.hpp"
#include "unicon/tensor.hpp"

namespace unicon::hdsc {

using sampling::CropBox;

/// Relative i/j/k coordinate planes of a crop at some spatial resolution.
/// i varies along the width, j along the height, k is constant z/Z.
struct CoordinateGrid {
    Tensor i_plane;  // [h', w']
    Tensor j_plane;  // [h', w']
    Tensor k_plane;  // [h', w']
    CropBox source_box;
    int h = 0, w = 0;
};

/// Analytic grid generation at an arbitrary resolution. Columns of i are
/// linearly spaced from l/W to (r-1)/W (corner-aligned), rows of j from t/H
/// to (b-1)/H, and k is z/Z everywhere. At the crop's native resolution this
/// reproduces the dense coordinate matrices exactly; at other resolutions
/// the corner values are preserved, matching corner-aligned interpolation of
/// the native grid.
CoordinateGrid dense_coords(const CropBox& box, int H, int W, int Z, int out_h, int out_w);

/// Channel-wise concatenation: [C,h,w] -> [C+3,h,w] with the i, j, k planes
/// appended in that order. Feature channels are copied bit-identically.
Tensor concat_coords(const Tensor& features, const CoordinateGrid& grid);

/// One grid per decoder stage, resolutions ordered coarse to fine.
std::vector<CoordinateGrid> hdsc_plan(const std::vector<std::pair<int, int>>& resolutions,
                                      const CropBox& box, int H, int W, int Z);

}  // namespace unicon::hdsc
