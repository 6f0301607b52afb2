#pragma once

#include <string>

#include "unicon/tensor.hpp"

namespace unicon::io {

/// Reads a single-channel 16-bit PNG/TIFF slice and rescales to [0,1]
/// (division by 65535; 8-bit inputs divide by 255).
Tensor read_slice(const std::string& path);

/// Writes intensities in [0,1] as a 16-bit grayscale PNG.
void write_slice16(const std::string& path, const Tensor& image);

/// Reads an 8-bit mask PNG; pixels must be exactly {0,255} and map to {0,1}.
Tensor read_mask(const std::string& path);

/// Writes a {0,1} mask as an 8-bit PNG with values {0,255}.
void write_mask(const std::string& path, const Tensor& mask);

}  // namespace unicon::io
