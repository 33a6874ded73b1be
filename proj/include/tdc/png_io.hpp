#pragma once

#include <string>

#include "tdc/tensor.hpp"

namespace tdc {

// Depth as 16-bit grayscale PNG in millimeters; 0 stays 0 (invalid).
// Values outside [0, 65.535] m are an error.
void write_depth_png(const std::string& path, const Tensor& depth_m);
Tensor read_depth_png(const std::string& path);

// [3,H,W] in [0,1] <-> 8-bit RGB PNG
void write_rgb_png(const std::string& path, const Tensor& rgb);
Tensor read_rgb_png(const std::string& path);

// {0,1} mask <-> 8-bit grayscale PNG (>127 -> 1 on read)
void write_mask_png(const std::string& path, const Tensor& mask);
Tensor read_mask_png(const std::string& path);

// [0,1] map scaled to 0..255, e.g. confidence visualizations
void write_gray8_png(const std::string& path, const Tensor& values);

}  // namespace tdc
