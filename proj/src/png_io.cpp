#include "tdc/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace tdc {

namespace {

constexpr double kMaxDepthMeters = 65.535;  // uint16 millimeters

cv::Mat imread_checked(const std::string& path, int flags) {
  cv::Mat img = cv::imread(path, flags);
  if (img.empty()) throw std::runtime_error("cannot read image: " + path);
  return img;
}

void imwrite_checked(const std::string& path, const cv::Mat& img) {
  if (!cv::imwrite(path, img)) throw std::runtime_error("cannot write image: " + path);
}

}  // namespace

void write_depth_png(const std::string& path, const Tensor& depth_m) {
  if (depth_m.rank() != 2) throw std::invalid_argument("depth must be [H,W]");
  const int H = depth_m.dim(0), W = depth_m.dim(1);
  cv::Mat img(H, W, CV_16UC1);
  for (int y = 0; y < H; ++y) {
    auto* row = img.ptr<std::uint16_t>(y);
    for (int x = 0; x < W; ++x) {
      double d = depth_m.at(y, x);
      if (d < -1e-9 || d > kMaxDepthMeters + 1e-9) {
        throw std::invalid_argument("depth value " + std::to_string(d) +
                                    " m outside the representable range [0, 65.535]");
      }
      d = std::clamp(d, 0.0, kMaxDepthMeters);
      row[x] = static_cast<std::uint16_t>(std::lround(d * 1000.0));
    }
  }
  imwrite_checked(path, img);
}

Tensor read_depth_png(const std::string& path) {
  cv::Mat img = imread_checked(path, cv::IMREAD_UNCHANGED);
  if (img.type() != CV_16UC1) {
    throw std::runtime_error("depth PNG must be 16-bit grayscale: " + path);
  }
  Tensor out({img.rows, img.cols});
  for (int y = 0; y < img.rows; ++y) {
    const auto* row = img.ptr<std::uint16_t>(y);
    for (int x = 0; x < img.cols; ++x) out.at(y, x) = row[x] / 1000.0;
  }
  return out;
}

void write_rgb_png(const std::string& path, const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw std::invalid_argument("rgb must be [3,H,W]");
  const int H = rgb.dim(1), W = rgb.dim(2);
  cv::Mat img(H, W, CV_8UC3);
  for (int y = 0; y < H; ++y) {
    auto* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(rgb.at(c, y, x), 0.0, 1.0);
        row[x][2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0));  // BGR
      }
    }
  }
  imwrite_checked(path, img);
}

Tensor read_rgb_png(const std::string& path) {
  cv::Mat img = imread_checked(path, cv::IMREAD_COLOR);
  Tensor out({3, img.rows, img.cols});
  for (int y = 0; y < img.rows; ++y) {
    const auto* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.cols; ++x) {
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = row[x][2 - c] / 255.0;
    }
  }
  return out;
}

void write_mask_png(const std::string& path, const Tensor& mask) {
  if (mask.rank() != 2) throw std::invalid_argument("mask must be [H,W]");
  cv::Mat img(mask.dim(0), mask.dim(1), CV_8UC1);
  for (int y = 0; y < mask.dim(0); ++y) {
    auto* row = img.ptr<std::uint8_t>(y);
    for (int x = 0; x < mask.dim(1); ++x) row[x] = mask.at(y, x) > 0.5 ? 255 : 0;
  }
  imwrite_checked(path, img);
}

Tensor read_mask_png(const std::string& path) {
  cv::Mat img = imread_checked(path, cv::IMREAD_GRAYSCALE);
  Tensor out({img.rows, img.cols});
  for (int y = 0; y < img.rows; ++y) {
    const auto* row = img.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.cols; ++x) out.at(y, x) = row[x] > 127 ? 1.0 : 0.0;
  }
  return out;
}

void write_gray8_png(const std::string& path, const Tensor& values) {
  if (values.rank() != 2) throw std::invalid_argument("gray map must be [H,W]");
  cv::Mat img(values.dim(0), values.dim(1), CV_8UC1);
  for (int y = 0; y < values.dim(0); ++y) {
    auto* row = img.ptr<std::uint8_t>(y);
    for (int x = 0; x < values.dim(1); ++x) {
      row[x] = static_cast<std::uint8_t>(std::lround(std::clamp(values.at(y, x), 0.0, 1.0) * 255.0));
    }
  }
  imwrite_checked(path, img);
}

}  // namespace tdc
