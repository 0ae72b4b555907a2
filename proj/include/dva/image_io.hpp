#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dva/tensor.hpp"

namespace dva {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// Maps [0,1] values to 0..255 with clamping and rounding.
GrayImage to_gray_image(const Tensor<float>& image);

/// Min-max normalizes to 0..255. A constant image (including all zeros)
/// exports as all zeros.
GrayImage normalized_gray_image(const Tensor<float>& image);

/// Binary PGM (P5), maxval 255. Throws std::runtime_error on I/O failure.
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace dva
