#include "dva/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace dva {

namespace {

void require_2d(const Tensor<float>& image) {
  if (image.rank() != 2) throw ShapeError("image tensors must be [H, W]");
}

}  // namespace

GrayImage to_gray_image(const Tensor<float>& image) {
  require_2d(image);
  GrayImage out{image.dim(1), image.dim(0), std::vector<std::uint8_t>(image.size())};
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::clamp(static_cast<double>(image[i]), 0.0, 1.0);
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

GrayImage normalized_gray_image(const Tensor<float>& image) {
  require_2d(image);
  GrayImage out{image.dim(1), image.dim(0), std::vector<std::uint8_t>(image.size(), 0)};
  const auto [lo_it, hi_it] = std::minmax_element(image.data().begin(), image.data().end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return out;
  for (std::size_t i = 0; i < image.size(); ++i) {
    out.pixels[i] = static_cast<std::uint8_t>(std::lround((image[i] - lo) / (hi - lo) * 255.0));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.pixels.data()),
           static_cast<std::streamsize>(image.pixels.size()));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  GrayImage img;
  int maxval = 0;
  is >> magic >> img.width >> img.height >> maxval;
  if (magic != "P5" || maxval != 255 || !is) {
    throw std::runtime_error(path.string() + " is not an 8-bit binary PGM");
  }
  is.get();  // single whitespace after the header
  img.pixels.resize(img.width * img.height);
  is.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!is) throw std::runtime_error("truncated PGM " + path.string());
  return img;
}

}  // namespace dva
