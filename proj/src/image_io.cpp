// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "epn/image_io.hpp"

#include <png.h>

#include <cstring>
#include <vector>

namespace epn {

template <typename T>
Tensor<T> read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError(path.string(), std::string("cannot decode PNG: ") + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError(path.string(), "cannot decode PNG: " + msg);
  }
  const int h = static_cast<int>(img.height);
  const int w = static_cast<int>(img.width);
  Tensor<T> out(3, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(c, y, x) = static_cast<T>(buf[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / T{255};
      }
    }
  }
  return out;
}

template <typename T>
void write_png(const Tensor<T>& image, const std::filesystem::path& path) {
  if (image.channels() != 3 || image.height() <= 0 || image.width() <= 0) {
    throw DimensionError("write_png: expected a non-empty 3-channel image, got " +
                         image.shape_string());
  }
  const int h = image.height();
  const int w = image.width();
  std::vector<png_byte> buf(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const T v = std::clamp(image.at(c, y, x), T{0}, T{1});
        buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<png_byte>(static_cast<int>(v * T{255} + T{0.5}));
      }
    }
  }
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError(path.string(), std::string("cannot write PNG: ") + img.message);
  }
}

template Tensor<float> read_png<float>(const std::filesystem::path&);
template Tensor<double> read_png<double>(const std::filesystem::path&);
template void write_png<float>(const Tensor<float>&, const std::filesystem::path&);
template void write_png<double>(const Tensor<double>&, const std::filesystem::path&);

}  // namespace epn
