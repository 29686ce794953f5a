#pragma once

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fsplat/common.hpp"

namespace fsplat {

// Row-major, channel-interleaved plane stack with values in [0,1] for color
// images (other planes carry whatever unit the channel defines).
struct Image {
  int width = 0, height = 0, channels = 0;
  std::vector<double> data;
  std::vector<std::string> channel_names;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {}

  double& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

namespace detail {

struct PngReader {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngWriter {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

inline void open_png_read(PngReader& r, const std::string& path) {
  r.fp = std::fopen(path.c_str(), "rb");
  if (!r.fp) throw std::runtime_error("png: cannot open " + path);
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  r.info = r.png ? png_create_info_struct(r.png) : nullptr;
  if (!r.info) throw std::runtime_error("png: allocation failure reading " + path);
}

}  // namespace detail

inline Image load_png(const std::string& path) {
  detail::PngReader r;
  detail::open_png_read(r, path);
  if (setjmp(png_jmpbuf(r.png)))
    throw std::runtime_error("png: decode error in " + path);
  png_init_io(r.png, r.fp);
  png_read_info(r.png, r.info);

  const png_byte color_type = png_get_color_type(r.png, r.info);
  const png_byte bit_depth = png_get_bit_depth(r.png, r.info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(r.png);
  if (bit_depth == 16) png_set_strip_16(r.png);
  if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(r.png);
  png_read_update_info(r.png, r.info);

  const int w = static_cast<int>(png_get_image_width(r.png, r.info));
  const int h = static_cast<int>(png_get_image_height(r.png, r.info));
  const int c = png_get_channels(r.png, r.info);
  const size_t stride = png_get_rowbytes(r.png, r.info);

  std::vector<png_byte> bytes(stride * h);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = bytes.data() + stride * y;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);

  Image img(w, h, c);
  for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

inline void save_png(const std::string& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("png: only 1- or 3-channel images are written");
  detail::PngWriter w;
  w.fp = std::fopen(path.c_str(), "wb");
  if (!w.fp) throw std::runtime_error("png: cannot write " + path);
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  w.info = w.png ? png_create_info_struct(w.png) : nullptr;
  if (!w.info) throw std::runtime_error("png: allocation failure writing " + path);
  if (setjmp(png_jmpbuf(w.png)))
    throw std::runtime_error("png: encode error in " + path);
  png_init_io(w.png, w.fp);
  png_set_IHDR(w.png, w.info, img.width, img.height, 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);

  std::vector<png_byte> row(static_cast<size_t>(img.width) * img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        row[static_cast<size_t>(x) * img.channels + c] = static_cast<png_byte>(
            std::lround(255.0 * clamp01(img.at(y, x, c))));
    png_write_row(w.png, row.data());
  }
  png_write_end(w.png, nullptr);
}

// Palette-indexed label map: pixel value = class index.
inline std::vector<int> load_palette_png(const std::string& path, int& width,
                                         int& height) {
  detail::PngReader r;
  detail::open_png_read(r, path);
  if (setjmp(png_jmpbuf(r.png)))
    throw std::runtime_error("png: decode error in " + path);
  png_init_io(r.png, r.fp);
  png_read_info(r.png, r.info);
  const png_byte color_type = png_get_color_type(r.png, r.info);
  if (color_type != PNG_COLOR_TYPE_PALETTE && color_type != PNG_COLOR_TYPE_GRAY)
    throw std::runtime_error("png: " + path + " is not a palette or gray label map");
  if (png_get_bit_depth(r.png, r.info) < 8) png_set_packing(r.png);
  if (png_get_bit_depth(r.png, r.info) == 16) png_set_strip_16(r.png);
  png_read_update_info(r.png, r.info);

  width = static_cast<int>(png_get_image_width(r.png, r.info));
  height = static_cast<int>(png_get_image_height(r.png, r.info));
  const size_t stride = png_get_rowbytes(r.png, r.info);
  std::vector<png_byte> bytes(stride * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = bytes.data() + stride * y;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);

  std::vector<int> labels(static_cast<size_t>(width) * height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      labels[static_cast<size_t>(y) * width + x] = bytes[stride * y + x];
  return labels;
}

inline void save_palette_png(const std::string& path, const std::vector<int>& labels,
                             int width, int height, int classes) {
  if (classes < 1 || classes > 256)
    throw std::invalid_argument("png: palette class count outside [1, 256]");
  detail::PngWriter w;
  w.fp = std::fopen(path.c_str(), "wb");
  if (!w.fp) throw std::runtime_error("png: cannot write " + path);
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  w.info = w.png ? png_create_info_struct(w.png) : nullptr;
  if (!w.info) throw std::runtime_error("png: allocation failure writing " + path);
  if (setjmp(png_jmpbuf(w.png)))
    throw std::runtime_error("png: encode error in " + path);
  png_init_io(w.png, w.fp);
  png_set_IHDR(w.png, w.info, width, height, 8, PNG_COLOR_TYPE_PALETTE,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_color> palette(classes);
  for (int i = 0; i < classes; ++i) {
    const double hue = 2 * kPi * i / classes;
    palette[i].red = static_cast<png_byte>(127.5 * (1 + std::cos(hue)));
    palette[i].green = static_cast<png_byte>(127.5 * (1 + std::cos(hue - 2.094)));
    palette[i].blue = static_cast<png_byte>(127.5 * (1 + std::cos(hue + 2.094)));
  }
  png_set_PLTE(w.png, w.info, palette.data(), classes);
  png_write_info(w.png, w.info);

  std::vector<png_byte> row(width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int v = labels[static_cast<size_t>(y) * width + x];
      if (v < 0 || v >= classes)
        throw std::runtime_error("png: label outside palette in " + path);
      row[x] = static_cast<png_byte>(v);
    }
    png_write_row(w.png, row.data());
  }
  png_write_end(w.png, nullptr);
}

// Raw little-endian float32 planes with a JSON sidecar describing the shape.
inline void save_f32(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("f32: cannot write " + path);
  std::vector<float> buf(img.data.size());
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(img.data[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));

  nlohmann::json side;
  side["width"] = img.width;
  side["height"] = img.height;
  side["channels"] = img.channels;
  side["channel_names"] = img.channel_names;
  std::ofstream js(path + ".json");
  if (!js) throw std::runtime_error("f32: cannot write sidecar for " + path);
  js << side.dump(2) << "\n";
}

inline Image load_f32(const std::string& path) {
  std::ifstream js(path + ".json");
  if (!js) throw ConfigError("f32: missing sidecar " + path + ".json");
  nlohmann::json side;
  try {
    js >> side;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("f32: bad sidecar " + path + ".json: " + e.what());
  }
  Image img(side.at("width").get<int>(), side.at("height").get<int>(),
            side.at("channels").get<int>());
  if (side.contains("channel_names"))
    img.channel_names = side.at("channel_names").get<std::vector<std::string>>();

  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("f32: cannot open " + path);
  std::vector<float> buf(img.data.size());
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (static_cast<size_t>(in.gcount()) != buf.size() * sizeof(float))
    throw ConfigError("f32: " + path + " size does not match its sidecar shape");
  for (size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i];
  return img;
}

}  // namespace fsplat
