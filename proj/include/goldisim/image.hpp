#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "goldisim/errors.hpp"

namespace goldisim {

// 8-bit single-channel raster. Row-major, pixels[y * width + x].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
    if (w < 1 || h < 1) throw ParameterError("GrayImage: dimensions must be >= 1");
  }

  std::uint8_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int x, int y) {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  bool operator==(const GrayImage&) const = default;
};

// ---- PGM (P5, maxval 255) — the bit-exact reference format ----

inline void write_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for read: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw IoError("not a P5 PGM: " + path);
  auto next_token = [&in, &path]() {
    std::string tok;
    for (;;) {
      if (!(in >> tok)) throw IoError("truncated PGM header: " + path);
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
  };
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (maxval != 255) throw IoError("unsupported PGM maxval: " + path);
  in.get();  // single whitespace after maxval
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw IoError("truncated PGM data: " + path);
  return img;
}

// ---- PNG (8-bit grayscale only), zlib for deflate/crc ----

namespace detail {

inline void png_put_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

inline void png_chunk(std::vector<std::uint8_t>& out, const char* type,
                      const std::vector<std::uint8_t>& data) {
  png_put_u32(out, static_cast<std::uint32_t>(data.size()));
  std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
  png_put_u32(out, crc);
}

}  // namespace detail

inline void write_png(const GrayImage& img, const std::string& path) {
  // filter 0 on every scanline
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(img.height) * (img.width + 1));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), img.pixels.begin() + static_cast<std::size_t>(y) * img.width,
               img.pixels.begin() + static_cast<std::size_t>(y + 1) * img.width);
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw IoError("PNG deflate failed: " + path);
  comp.resize(comp_len);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  detail::png_put_u32(ihdr, static_cast<std::uint32_t>(img.width));
  detail::png_put_u32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  detail::png_chunk(out, "IHDR", ihdr);
  detail::png_chunk(out, "IDAT", comp);
  detail::png_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path);
}

inline GrayImage read_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for read: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
    throw IoError("not a PNG: " + path);

  auto rd_u32 = [&buf](std::size_t p) {
    return (static_cast<std::uint32_t>(buf[p]) << 24) | (static_cast<std::uint32_t>(buf[p + 1]) << 16) |
           (static_cast<std::uint32_t>(buf[p + 2]) << 8) | buf[p + 3];
  };

  int w = 0, h = 0;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t len = rd_u32(pos);
    const std::string type(buf.begin() + pos + 4, buf.begin() + pos + 8);
    if (pos + 12 + len > buf.size()) throw IoError("truncated PNG: " + path);
    const std::uint8_t* data = buf.data() + pos + 8;
    if (type == "IHDR") {
      w = static_cast<int>(rd_u32(pos + 8));
      h = static_cast<int>(rd_u32(pos + 12));
      if (data[8] != 8 || data[9] != 0 || data[12] != 0)
        throw IoError("only non-interlaced 8-bit grayscale PNG supported: " + path);
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  if (w < 1 || h < 1) throw IoError("missing IHDR: " + path);

  std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * (w + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw IoError("PNG inflate failed: " + path);

  GrayImage img(w, h);
  // defilter, bpp = 1
  for (int y = 0; y < h; ++y) {
    const std::uint8_t filter = raw[static_cast<std::size_t>(y) * (w + 1)];
    const std::uint8_t* src = raw.data() + static_cast<std::size_t>(y) * (w + 1) + 1;
    std::uint8_t* dst = img.pixels.data() + static_cast<std::size_t>(y) * w;
    const std::uint8_t* up = y > 0 ? dst - w : nullptr;
    for (int x = 0; x < w; ++x) {
      const int a = x > 0 ? dst[x - 1] : 0;
      const int b = up ? up[x] : 0;
      const int c = (x > 0 && up) ? up[x - 1] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: {
          const int p = a + b - c;
          const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
          v += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
          break;
        }
        default: throw IoError("bad PNG filter type: " + path);
      }
      dst[x] = static_cast<std::uint8_t>(v & 0xff);
    }
  }
  return img;
}

}  // namespace goldisim
