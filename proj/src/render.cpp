#include "render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#ifdef THERMAL_HAVE_ZLIB
#include <zlib.h>
#endif

namespace thermal {

namespace {

struct Mapped {
  std::vector<double> t;  // normalized [0,1]
  size_t low = 0, high = 0;
};

Mapped map_range(const ScalarField& f, const RenderRange& r) {
  if (!(r.hi > r.lo)) fail_arg("render range must satisfy hi > lo");
  Mapped m;
  const int n = f.spec().pixels();
  m.t.resize((size_t)n);
  const double inv = 1.0 / (r.hi - r.lo);
  for (int i = 0; i < n; ++i) {
    double t = (f.data()[i] - r.lo) * inv;
    if (t < 0) {
      t = 0;
      ++m.low;
    } else if (t > 1) {
      t = 1;
      ++m.high;
    }
    m.t[(size_t)i] = t;
  }
  return m;
}

void write_note(const std::string& path, const Mapped& m) {
  if (m.low == 0 && m.high == 0) return;
  std::ofstream out(path + ".note", std::ios::trunc);
  if (!out) fail_run("cannot write clamp note for " + path);
  out << "clamped pixels: " << m.low << " below range, " << m.high << " above range\n";
}

void write_binary(const std::string& path, const std::string& buf, const char* what) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_run(std::string("cannot open ") + what + " for writing: " + path);
  out.write(buf.data(), (std::streamsize)buf.size());
  if (!out) fail_run(std::string("write failed for ") + what + ": " + path);
}

}  // namespace

void write_pgm(const ScalarField& f, const RenderRange& range, const std::string& path) {
  Mapped m = map_range(f, range);
  const int w = f.spec().width, h = f.spec().height;
  std::string buf = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  buf.reserve(buf.size() + m.t.size());
  for (double t : m.t) buf.push_back((char)(unsigned char)std::lround(t * 255.0));
  write_binary(path, buf, "pgm");
  write_note(path, m);
}

bool png_supported() {
#ifdef THERMAL_HAVE_ZLIB
  return true;
#else
  return false;
#endif
}

#ifdef THERMAL_HAVE_ZLIB

namespace {

void put_be32(std::string& s, uint32_t v) {
  s.push_back((char)((v >> 24) & 0xFF));
  s.push_back((char)((v >> 16) & 0xFF));
  s.push_back((char)((v >> 8) & 0xFF));
  s.push_back((char)(v & 0xFF));
}

void put_chunk(std::string& out, const char type[4], const std::string& data) {
  put_be32(out, (uint32_t)data.size());
  std::string body(type, 4);
  body += data;
  out += body;
  uint32_t crc = (uint32_t)crc32(0L, (const Bytef*)body.data(), (uInt)body.size());
  put_be32(out, crc);
}

}  // namespace

void write_png(const ScalarField& f, const RenderRange& range, const std::string& path) {
  Mapped m = map_range(f, range);
  const int w = f.spec().width, h = f.spec().height;

  // filter byte 0 + RGB triples per scanline
  std::string raw;
  raw.reserve((size_t)h * (1 + 3 * (size_t)w));
  auto chan = [](double v) {
    return (char)(unsigned char)std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
  };
  for (int y = 0; y < h; ++y) {
    raw.push_back('\0');
    for (int x = 0; x < w; ++x) {
      double t = m.t[(size_t)y * w + x];
      raw.push_back(chan(3.0 * t));
      raw.push_back(chan(3.0 * t - 1.0));
      raw.push_back(chan(3.0 * t - 2.0));
    }
  }

  uLongf zcap = compressBound((uLong)raw.size());
  std::string z(zcap, '\0');
  if (compress2((Bytef*)z.data(), &zcap, (const Bytef*)raw.data(), (uLong)raw.size(), 9) != Z_OK)
    fail_run("png compression failed for " + path);
  z.resize(zcap);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_be32(ihdr, (uint32_t)w);
  put_be32(ihdr, (uint32_t)h);
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", "");
  write_binary(path, out, "png");
  write_note(path, m);
}

#else

void write_png(const ScalarField&, const RenderRange&, const std::string& path) {
  fail_run("png support was not compiled in (zlib missing): " + path);
}

#endif

}  // namespace thermal
