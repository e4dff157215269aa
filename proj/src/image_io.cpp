#include "gtd/image_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace gtd {

void write_ppm(const std::string& path, const ImageRGB& img) {
  const int w = img.width(), h = img.height();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(3 * w);
  auto q = [](double v) {
    double c = std::min(1.0, std::max(0.0, v));
    return static_cast<unsigned char>(std::lround(c * 255.0));
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      row[3 * x + 0] = q(img.r(y, x));
      row[3 * x + 1] = q(img.g(y, x));
      row[3 * x + 2] = q(img.b(y, x));
    }
    os.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

ImageRGB read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::string magic;
  is >> magic;
  if (magic != "P6") throw std::runtime_error("not a P6 PPM: " + path);
  int w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  if (w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("unsupported PPM header: " + path);
  is.get();  // single whitespace after header
  ImageRGB img;
  img.r.resize(h, w);
  img.g.resize(h, w);
  img.b.resize(h, w);
  std::vector<unsigned char> row(3 * w);
  for (int y = 0; y < h; ++y) {
    is.read(reinterpret_cast<char*>(row.data()), row.size());
    if (!is) throw std::runtime_error("PPM truncated: " + path);
    for (int x = 0; x < w; ++x) {
      img.r(y, x) = row[3 * x + 0] / 255.0;
      img.g(y, x) = row[3 * x + 1] / 255.0;
      img.b(y, x) = row[3 * x + 2] / 255.0;
    }
  }
  return img;
}

}  // namespace gtd
