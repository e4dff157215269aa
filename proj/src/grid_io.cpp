#include "gtd/grid_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace gtd {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("grid file truncated");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_grid(const std::string& path, const Eigen::MatrixXd& grid,
                const char magic[4]) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os.write(magic, 4);
  put_u32(os, static_cast<uint32_t>(grid.cols()));
  put_u32(os, static_cast<uint32_t>(grid.rows()));
  for (Eigen::Index r = 0; r < grid.rows(); ++r)
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
      float f = static_cast<float>(grid(r, c));
      uint32_t u;
      std::memcpy(&u, &f, 4);
      put_u32(os, u);
    }
  if (!os) throw std::runtime_error("write failed: " + path);
}

Eigen::MatrixXd read_grid(const std::string& path, const char magic[4]) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char got[4];
  is.read(got, 4);
  if (!is || std::memcmp(got, magic, 4) != 0)
    throw std::runtime_error("bad magic in " + path);
  uint32_t w = get_u32(is), h = get_u32(is);
  Eigen::MatrixXd grid(h, w);
  for (uint32_t r = 0; r < h; ++r)
    for (uint32_t c = 0; c < w; ++c) {
      uint32_t u = get_u32(is);
      float f;
      std::memcpy(&f, &u, 4);
      grid(r, c) = static_cast<double>(f);
    }
  return grid;
}

void write_depth_grid(const std::string& path, const Eigen::MatrixXd& grid) {
  write_grid(path, grid, "DGRD");
}
Eigen::MatrixXd read_depth_grid(const std::string& path) {
  return read_grid(path, "DGRD");
}
void write_heatmap_grid(const std::string& path, const Eigen::MatrixXd& grid) {
  write_grid(path, grid, "HMAP");
}
Eigen::MatrixXd read_heatmap_grid(const std::string& path) {
  return read_grid(path, "HMAP");
}

}  // namespace gtd
