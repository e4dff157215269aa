#pragma once

#include <Eigen/Dense>
#include <string>

namespace gtd {

struct ImageRGB {
  Eigen::MatrixXd r, g, b;  // H x W, values in [0,1]
  int width() const { return static_cast<int>(r.cols()); }
  int height() const { return static_cast<int>(r.rows()); }
};

// Binary 8-bit PPM (P6), the one raster format the artifact speaks.
void write_ppm(const std::string& path, const ImageRGB& img);
ImageRGB read_ppm(const std::string& path);

}  // namespace gtd
