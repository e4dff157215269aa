#pragma once

#include <Eigen/Dense>
#include <string>

namespace gtd {

// Binary grid container: 4 magic bytes, u32 LE width, u32 LE height, then
// row-major LE float32 values. "DGRD" carries depth grids, "HMAP" heatmaps.

void write_grid(const std::string& path, const Eigen::MatrixXd& grid,
                const char magic[4]);
Eigen::MatrixXd read_grid(const std::string& path, const char magic[4]);

void write_depth_grid(const std::string& path, const Eigen::MatrixXd& grid);
Eigen::MatrixXd read_depth_grid(const std::string& path);
void write_heatmap_grid(const std::string& path, const Eigen::MatrixXd& grid);
Eigen::MatrixXd read_heatmap_grid(const std::string& path);

}  // namespace gtd
