#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "depthweave/types.hpp"

namespace depthweave::io {

namespace fs = std::filesystem;

/// Grayscale PFM. Written little-endian (negative scale), rows bottom to top;
/// invalid pixels are stored as 0 and every non-positive value reads back invalid.
DepthMap read_pfm(const fs::path& path);
void write_pfm(const fs::path& path, const DepthMap& depth);

/// Middlebury .flo. Invalid pixels are written as 1e10; components above 1e9 read back invalid.
/// Values are stored as float32.
FlowField2D read_flo(const fs::path& path);
void write_flo(const fs::path& path, const FlowField2D& flow);

/// Per-pixel 3D displacements for frames s = 1..g, float32, NaN where invalid.
struct SceneFlowFile {
    int width = 0;
    int height = 0;
    std::vector<std::vector<Vec3>> frames;  // [s-1][pixel]
};
SceneFlowFile read_sf3d(const fs::path& path);
void write_sf3d(const fs::path& path, const SceneFlowFile& sf);

/// Binary PPM (P6); maxval up to 65535 on read, 255 on write.
ColorImage read_ppm(const fs::path& path);
void write_ppm(const fs::path& path, const ColorImage& image);

/// Binary PGM (P5), 8 bits.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
};
GrayImage read_pgm(const fs::path& path);
void write_pgm(const fs::path& path, const GrayImage& image);

/// 8-bit RGB PNG via libpng.
ColorImage read_png(const fs::path& path);
void write_png(const fs::path& path, const ColorImage& image);

/// PPM or PNG, chosen by extension.
ColorImage read_color(const fs::path& path);

/// MPI Sintel depth (.dpt): float magic, int32 width and height, float32 depths.
DepthMap read_sintel_depth(const fs::path& path);

/// MPI Sintel camera (.cam): float magic, 3x3 intrinsics and 3x4 extrinsics as float64.
struct SintelCamera {
    Mat3 intrinsics = Mat3::Identity();
    Eigen::Matrix<double, 3, 4> extrinsics = Eigen::Matrix<double, 3, 4>::Zero();

    CameraIntrinsics to_intrinsics(int width, int height) const;
};
SintelCamera read_sintel_cam(const fs::path& path);

}  // namespace depthweave::io
