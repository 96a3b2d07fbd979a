#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace formlab {

/// 8-bit grayscale raster, row-major, origin top-left.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const Image&) const = default;
};

/// 64-bit FNV-1a over width (u32 LE), height (u32 LE) and the pixel bytes.
std::uint64_t image_hash(const Image& img);
std::string hash_hex(std::uint64_t h);

/// Binary PGM (P5, maxval 255).
std::string encode_pgm(const Image& img);
Image decode_pgm(const std::string& bytes);
void write_pgm(const std::filesystem::path& path, const Image& img);
Image read_pgm(const std::filesystem::path& path);

/// Grayscale PNG (zlib-compressed, no filtering).
std::string encode_png(const Image& img);

}  // namespace formlab
