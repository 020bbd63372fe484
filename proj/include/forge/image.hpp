#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace forge {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Packed 8-bit RGB raster, row-major.
class Image {
public:
    Image() = default;
    Image(int width, int height, Rgb fill = {}) : width_(width), height_(height), pixels_(std::size_t(width) * height, fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return pixels_.empty(); }

    Rgb& at(int x, int y) { return pixels_[std::size_t(y) * width_ + x]; }
    const Rgb& at(int x, int y) const { return pixels_[std::size_t(y) * width_ + x]; }

    void fill_rect(int x0, int y0, int x1, int y1, Rgb c);
    void fill_ellipse(int x0, int y0, int x1, int y1, Rgb c);

    std::span<const Rgb> pixels() const { return pixels_; }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<Rgb> pixels_;
};

struct ImageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Image decode_jpeg(std::span<const std::uint8_t> bytes);
Image read_jpeg(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_jpeg(const Image& img, int quality = 92);
void write_jpeg(const std::filesystem::path& path, const Image& img, int quality = 92);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

} // namespace forge
