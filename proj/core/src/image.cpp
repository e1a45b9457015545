// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>

namespace pointfield::render {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f != nullptr) std::fclose(f);
    }
};

}  // namespace

Image Image::filled(std::size_t width, std::size_t height, double r, double g,
                    double b) {
    require(width > 0 && height > 0, "image dimensions must be positive");
    Image img;
    img.width = width;
    img.height = height;
    img.data.resize(width * height * 3);
    for (std::size_t i = 0; i < width * height; ++i) {
        img.data[3 * i + 0] = r;
        img.data[3 * i + 1] = g;
        img.data[3 * i + 2] = b;
    }
    return img;
}

Image load_png(const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> file(
        std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError(cat("cannot open image for reading: ", path));

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             nullptr, nullptr);
    require(png != nullptr, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<unsigned char> bytes;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError(cat("failed to decode PNG: ", path));
    }
    png_init_io(png, file.get());
    png_read_info(png, info);

    png_uint_32 width = png_get_image_width(png, info);
    png_uint_32 height = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);

    // Normalize every variant to 8-bit RGB.
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type == PNG_COLOR_TYPE_GRAY ||
        color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    bytes.resize(static_cast<std::size_t>(width) * height * 3);
    row_ptrs.resize(height);
    for (png_uint_32 y = 0; y < height; ++y)
        row_ptrs[y] = bytes.data() + static_cast<std::size_t>(y) * width * 3;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img;
    img.width = width;
    img.height = height;
    img.data.resize(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i)
        img.data[i] = static_cast<double>(bytes[i]) / 255.0;
    return img;
}

void save_png(const Image& image, const std::string& path) {
    require(image.width > 0 && image.height > 0,
            "cannot save an empty image");
    require(image.data.size() == image.width * image.height * 3,
            "image buffer size does not match dimensions");

    std::unique_ptr<std::FILE, FileCloser> file(
        std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError(cat("cannot open image for writing: ", path));

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              nullptr, nullptr);
    require(png != nullptr, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    std::vector<unsigned char> bytes(image.width * image.height * 3);
    std::vector<png_bytep> row_ptrs(image.height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(cat("failed to encode PNG: ", path));
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    for (std::size_t i = 0; i < bytes.size(); ++i) {
        double v = std::clamp(image.data[i], 0.0, 1.0);
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    for (std::size_t y = 0; y < image.height; ++y)
        row_ptrs[y] = bytes.data() + y * image.width * 3;
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

namespace {

void check_comparable(const Image& a, const Image& b) {
    require(a.width == b.width && a.height == b.height,
            "images must have equal dimensions, got ", a.width, "x", a.height,
            " vs ", b.width, "x", b.height);
    require(a.width > 0 && a.height > 0, "images must be non-empty");
    require(a.data.size() == a.width * a.height * 3 &&
                b.data.size() == b.width * b.height * 3,
            "image buffer size does not match dimensions");
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    check_comparable(a, b);
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        sum_sq += d * d;
    }
    double mse = sum_sq / static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

double ssim(const Image& a, const Image& b) {
    check_comparable(a, b);
    constexpr std::size_t kWindow = 11;
    constexpr double kSigma = 1.5;
    constexpr double kC1 = 0.01 * 0.01;
    constexpr double kC2 = 0.03 * 0.03;
    require(a.width >= kWindow && a.height >= kWindow,
            "images must be at least 11x11 for ssim, got ", a.width, "x",
            a.height);

    // Normalized 11x11 Gaussian kernel.
    double kernel[kWindow][kWindow];
    double kernel_sum = 0.0;
    for (std::size_t ky = 0; ky < kWindow; ++ky) {
        for (std::size_t kx = 0; kx < kWindow; ++kx) {
            double dx = static_cast<double>(kx) - 5.0;
            double dy = static_cast<double>(ky) - 5.0;
            double w = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
            kernel[ky][kx] = w;
            kernel_sum += w;
        }
    }
    for (std::size_t ky = 0; ky < kWindow; ++ky)
        for (std::size_t kx = 0; kx < kWindow; ++kx) kernel[ky][kx] /= kernel_sum;

    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y + kWindow <= a.height; ++y) {
            for (std::size_t x = 0; x + kWindow <= a.width; ++x) {
                double mu_a = 0.0, mu_b = 0.0;
                double aa = 0.0, bb = 0.0, ab = 0.0;
                for (std::size_t ky = 0; ky < kWindow; ++ky) {
                    for (std::size_t kx = 0; kx < kWindow; ++kx) {
                        double w = kernel[ky][kx];
                        double va = a.at(x + kx, y + ky, c);
                        double vb = b.at(x + kx, y + ky, c);
                        mu_a += w * va;
                        mu_b += w * vb;
                        aa += w * va * va;
                        bb += w * vb * vb;
                        ab += w * va * vb;
                    }
                }
                double var_a = aa - mu_a * mu_a;
                double var_b = bb - mu_b * mu_b;
                double cov = ab - mu_a * mu_b;
                double num = (2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2);
                double den =
                    (mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2);
                total += num / den;
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace pointfield::render
