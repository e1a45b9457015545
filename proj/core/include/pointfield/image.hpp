// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pointfield/common.hpp"

namespace pointfield::render {

// RGB image with values in [0,1], row-major, interleaved channels.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> data;  // width * height * 3

    static Image filled(std::size_t width, std::size_t height, double r,
                        double g, double b);

    double& at(std::size_t x, std::size_t y, std::size_t c) {
        return data[(y * width + x) * 3 + c];
    }
    double at(std::size_t x, std::size_t y, std::size_t c) const {
        return data[(y * width + x) * 3 + c];
    }
    std::size_t pixel_count() const { return width * height; }
};

// 8-bit PNG I/O. Loading converts gray/palette/alpha variants to RGB; saving
// clamps to [0,1] and rounds to 8 bits.
Image load_png(const std::string& path);
void save_png(const Image& image, const std::string& path);

// Peak signal-to-noise ratio in dB, -10*log10 of the mean squared error over
// all channels. Identical images return +infinity.
double psnr(const Image& a, const Image& b);

// Mean structural similarity with the standard 11x11 Gaussian window
// (sigma 1.5), computed per channel over fully-valid windows and averaged.
double ssim(const Image& a, const Image& b);

}  // namespace pointfield::render
