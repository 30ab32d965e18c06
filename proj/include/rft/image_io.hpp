#pragma once

#include <string>

#include "rft/tensor.hpp"

namespace rft {

// Binary portable pixmaps: P6 (8-bit color) and P5 (8-bit gray). Values scale
// to [0,1] on read and round to the nearest 8-bit level on write, so
// write -> read is exact on the quantization grid. Parse failures report the
// byte offset.

Tensor read_ppm(const std::string& path);                    // [3 x H x W]
Tensor read_pgm(const std::string& path);                    // [H x W]
void write_ppm(const std::string& path, const Tensor& image);
void write_pgm(const std::string& path, const Tensor& plane);

// In-memory variants used by the file API and the tests.
Tensor decode_ppm(const std::string& bytes);
Tensor decode_pgm(const std::string& bytes);
std::string encode_ppm(const Tensor& image);
std::string encode_pgm(const Tensor& plane);

}  // namespace rft
