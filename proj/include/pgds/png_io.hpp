#pragma once

#include <string>

#include "pgds/tensor.hpp"

namespace pgds {

// 8-bit RGB PNG <-> (H, W, 3) tensor with values in [0,1].
// Writing quantizes with round(v*255) after clamping to [0,1]; the encoder
// settings are pinned so identical tensors produce identical files.
Tensor read_png(const std::string& path);
void write_png(const std::string& path, const Tensor& image);

}  // namespace pgds
