#pragma once

#include <string>

#include "glissando/image.hpp"

namespace glissando {

// 8-bit RGB PNG -> [0,1] CHW floats. Throws DataError on unreadable files.
ImageTensor read_png_rgb8(const std::string& path);

// [0,1] CHW floats -> 8-bit RGB PNG (values clamped).
void write_png_rgb8(const std::string& path, const ImageTensor& image);

} // namespace glissando
