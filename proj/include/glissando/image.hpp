#pragma once

#include <cstdint>
#include <vector>

namespace glissando {

// Planar (CHW) float image with values in [0,1].
struct ImageTensor {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> values;

    static ImageTensor zeros(int h, int w, int c) {
        ImageTensor img;
        img.height = h;
        img.width = w;
        img.channels = c;
        img.values.assign(static_cast<size_t>(h) * w * c, 0.0f);
        return img;
    }

    float& at(int c, int y, int x) {
        return values[(static_cast<size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return values[(static_cast<size_t>(c) * height + y) * width + x];
    }
};

} // namespace glissando
