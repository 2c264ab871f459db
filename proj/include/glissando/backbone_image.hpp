#pragma once

// The RGB U-Net: five encoder stages (stride-2 3x3 conv doubling channels,
// then a stride-1 3x3 conv, group norm + ReLU after each) and five decoder
// stages (2x2 deconv halving channels, skip concat, two 3x3 convs). Decoder
// level 5 is full input resolution and has no matching encoder map to skip.

#include <array>
#include <vector>

#include "glissando/autodiff.hpp"
#include "glissando/image.hpp"
#include "glissando/nn.hpp"

namespace glissando {

// Decoder feature maps, level 1 (coarsest, H/16) .. level 5 (full res).
struct ImagePyramid {
    std::array<ad::Tensor, 5> levels;
    std::array<int, 5> strides;  // pixels per feature cell
    std::array<int, 5> channels;

    static constexpr int kLevels = 5;
    int stride_of(int level) const { return strides[level - 1]; }   // level in 1..5
    const ad::Tensor& level(int level) const { return levels[level - 1]; }
};

class UNet {
public:
    UNet() = default;
    UNet(nn::ParamRegistry& reg, const std::string& prefix, int base_channels, int norm_groups,
         Rng& rng);

    // Image must have dimensions divisible by 32; returns the 5 encoder maps
    // (H/2 .. H/32).
    std::vector<ad::Tensor> encode(nn::GraphContext& ctx, const ad::Tensor& image) const;
    ImagePyramid decode(nn::GraphContext& ctx, const std::vector<ad::Tensor>& enc) const;

    // Closed-form channel widths.
    int encoder_channels(int stage) const { return base_ << (stage - 1); } // stage 1..5
    int level_channels(int level) const { return level >= 5 ? base_ / 2 : base_ << (4 - level); }
    int base_channels() const { return base_; }

private:
    struct EncStage {
        nn::Conv2d down, conv;
        nn::GroupNorm n1, n2;
    };
    struct DecStage {
        nn::Deconv2x2 up;
        nn::GroupNorm nu;
        nn::Conv2d c1, c2;
        nn::GroupNorm n1, n2;
    };
    int base_ = 0;
    std::array<EncStage, 5> enc_;
    std::array<DecStage, 5> dec_;
};

// CHW [0,1] image -> constant graph input.
ad::Tensor image_to_tensor(const ImageTensor& image);

} // namespace glissando
