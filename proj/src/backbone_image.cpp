#include "glissando/backbone_image.hpp"

#include <stdexcept>
#include <string>

namespace glissando {

UNet::UNet(nn::ParamRegistry& reg, const std::string& prefix, int base_channels,
           int norm_groups, Rng& rng)
    : base_(base_channels) {
    if (base_channels < 2 || base_channels % 2 != 0) {
        throw std::invalid_argument("UNet: base_channels must be even and >= 2");
    }
    int cin = 3;
    for (int s = 0; s < 5; ++s) {
        const int cout = base_ << s;
        const std::string name = prefix + ".enc" + std::to_string(s + 1);
        enc_[s].down = nn::Conv2d(reg, name + ".down", cin, cout, 3, 2, 1, rng);
        enc_[s].n1 = nn::GroupNorm(reg, name + ".norm1", cout, norm_groups);
        enc_[s].conv = nn::Conv2d(reg, name + ".conv", cout, cout, 3, 1, 1, rng);
        enc_[s].n2 = nn::GroupNorm(reg, name + ".norm2", cout, norm_groups);
        cin = cout;
    }
    for (int l = 0; l < 5; ++l) {
        // Level l+1: deconv halves channels; levels 1..4 then concat the
        // matching-resolution encoder map before the two convs.
        const int in_ch = l == 0 ? base_ << 4 : level_channels(l);
        const int up_ch = in_ch / 2;
        const int skip_ch = l < 4 ? up_ch : 0;
        const int out_ch = level_channels(l + 1);
        const std::string name = prefix + ".dec" + std::to_string(l + 1);
        dec_[l].up = nn::Deconv2x2(reg, name + ".up", in_ch, up_ch, rng);
        dec_[l].nu = nn::GroupNorm(reg, name + ".norm_up", up_ch, norm_groups);
        dec_[l].c1 = nn::Conv2d(reg, name + ".conv1", up_ch + skip_ch, out_ch, 3, 1, 1, rng);
        dec_[l].n1 = nn::GroupNorm(reg, name + ".norm1", out_ch, norm_groups);
        dec_[l].c2 = nn::Conv2d(reg, name + ".conv2", out_ch, out_ch, 3, 1, 1, rng);
        dec_[l].n2 = nn::GroupNorm(reg, name + ".norm2", out_ch, norm_groups);
    }
}

std::vector<ad::Tensor> UNet::encode(nn::GraphContext& ctx, const ad::Tensor& image) const {
    if (image.shape().size() != 3 || image.shape()[0] != 3) {
        throw std::invalid_argument("UNet::encode: expected [3,H,W] input");
    }
    const int h = image.shape()[1], w = image.shape()[2];
    if (h % 32 != 0 || w % 32 != 0) {
        throw std::invalid_argument("UNet::encode: image dimensions must be divisible by 32");
    }
    std::vector<ad::Tensor> feats;
    ad::Tensor x = image;
    for (int s = 0; s < 5; ++s) {
        x = ad::relu(enc_[s].n1.forward(ctx, enc_[s].down.forward(ctx, x)));
        x = ad::relu(enc_[s].n2.forward(ctx, enc_[s].conv.forward(ctx, x)));
        feats.push_back(x);
    }
    return feats;
}

ImagePyramid UNet::decode(nn::GraphContext& ctx, const std::vector<ad::Tensor>& enc) const {
    if (enc.size() != 5) {
        throw std::invalid_argument("UNet::decode: expected 5 encoder maps");
    }
    for (int s = 0; s < 5; ++s) {
        if (enc[s].shape()[0] != encoder_channels(s + 1)) {
            throw std::invalid_argument("UNet::decode: encoder map channel mismatch");
        }
    }
    ImagePyramid pyr;
    const int input_h = enc[0].shape()[1] * 2;
    ad::Tensor x = enc[4];
    for (int l = 0; l < 5; ++l) {
        ad::Tensor up = ad::relu(dec_[l].nu.forward(ctx, dec_[l].up.forward(ctx, x)));
        ad::Tensor cat = l < 4 ? ad::concat_channels(up, enc[3 - l]) : up;
        x = ad::relu(dec_[l].n1.forward(ctx, dec_[l].c1.forward(ctx, cat)));
        x = ad::relu(dec_[l].n2.forward(ctx, dec_[l].c2.forward(ctx, x)));
        pyr.levels[l] = x;
        pyr.strides[l] = input_h / x.shape()[1];
        pyr.channels[l] = x.shape()[0];
    }
    return pyr;
}

ad::Tensor image_to_tensor(const ImageTensor& image) {
    return ad::Tensor::constant({image.channels, image.height, image.width}, image.values);
}

} // namespace glissando
