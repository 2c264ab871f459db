#include "glissando/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace glissando::nn {

Parameter& ParamRegistry::create(const std::string& name, const ad::Shape& shape) {
    if (by_name_.count(name)) {
        throw std::invalid_argument("ParamRegistry: duplicate parameter " + name);
    }
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->shape = shape;
    p->value.assign(static_cast<size_t>(ad::numel(shape)), 0.0f);
    p->grad.assign(p->value.size(), 0.0f);
    Parameter* raw = p.get();
    items_.push_back(std::move(p));
    by_name_[name] = raw;
    return *raw;
}

Parameter* ParamRegistry::find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

int64_t ParamRegistry::total_size() const {
    int64_t n = 0;
    for (const auto& p : items_) n += p->size();
    return n;
}

void ParamRegistry::zero_grad() {
    for (const auto& p : items_) {
        std::fill(p->grad.begin(), p->grad.end(), 0.0f);
    }
}

ad::Tensor GraphContext::param(Parameter& p) {
    auto it = index_.find(&p);
    if (it != index_.end()) return used_[it->second].second;
    ad::Tensor leaf = ad::Tensor::view_of(p.shape, p.value.data(), train_);
    index_[&p] = used_.size();
    used_.emplace_back(&p, leaf);
    return leaf;
}

void GraphContext::harvest_gradients() {
    for (auto& [p, leaf] : used_) {
        if (leaf.node()->grad.empty()) continue;
        const float* g = leaf.node()->grad.data();
        for (int64_t i = 0; i < p->size(); ++i) p->grad[i] += g[i];
    }
}

void init_he_normal(std::vector<float>& w, int fan_in, Rng& rng, double gain) {
    const double std_dev = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : w) v = static_cast<float>(rng.normal() * std_dev);
}

int norm_groups_for(int channels, int preferred) {
    int g = std::min(preferred, channels);
    while (g > 1 && channels % g != 0) --g;
    return g;
}

Conv2d::Conv2d(ParamRegistry& reg, const std::string& name, int cin, int cout, int k_,
               int stride_, int pad_, Rng& rng)
    : k(k_), stride(stride_), pad(pad_) {
    w = &reg.create(name + ".weight", {cout, cin * k * k});
    b = &reg.create(name + ".bias", {cout});
    init_he_normal(w->value, cin * k * k, rng);
}

ad::Tensor Conv2d::forward(GraphContext& ctx, const ad::Tensor& x) const {
    return ad::conv2d(x, ctx.param(*w), ctx.param(*b), k, stride, pad);
}

Deconv2x2::Deconv2x2(ParamRegistry& reg, const std::string& name, int cin, int cout_, Rng& rng)
    : cout(cout_) {
    w = &reg.create(name + ".weight", {cin, 4 * cout});
    b = &reg.create(name + ".bias", {cout});
    init_he_normal(w->value, cin, rng);
}

ad::Tensor Deconv2x2::forward(GraphContext& ctx, const ad::Tensor& x) const {
    return ad::deconv2x2(x, ctx.param(*w), ctx.param(*b));
}

GroupNorm::GroupNorm(ParamRegistry& reg, const std::string& name, int channels, int groups_)
    : groups(norm_groups_for(channels, groups_)) {
    gamma = &reg.create(name + ".gamma", {channels});
    beta = &reg.create(name + ".beta", {channels});
    std::fill(gamma->value.begin(), gamma->value.end(), 1.0f);
}

ad::Tensor GroupNorm::forward(GraphContext& ctx, const ad::Tensor& x) const {
    return ad::group_norm(x, ctx.param(*gamma), ctx.param(*beta), groups);
}

Linear::Linear(ParamRegistry& reg, const std::string& name, int in, int out, Rng& rng,
               bool with_bias) {
    w = &reg.create(name + ".weight", {in, out});
    if (with_bias) b = &reg.create(name + ".bias", {out});
    init_he_normal(w->value, in, rng);
}

ad::Tensor Linear::forward(GraphContext& ctx, const ad::Tensor& x) const {
    return ad::linear(x, ctx.param(*w), b ? ctx.param(*b) : ad::Tensor());
}

} // namespace glissando::nn
