#pragma once

// Trainable layers over the autodiff ops. Parameters live in a registry owned
// by the model; forward passes view them read-only, so concurrent graphs over
// distinct samples are safe. Per-graph parameter leaves are cached in a
// GraphContext and their gradients are harvested after backward().

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "glissando/autodiff.hpp"
#include "glissando/rng.hpp"

namespace glissando::nn {

struct Parameter {
    std::string name;
    ad::Shape shape;
    std::vector<float> value;
    std::vector<float> grad;   // batch-reduced gradient
    std::vector<float> adam_m; // optimizer state, allocated on first use
    std::vector<float> adam_v;

    int64_t size() const { return ad::numel(shape); }
};

class ParamRegistry {
public:
    Parameter& create(const std::string& name, const ad::Shape& shape);
    Parameter* find(const std::string& name);
    const std::vector<std::unique_ptr<Parameter>>& items() const { return items_; }
    int64_t total_size() const;
    void zero_grad();

private:
    std::vector<std::unique_ptr<Parameter>> items_;
    std::unordered_map<std::string, Parameter*> by_name_;
};

// One forward/backward graph's view of the registry. Not thread-safe; build
// one per worker.
class GraphContext {
public:
    explicit GraphContext(bool train_mode) : train_(train_mode) {}

    ad::Tensor param(Parameter& p);
    bool train_mode() const { return train_; }

    // Adds every used leaf gradient into Parameter::grad. Call in a fixed
    // sample order for deterministic accumulation.
    void harvest_gradients();

private:
    bool train_;
    std::vector<std::pair<Parameter*, ad::Tensor>> used_;
    std::unordered_map<const Parameter*, size_t> index_;
};

// He-normal fan-in initialization for ReLU stacks.
void init_he_normal(std::vector<float>& w, int fan_in, Rng& rng, double gain = 1.0);

struct Conv2d {
    Conv2d() = default;
    Conv2d(ParamRegistry& reg, const std::string& name, int cin, int cout, int k, int stride,
           int pad, Rng& rng);
    ad::Tensor forward(GraphContext& ctx, const ad::Tensor& x) const;

    Parameter* w = nullptr;
    Parameter* b = nullptr;
    int k = 3, stride = 1, pad = 1;
};

struct Deconv2x2 {
    Deconv2x2() = default;
    Deconv2x2(ParamRegistry& reg, const std::string& name, int cin, int cout, Rng& rng);
    ad::Tensor forward(GraphContext& ctx, const ad::Tensor& x) const;

    Parameter* w = nullptr;
    Parameter* b = nullptr;
    int cout = 0;
};

struct GroupNorm {
    GroupNorm() = default;
    GroupNorm(ParamRegistry& reg, const std::string& name, int channels, int groups);
    ad::Tensor forward(GraphContext& ctx, const ad::Tensor& x) const;

    Parameter* gamma = nullptr;
    Parameter* beta = nullptr;
    int groups = 8;
};

struct Linear {
    Linear() = default;
    Linear(ParamRegistry& reg, const std::string& name, int in, int out, Rng& rng,
           bool with_bias = true);
    ad::Tensor forward(GraphContext& ctx, const ad::Tensor& x) const;

    Parameter* w = nullptr;
    Parameter* b = nullptr;
};

// Picks min(preferred, channels) groups that divide the channel count.
int norm_groups_for(int channels, int preferred = 8);

} // namespace glissando::nn
