#pragma once

// Reverse-mode automatic differentiation over float tensors. Graphs are
// built per sample (no batch dimension) and are single-threaded; batching
// is done by running one graph per worker and reducing parameter gradients
// in a fixed order.

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace glissando::ad {

using Shape = std::vector<int>;

int64_t numel(const Shape& s);

struct Node {
    Shape shape;
    std::vector<float> store;    // owned values (empty when viewing)
    const float* view = nullptr; // external read-only values
    std::vector<float> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;

    const float* data() const { return view ? view : store.data(); }
    float* mut_data() { return store.data(); }
    int64_t size() const { return numel(shape); }
    void ensure_grad();
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor constant(const Shape& shape, std::vector<float> values);
    // Leaf over external storage; the storage must outlive the graph.
    static Tensor view_of(const Shape& shape, const float* values, bool requires_grad);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t size() const { return node_->size(); }
    const float* data() const { return node_->data(); }
    float* mut_data() { return node_->mut_data(); }
    const float* grad() const { return node_->grad.data(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    Node* node() const { return node_.get(); }
    std::shared_ptr<Node> shared_node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Seeds d(root)/d(root) = 1 (root must be scalar) and runs the tape.
void backward(const Tensor& root);

// --- elementwise / linear algebra ---------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float s);
Tensor relu(const Tensor& x);
// x: [in] or [M,in]; w: [in,out]; bias: [out] or undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
// Weighted sum of scalar tensors -> scalar.
Tensor weighted_sum(const std::vector<Tensor>& terms, const std::vector<float>& weights);
// Copies data into a new shape with identity backward.
Tensor reshape(const Tensor& x, const Shape& shape);
// Concatenate along the last axis; both [M,A]+[M,B] -> [M,A+B] and
// [A]+[B] -> [A+B].
Tensor concat(const Tensor& a, const Tensor& b);
// [C1,H,W] + [C2,H,W] -> [C1+C2,H,W].
Tensor concat_channels(const Tensor& a, const Tensor& b);

// --- convolutional stack --------------------------------------------------

// x: [Cin,H,W]; w: [Cout, Cin*k*k]; bias: [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int k, int stride,
              int pad);
// 2x2 stride-2 transposed convolution. x: [Cin,H,W]; w: [Cin, 4*Cout];
// bias: [Cout] or undefined; output [Cout, 2H, 2W].
Tensor deconv2x2(const Tensor& x, const Tensor& w, const Tensor& bias);
// x: [C,H,W] or [C]; gamma/beta: [C]. Statistics per group of channels.
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups,
                  float eps = 1e-5f);
// Mean over the spatial dims: [C,H,W] -> [C].
Tensor spatial_mean(const Tensor& x);

// --- point-set machinery ---------------------------------------------------

// x: [N,C], idx values in [0,N) -> [R,C].
Tensor gather_rows(const Tensor& x, std::vector<int> idx);
// Max over row segments [offsets[s], offsets[s+1]) -> [S,C]. Every segment
// must be non-empty.
Tensor segmented_max(const Tensor& x, std::vector<int> offsets);

// Four bilinear taps per query on every channel plane. Positions are given
// in cell coordinates per tap; invalid queries produce zero rows and receive
// no gradient. map: [C,H,W] -> [P, 4*C], row layout [tap0 c0..cC, tap1 c0..].
struct RoiQuery {
    bool valid = false;
    std::array<float, 4> ty{}; // tap rows (cell coords)
    std::array<float, 4> tx{}; // tap cols
};
Tensor roi_align_gather(const Tensor& map, std::vector<RoiQuery> queries);

// --- stochastic / loss heads ----------------------------------------------

// z = mu + exp(0.5*logvar) * eps, eps fixed at call time.
Tensor gauss_sample(const Tensor& mu, const Tensor& logvar, std::vector<float> eps);

// Losses against constant targets; all return scalars.
Tensor chamfer_loss(const Tensor& pred_points, std::vector<float> target_points);
Tensor emd_loss(const Tensor& pred_points, std::vector<float> target_points);
// Per-point L2 pose loss; q is a raw (unnormalized) quaternion tensor [4],
// t is [3]; the ground-truth cloud and pose are constants.
Tensor pose_loss(const Tensor& q, const Tensor& t, std::vector<float> gt_points,
                 std::array<float, 4> q_gt, std::array<float, 3> t_gt);
Tensor kl_loss(const Tensor& mu, const Tensor& logvar);

} // namespace glissando::ad
