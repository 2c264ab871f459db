#pragma once

// Scalar-templated kernels behind the loss module. The double instantiation
// backs gradient checks and evaluation; the float instantiation backs the
// training graph. Point arrays are row-major [n][3].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace glissando::kernels {

template <class T>
inline T dist3(const T* a, const T* b) {
    const T dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// --- Chamfer -----------------------------------------------------------

// Symmetric mean nearest-neighbor distance (unsquared):
// 0.5 * [ mean_i min_j |a_i - b_j| + mean_j min_i |b_j - a_i| ].
// Optionally records the nearest-neighbor index per side.
template <class T>
T chamfer(const T* a, int n, const T* b, int m,
          std::vector<int>* nn_ab = nullptr, std::vector<int>* nn_ba = nullptr) {
    if (n < 1 || m < 1) {
        throw std::invalid_argument("chamfer: empty point cloud");
    }
    if (nn_ab) nn_ab->assign(n, 0);
    if (nn_ba) nn_ba->assign(m, 0);
    T sum_ab = 0;
    for (int i = 0; i < n; ++i) {
        T best = std::numeric_limits<T>::max();
        int best_j = 0;
        for (int j = 0; j < m; ++j) {
            const T d = dist3(a + 3 * i, b + 3 * j);
            if (d < best) {
                best = d;
                best_j = j;
            }
        }
        sum_ab += best;
        if (nn_ab) (*nn_ab)[i] = best_j;
    }
    T sum_ba = 0;
    for (int j = 0; j < m; ++j) {
        T best = std::numeric_limits<T>::max();
        int best_i = 0;
        for (int i = 0; i < n; ++i) {
            const T d = dist3(b + 3 * j, a + 3 * i);
            if (d < best) {
                best = d;
                best_i = i;
            }
        }
        sum_ba += best;
        if (nn_ba) (*nn_ba)[j] = best_i;
    }
    return T(0.5) * (sum_ab / T(n) + sum_ba / T(m));
}

// Accumulates d(chamfer)/da into ga and d(chamfer)/db into gb (either may be
// null). Coincident pairs contribute a zero subgradient.
template <class T>
T chamfer_grad(const T* a, int n, const T* b, int m, T* ga, T* gb) {
    std::vector<int> nn_ab, nn_ba;
    const T value = chamfer(a, n, b, m, &nn_ab, &nn_ba);
    const T wa = T(0.5) / T(n);
    const T wb = T(0.5) / T(m);
    for (int i = 0; i < n; ++i) {
        const int j = nn_ab[i];
        const T d = dist3(a + 3 * i, b + 3 * j);
        if (d <= T(0)) continue;
        for (int k = 0; k < 3; ++k) {
            const T u = (a[3 * i + k] - b[3 * j + k]) / d;
            if (ga) ga[3 * i + k] += wa * u;
            if (gb) gb[3 * j + k] -= wa * u;
        }
    }
    for (int j = 0; j < m; ++j) {
        const int i = nn_ba[j];
        const T d = dist3(b + 3 * j, a + 3 * i);
        if (d <= T(0)) continue;
        for (int k = 0; k < 3; ++k) {
            const T u = (b[3 * j + k] - a[3 * i + k]) / d;
            if (gb) gb[3 * j + k] += wb * u;
            if (ga) ga[3 * i + k] -= wb * u;
        }
    }
    return value;
}

// --- Assignment solvers -------------------------------------------------

// Exact minimum-cost perfect matching on a dense n x n cost matrix
// (shortest augmenting path / Jonker-Volgenant style, O(n^3)).
// rowsol[i] = column assigned to row i.
template <class T>
void hungarian(const std::vector<T>& cost, int n, std::vector<int>& rowsol) {
    const T inf = std::numeric_limits<T>::max();
    std::vector<T> u(n + 1, 0), v(n + 1, 0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = 0;
            T delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const T cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    rowsol.assign(n, -1);
    for (int j = 1; j <= n; ++j) {
        if (p[j]) rowsol[p[j] - 1] = j - 1;
    }
}

// Forward auction with epsilon scaling; terminates at eps_final, so the
// matching cost is within n*eps_final of optimal.
template <class T>
void auction_assignment(const std::vector<T>& cost, int n, T eps_final,
                        std::vector<int>& rowsol) {
    T max_abs = 0;
    for (const T c : cost) max_abs = std::max(max_abs, std::abs(c));
    if (!(eps_final > T(0))) eps_final = T(1e-9);
    std::vector<T> price(n, 0);
    std::vector<int> owner(n, -1);
    rowsol.assign(n, -1);
    T eps = std::max(eps_final, max_abs / T(2) + eps_final);
    while (true) {
        std::fill(owner.begin(), owner.end(), -1);
        std::fill(rowsol.begin(), rowsol.end(), -1);
        std::vector<int> queue(n);
        std::iota(queue.begin(), queue.end(), 0);
        while (!queue.empty()) {
            const int i = queue.back();
            queue.pop_back();
            // Value of object j to bidder i is -cost - price.
            T best = -std::numeric_limits<T>::max(), second = best;
            int best_j = 0;
            for (int j = 0; j < n; ++j) {
                const T val = -cost[i * n + j] - price[j];
                if (val > best) {
                    second = best;
                    best = val;
                    best_j = j;
                } else if (val > second) {
                    second = val;
                }
            }
            if (second == -std::numeric_limits<T>::max()) second = best;
            price[best_j] += best - second + eps;
            if (owner[best_j] >= 0) {
                rowsol[owner[best_j]] = -1;
                queue.push_back(owner[best_j]);
            }
            owner[best_j] = i;
            rowsol[i] = best_j;
        }
        if (eps <= eps_final) break;
        eps = std::max(eps_final, eps / T(6));
    }
}

// --- Earth Mover's Distance ---------------------------------------------

inline constexpr int kEmdExactThreshold = 512;

// (1/n) * min over bijections of sum |a_i - b_pi(i)|. Exact Hungarian up to
// kEmdExactThreshold points, epsilon-auction above (eps = 1e-3 * mean cost).
template <class T>
T emd(const T* a, const T* b, int n, std::vector<int>* assignment_out = nullptr) {
    if (n < 1) {
        throw std::invalid_argument("emd: empty point cloud");
    }
    std::vector<T> cost(static_cast<size_t>(n) * n);
    T cost_sum = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const T d = dist3(a + 3 * i, b + 3 * j);
            cost[static_cast<size_t>(i) * n + j] = d;
            cost_sum += d;
        }
    }
    std::vector<int> rowsol;
    if (n <= kEmdExactThreshold) {
        hungarian(cost, n, rowsol);
    } else {
        const T eps = T(1e-3) * cost_sum / (T(n) * T(n));
        auction_assignment(cost, n, eps, rowsol);
    }
    T total = 0;
    for (int i = 0; i < n; ++i) total += cost[static_cast<size_t>(i) * n + rowsol[i]];
    if (assignment_out) *assignment_out = std::move(rowsol);
    return total / T(n);
}

// Gradient under a frozen assignment pi: d/da_i = (a_i - b_pi(i)) / (n*d_i).
template <class T>
void emd_grad_fixed_assignment(const T* a, const T* b, int n,
                               const std::vector<int>& assignment, T* ga, T* gb) {
    for (int i = 0; i < n; ++i) {
        const int j = assignment[i];
        const T d = dist3(a + 3 * i, b + 3 * j);
        if (d <= T(0)) continue;
        for (int k = 0; k < 3; ++k) {
            const T u = (a[3 * i + k] - b[3 * j + k]) / (d * T(n));
            if (ga) ga[3 * i + k] += u;
            if (gb) gb[3 * j + k] -= u;
        }
    }
}

// --- Quaternion rotation with derivatives --------------------------------

// Row-major 3x3 rotation from a unit quaternion (w, x, y, z).
template <class T>
void unit_quat_to_matrix(const T q[4], T r[9]) {
    const T w = q[0], x = q[1], y = q[2], z = q[3];
    r[0] = 1 - 2 * (y * y + z * z);
    r[1] = 2 * (x * y - w * z);
    r[2] = 2 * (x * z + w * y);
    r[3] = 2 * (x * y + w * z);
    r[4] = 1 - 2 * (x * x + z * z);
    r[5] = 2 * (y * z - w * x);
    r[6] = 2 * (x * z - w * y);
    r[7] = 2 * (y * z + w * x);
    r[8] = 1 - 2 * (x * x + y * y);
}

// dR/dq_c at a unit quaternion, c in {w,x,y,z}; row-major 3x3 per component.
template <class T>
void unit_quat_matrix_jacobian(const T q[4], T dr[4][9]) {
    const T w = q[0], x = q[1], y = q[2], z = q[3];
    const T dw[9] = {0, -z, y, z, 0, -x, -y, x, 0};
    const T dx[9] = {0, y, z, y, -2 * x, -w, z, w, -2 * x};
    const T dy[9] = {-2 * y, x, w, x, 0, z, -w, z, -2 * y};
    const T dz[9] = {-2 * z, -w, x, w, -2 * z, y, x, y, 0};
    for (int k = 0; k < 9; ++k) {
        dr[0][k] = 2 * dw[k];
        dr[1][k] = 2 * dx[k];
        dr[2][k] = 2 * dy[k];
        dr[3][k] = 2 * dz[k];
    }
}

// --- Per-point L2 pose loss ----------------------------------------------

// (1/n) * sum_i |(R(q_hat) p_i + t_hat) - (R(q_gt) p_i + t_gt)|.
// Quaternions are normalized internally; gradients (if requested) are with
// respect to the raw (unnormalized) estimated quaternion and translation.
template <class T>
T per_point_l2(const T* pts, int n, const T q_hat_raw[4], const T t_hat[3],
               const T q_gt_raw[4], const T t_gt[3],
               T* grad_q = nullptr, T* grad_t = nullptr) {
    if (n < 1) {
        throw std::invalid_argument("per_point_l2: empty point cloud");
    }
    auto normalize4 = [](const T raw[4], T out[4]) -> T {
        const T norm = std::sqrt(raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2] +
                                 raw[3] * raw[3]);
        if (!(norm > T(0))) {
            throw std::invalid_argument("per_point_l2: zero-norm quaternion");
        }
        for (int c = 0; c < 4; ++c) out[c] = raw[c] / norm;
        return norm;
    };
    T qh[4], qg[4];
    const T qh_norm = normalize4(q_hat_raw, qh);
    normalize4(q_gt_raw, qg);
    T rh[9], rg[9];
    unit_quat_to_matrix(qh, rh);
    unit_quat_to_matrix(qg, rg);

    T dr[4][9];
    if (grad_q) unit_quat_matrix_jacobian(qh, dr);
    T grad_unit_q[4] = {0, 0, 0, 0};
    if (grad_q) std::fill(grad_q, grad_q + 4, T(0));
    if (grad_t) std::fill(grad_t, grad_t + 3, T(0));

    T total = 0;
    for (int i = 0; i < n; ++i) {
        const T* p = pts + 3 * i;
        T e[3];
        for (int rrow = 0; rrow < 3; ++rrow) {
            const T ph = rh[3 * rrow] * p[0] + rh[3 * rrow + 1] * p[1] + rh[3 * rrow + 2] * p[2];
            const T pg = rg[3 * rrow] * p[0] + rg[3 * rrow + 1] * p[1] + rg[3 * rrow + 2] * p[2];
            e[rrow] = ph + t_hat[rrow] - pg - t_gt[rrow];
        }
        const T d = std::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
        total += d;
        if (d <= T(0)) continue;
        const T u[3] = {e[0] / d, e[1] / d, e[2] / d};
        if (grad_t) {
            for (int k = 0; k < 3; ++k) grad_t[k] += u[k] / T(n);
        }
        if (grad_q) {
            for (int c = 0; c < 4; ++c) {
                T acc = 0;
                for (int rrow = 0; rrow < 3; ++rrow) {
                    acc += u[rrow] * (dr[c][3 * rrow] * p[0] + dr[c][3 * rrow + 1] * p[1] +
                                      dr[c][3 * rrow + 2] * p[2]);
                }
                grad_unit_q[c] += acc / T(n);
            }
        }
    }
    if (grad_q) {
        // Chain through q = raw/|raw|: dL/draw = (I - q q^T) dL/dq / |raw|.
        T dot = 0;
        for (int c = 0; c < 4; ++c) dot += grad_unit_q[c] * qh[c];
        for (int c = 0; c < 4; ++c) grad_q[c] = (grad_unit_q[c] - dot * qh[c]) / qh_norm;
    }
    return total / T(n);
}

// --- KL divergence to N(0, I), averaged over dimensions -------------------

template <class T>
T kl_standard_normal(const T* mu, const T* logvar, int d,
                     T* grad_mu = nullptr, T* grad_logvar = nullptr) {
    if (d < 1) {
        throw std::invalid_argument("kl_standard_normal: empty code");
    }
    T acc = 0;
    for (int i = 0; i < d; ++i) {
        const T ev = std::exp(logvar[i]);
        acc += T(1) + logvar[i] - mu[i] * mu[i] - ev;
        if (grad_mu) grad_mu[i] = mu[i] / T(d);
        if (grad_logvar) grad_logvar[i] = (ev - T(1)) / (T(2) * T(d));
    }
    return -acc / (T(2) * T(d));
}

} // namespace glissando::kernels
