#pragma once

#include <array>
#include <cstring>
#include <functional>
#include <span>
#include <vector>

#include "flowrecon/common.hpp"

namespace flowrecon {

// Value, input-Jacobian and input-Laplacian of a network at one point.
struct EvalWithDerivs {
    std::vector<double> value;                      // [out]
    std::vector<std::array<double, 2>> jacobian;    // [out][axis]
    std::vector<double> laplacian;                  // [out]
};

// Adjoints of a scalar loss with respect to one point's outputs. Shapes
// mirror EvalWithDerivs; the laplacian adjoint multiplies dxx and dyy alike.
struct OutputAdjoint {
    std::vector<double> value;
    std::vector<std::array<double, 2>> jacobian;
    std::vector<double> laplacian;

    void reset(int out) {
        value.assign(out, 0.0);
        jacobian.assign(out, {0.0, 0.0});
        laplacian.assign(out, 0.0);
    }
};

// Fully connected network, tanh on hidden layers, identity output.
//
// The extended forward pass carries five components per neuron:
//   v, d/dx, d/dy, d2/dx2, d2/dy2
// propagated analytically layer by layer, so PDE residuals built from the
// Jacobian and Laplacian stay inside one differentiable computation. The
// reverse pass walks the same recurrence backwards and yields exact
// parameter gradients for any loss with known output adjoints.
class Mlp {
public:
    Mlp() = default;

    explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
        require(sizes_.size() >= 2, "invalid-net", "Mlp needs input and output layers");
        require(sizes_.front() == 2, "invalid-net", "Mlp input dimension must be 2");
        std::size_t off = 0;
        int max_w = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            const int in = sizes_[l], out = sizes_[l + 1];
            require(in >= 1 && out >= 1, "invalid-net", "Mlp layer sizes must be positive");
            layers_.push_back({in, out, off, off + static_cast<std::size_t>(in) * out});
            off += static_cast<std::size_t>(in) * out + out;
            max_w = std::max(max_w, std::max(in, out));
        }
        max_width_ = max_w;
        params_.assign(off, 0.0);
    }

    // Eight hidden layers of width 20; output width 2 for velocity, 1 for pressure.
    static std::vector<int> default_sizes(int out_dim) {
        std::vector<int> s{2};
        for (int i = 0; i < 8; ++i) s.push_back(20);
        s.push_back(out_dim);
        return s;
    }

    // Per-layer uniform init in +-sqrt(6/(fan_in+fan_out)), zero biases.
    static Mlp init_random(std::vector<int> sizes, std::uint64_t seed) {
        Mlp net(std::move(sizes));
        Rng rng(seed);
        for (const auto& L : net.layers_) {
            const double bound = std::sqrt(6.0 / (L.in + L.out));
            for (std::size_t i = 0; i < static_cast<std::size_t>(L.in) * L.out; ++i)
                net.params_[L.w_off + i] = uniform(rng, -bound, bound);
        }
        return net;
    }

    const std::vector<int>& layer_sizes() const { return sizes_; }
    int input_dim() const { return sizes_.front(); }
    int output_dim() const { return sizes_.back(); }
    std::size_t param_count() const { return params_.size(); }
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }
    int max_width() const { return max_width_; }

    // Scratch for one traced evaluation; reusable across points of one thread.
    struct Workspace {
        std::vector<double> in_buf;   // per layer: 5 components x in-width
        std::vector<double> a_buf;    // per layer: 5 components x out-width
        std::vector<std::size_t> in_off, a_off;
        std::vector<double> bar_a, bar_z;  // adjoint scratch, 5 x max width
        int out_dim = 0;

        void bind(const Mlp& net) {
            in_off.assign(net.layers_.size(), 0);
            a_off.assign(net.layers_.size(), 0);
            std::size_t i = 0, a = 0;
            for (std::size_t l = 0; l < net.layers_.size(); ++l) {
                in_off[l] = i;
                a_off[l] = a;
                i += 5u * net.layers_[l].in;
                a += 5u * net.layers_[l].out;
            }
            in_buf.assign(i, 0.0);
            a_buf.assign(a, 0.0);
            bar_a.assign(5u * net.max_width_, 0.0);
            bar_z.assign(5u * net.max_width_, 0.0);
            out_dim = net.output_dim();
        }

        double* in(std::size_t l, int comp, const Mlp& net) {
            return in_buf.data() + in_off[l] + static_cast<std::size_t>(comp) * net.layers_[l].in;
        }
        double* act(std::size_t l, int comp, const Mlp& net) {
            return a_buf.data() + a_off[l] + static_cast<std::size_t>(comp) * net.layers_[l].out;
        }
        const double* in(std::size_t l, int comp, const Mlp& net) const {
            return in_buf.data() + in_off[l] + static_cast<std::size_t>(comp) * net.layers_[l].in;
        }
        const double* act(std::size_t l, int comp, const Mlp& net) const {
            return a_buf.data() + a_off[l] + static_cast<std::size_t>(comp) * net.layers_[l].out;
        }

        // Final-layer outputs (identity activation): component views.
        const double* out_value(const Mlp& net) const { return act(net.layers_.size() - 1, 0, net); }
        const double* out_dx(const Mlp& net) const { return act(net.layers_.size() - 1, 1, net); }
        const double* out_dy(const Mlp& net) const { return act(net.layers_.size() - 1, 2, net); }
        const double* out_dxx(const Mlp& net) const { return act(net.layers_.size() - 1, 3, net); }
        const double* out_dyy(const Mlp& net) const { return act(net.layers_.size() - 1, 4, net); }
    };

    std::vector<double> forward(const Vec2& x) const {
        std::vector<double> cur{x.x, x.y}, nxt;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& L = layers_[l];
            nxt.assign(L.out, 0.0);
            matvec(L, cur.data(), nxt.data(), /*add_bias=*/true);
            if (l + 1 < layers_.size())
                for (double& a : nxt) a = std::tanh(a);
            cur.swap(nxt);
        }
        return cur;
    }

    // ORDER = 1 carries (v, dx, dy); ORDER = 2 adds (dxx, dyy). First-order
    // suffices for fields whose Laplacian never enters a loss.
    template <int ORDER>
    void forward_traced(const Vec2& x, Workspace& ws) const {
        static_assert(ORDER == 1 || ORDER == 2);
        constexpr int NC = 1 + 2 * ORDER;
        {
            double* v = ws.in(0, 0, *this);
            v[0] = x.x;
            v[1] = x.y;
            double* dx = ws.in(0, 1, *this);
            dx[0] = 1.0;
            dx[1] = 0.0;
            double* dy = ws.in(0, 2, *this);
            dy[0] = 0.0;
            dy[1] = 1.0;
            if constexpr (ORDER == 2) {
                std::memset(ws.in(0, 3, *this), 0, 2 * sizeof(double));
                std::memset(ws.in(0, 4, *this), 0, 2 * sizeof(double));
            }
        }
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& L = layers_[l];
            for (int c = 0; c < NC; ++c)
                matvec(L, ws.in(l, c, *this), ws.act(l, c, *this), /*add_bias=*/c == 0);
            if (l + 1 == layers_.size()) break;
            // tanh chain rule through value and tangents
            const double* a_v = ws.act(l, 0, *this);
            const double* a_dx = ws.act(l, 1, *this);
            const double* a_dy = ws.act(l, 2, *this);
            const double* a_dxx = ws.act(l, 3, *this);
            const double* a_dyy = ws.act(l, 4, *this);
            double* z_v = ws.in(l + 1, 0, *this);
            double* z_dx = ws.in(l + 1, 1, *this);
            double* z_dy = ws.in(l + 1, 2, *this);
            double* z_dxx = ws.in(l + 1, 3, *this);
            double* z_dyy = ws.in(l + 1, 4, *this);
            for (int i = 0; i < L.out; ++i) {
                const double t = std::tanh(a_v[i]);
                const double s1 = 1.0 - t * t;
                z_v[i] = t;
                z_dx[i] = s1 * a_dx[i];
                z_dy[i] = s1 * a_dy[i];
                if constexpr (ORDER == 2) {
                    const double s2 = -2.0 * t * s1;
                    z_dxx[i] = s2 * a_dx[i] * a_dx[i] + s1 * a_dxx[i];
                    z_dyy[i] = s2 * a_dy[i] * a_dy[i] + s1 * a_dyy[i];
                }
            }
        }
    }

    EvalWithDerivs forward_with_derivs(const Vec2& x) const {
        Workspace ws;
        ws.bind(*this);
        forward_traced<2>(x, ws);
        EvalWithDerivs e;
        const int out = output_dim();
        e.value.assign(ws.out_value(*this), ws.out_value(*this) + out);
        e.laplacian.resize(out);
        e.jacobian.resize(out);
        for (int i = 0; i < out; ++i) {
            e.jacobian[i] = {ws.out_dx(*this)[i], ws.out_dy(*this)[i]};
            e.laplacian[i] = ws.out_dxx(*this)[i] + ws.out_dyy(*this)[i];
        }
        return e;
    }

    // Reverse pass over the trace left in `ws`; accumulates into `grad`
    // (flat, same layout as params()). Only the bar_* scratch is written.
    template <int ORDER>
    void backward(Workspace& ws, const OutputAdjoint& adj, std::span<double> grad) const {
        static_assert(ORDER == 1 || ORDER == 2);
        constexpr int NC = 1 + 2 * ORDER;
        require(grad.size() == params_.size(), "shape-mismatch", "gradient buffer size mismatch");
        const int out = output_dim();
        double* bar_a = ws.bar_a.data();
        double* bar_z = ws.bar_z.data();
        const std::size_t stride = static_cast<std::size_t>(max_width_);
        // seed: output layer is linear, laplacian adjoint feeds dxx and dyy
        for (int i = 0; i < out; ++i) {
            bar_a[0 * stride + i] = adj.value[i];
            bar_a[1 * stride + i] = adj.jacobian[i][0];
            bar_a[2 * stride + i] = adj.jacobian[i][1];
            if constexpr (ORDER == 2) {
                bar_a[3 * stride + i] = adj.laplacian[i];
                bar_a[4 * stride + i] = adj.laplacian[i];
            }
        }
        for (std::size_t lp1 = layers_.size(); lp1-- > 0;) {
            const auto& L = layers_[lp1];
            // parameter gradients: Wbar += sum_c abar_c (x) in_c ; bbar += abar_v
            for (int c = 0; c < NC; ++c) {
                const double* abar = bar_a + c * stride;
                const double* in = ws.in(lp1, c, *this);
                for (int i = 0; i < L.out; ++i) {
                    const double coef = abar[i];
                    if (coef == 0.0) continue;
                    double* wrow = grad.data() + L.w_off + static_cast<std::size_t>(i) * L.in;
                    for (int j = 0; j < L.in; ++j) wrow[j] += coef * in[j];
                }
            }
            for (int i = 0; i < L.out; ++i) grad[L.b_off + i] += bar_a[i];
            if (lp1 == 0) break;
            // input adjoints through W
            for (int c = 0; c < NC; ++c) {
                const double* abar = bar_a + c * stride;
                double* zbar = bar_z + c * stride;
                std::memset(zbar, 0, static_cast<std::size_t>(L.in) * sizeof(double));
                for (int i = 0; i < L.out; ++i) {
                    const double coef = abar[i];
                    if (coef == 0.0) continue;
                    const double* wrow = params_.data() + L.w_off + static_cast<std::size_t>(i) * L.in;
                    for (int j = 0; j < L.in; ++j) zbar[j] += coef * wrow[j];
                }
            }
            // through the previous layer's tanh
            const auto& P = layers_[lp1 - 1];
            const double* a_v = ws.act(lp1 - 1, 0, *this);
            const double* a_dx = ws.act(lp1 - 1, 1, *this);
            const double* a_dy = ws.act(lp1 - 1, 2, *this);
            const double* a_dxx = ws.act(lp1 - 1, 3, *this);
            const double* a_dyy = ws.act(lp1 - 1, 4, *this);
            for (int i = 0; i < P.out; ++i) {
                const double t = std::tanh(a_v[i]);
                const double s1 = 1.0 - t * t;
                const double s2 = -2.0 * t * s1;
                const double zv = bar_z[0 * stride + i];
                const double zdx = bar_z[1 * stride + i];
                const double zdy = bar_z[2 * stride + i];
                if constexpr (ORDER == 1) {
                    bar_a[0 * stride + i] = zv * s1 + zdx * s2 * a_dx[i] + zdy * s2 * a_dy[i];
                    bar_a[1 * stride + i] = zdx * s1;
                    bar_a[2 * stride + i] = zdy * s1;
                } else {
                    const double s3 = -2.0 * s1 * (1.0 - 3.0 * t * t);
                    const double zdxx = bar_z[3 * stride + i];
                    const double zdyy = bar_z[4 * stride + i];
                    bar_a[0 * stride + i] = zv * s1 + zdx * s2 * a_dx[i] + zdy * s2 * a_dy[i] +
                                            zdxx * (s3 * a_dx[i] * a_dx[i] + s2 * a_dxx[i]) +
                                            zdyy * (s3 * a_dy[i] * a_dy[i] + s2 * a_dyy[i]);
                    bar_a[1 * stride + i] = zdx * s1 + zdxx * 2.0 * s2 * a_dx[i];
                    bar_a[2 * stride + i] = zdy * s1 + zdyy * 2.0 * s2 * a_dy[i];
                    bar_a[3 * stride + i] = zdxx * s1;
                    bar_a[4 * stride + i] = zdyy * s1;
                }
            }
        }
    }

private:
    struct Layer {
        int in = 0, out = 0;
        std::size_t w_off = 0, b_off = 0;
    };

    void matvec(const Layer& L, const double* x, double* y, bool add_bias) const {
        const double* W = params_.data() + L.w_off;
        const double* b = params_.data() + L.b_off;
        for (int i = 0; i < L.out; ++i) {
            const double* row = W + static_cast<std::size_t>(i) * L.in;
            double acc = add_bias ? b[i] : 0.0;
            for (int j = 0; j < L.in; ++j) acc += row[j] * x[j];
            y[i] = acc;
        }
    }

    std::vector<int> sizes_;
    std::vector<Layer> layers_;
    std::vector<double> params_;
    int max_width_ = 0;
};

// Scalar batch loss over extended evaluations. The callback receives the
// per-point evaluations and must fill the per-point output adjoints; it
// returns the loss value.
using BatchLossFn =
    std::function<double(std::span<const EvalWithDerivs>, std::span<OutputAdjoint>)>;

// Exact parameter gradients of `loss` over the batch, by reverse
// accumulation through the extended computation.
inline std::vector<double> loss_gradients(const Mlp& net, std::span<const Vec2> points,
                                          const BatchLossFn& loss, double* loss_value = nullptr) {
    const int out = net.output_dim();
    std::vector<EvalWithDerivs> evals(points.size());
    std::vector<Mlp::Workspace> traces(points.size());
    for (std::size_t m = 0; m < points.size(); ++m) {
        traces[m].bind(net);
        net.forward_traced<2>(points[m], traces[m]);
        EvalWithDerivs& e = evals[m];
        e.value.assign(traces[m].out_value(net), traces[m].out_value(net) + out);
        e.jacobian.resize(out);
        e.laplacian.resize(out);
        for (int i = 0; i < out; ++i) {
            e.jacobian[i] = {traces[m].out_dx(net)[i], traces[m].out_dy(net)[i]};
            e.laplacian[i] = traces[m].out_dxx(net)[i] + traces[m].out_dyy(net)[i];
        }
    }
    std::vector<OutputAdjoint> adj(points.size());
    for (auto& a : adj) a.reset(net.output_dim());
    const double value = loss(evals, adj);
    require(std::isfinite(value), "numeric-error", "loss_gradients: non-finite loss value");
    std::vector<double> grad(net.param_count(), 0.0);
    for (std::size_t m = 0; m < points.size(); ++m)
        net.backward<2>(traces[m], adj[m], grad);
    if (loss_value) *loss_value = value;
    return grad;
}

// Adaptive-moment optimizer state (one per trained object).
struct AdamState {
    double step_size = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_guard = 1e-8;
    std::vector<double> m, v;
    long t = 0;
};

inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st) {
    require(params.size() == grads.size(), "shape-mismatch", "adam_step: params/grads size mismatch");
    if (st.m.empty()) {
        st.m.assign(params.size(), 0.0);
        st.v.assign(params.size(), 0.0);
    }
    require(st.m.size() == params.size(), "shape-mismatch", "adam_step: state size mismatch");
    ++st.t;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        params[i] -= st.step_size * mhat / (std::sqrt(vhat) + st.eps_guard);
    }
}

}  // namespace flowrecon
