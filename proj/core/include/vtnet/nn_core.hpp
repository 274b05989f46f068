#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vtnet/rng.hpp"

namespace vtnet::nn {

// Row-major dense array of doubles. Shape is explicit; data.size() equals the
// product of the dims at all times.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    static Tensor zeros(std::vector<std::size_t> shape);

    std::size_t numel() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape[i]; }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
};

// A learnable array paired with its gradient accumulator. grad always mirrors
// value's shape.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string name, std::vector<std::size_t> shape);
    void zero_grad();
};

// y = x W^T + b over a batch: x (N,in) -> y (N,out). W stored (out,in).
class Linear {
  public:
    struct Ctx {
        Tensor x;
    };

    Linear() = default;
    Linear(std::size_t in, std::size_t out, std::string name);
    void init(Rng& rng);  // W ~ U(-a,a), a = 1/sqrt(in); b = 0

    Tensor forward(const Tensor& x, Ctx& ctx) const;
    // Accumulates into w/b grads, returns dx.
    Tensor backward(const Tensor& dy, const Ctx& ctx);

    std::size_t in_features() const { return in_; }
    std::size_t out_features() const { return out_; }
    Param& weight() { return w_; }
    Param& bias() { return b_; }
    const Param& weight() const { return w_; }
    const Param& bias() const { return b_; }
    std::vector<Param*> params() { return {&w_, &b_}; }

  private:
    std::size_t in_ = 0, out_ = 0;
    Param w_, b_;
};

// Valid (no padding) cross-correlation, stride 1: x (N,C,H,W) ->
// y (N,OC,H-k+1,W-k+1). Kernel stored (OC,C,k,k).
class Conv2d {
  public:
    struct Ctx {
        Tensor x;
    };

    Conv2d() = default;
    Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::string name);
    void init(Rng& rng);  // U(-a,a), a = 1/sqrt(in_ch*k*k); bias 0

    Tensor forward(const Tensor& x, Ctx& ctx) const;
    Tensor backward(const Tensor& dy, const Ctx& ctx);

    std::size_t in_channels() const { return in_ch_; }
    std::size_t out_channels() const { return out_ch_; }
    std::size_t kernel() const { return k_; }
    Param& weight() { return w_; }
    Param& bias() { return b_; }
    const Param& weight() const { return w_; }
    const Param& bias() const { return b_; }
    std::vector<Param*> params() { return {&w_, &b_}; }

  private:
    std::size_t in_ch_ = 0, out_ch_ = 0, k_ = 0;
    Param w_, b_;
};

struct ReluCtx {
    std::vector<std::uint8_t> positive;
};
Tensor relu(const Tensor& x, ReluCtx& ctx);
Tensor relu_backward(const Tensor& dy, const ReluCtx& ctx);

// 2x2 window, stride 2, floor semantics on odd dims. Gradient routes to the
// argmax; ties go to the first element in row-major window order.
struct PoolCtx {
    std::vector<std::size_t> in_shape;
    std::vector<std::size_t> argmax;
};
Tensor maxpool2(const Tensor& x, PoolCtx& ctx);
Tensor maxpool2_backward(const Tensor& dy, const PoolCtx& ctx);

// Single-layer GRU unrolled over time. x (N,T,I), mask (N*T row-major, 1 =
// real sample) -> final hidden state (N,H).
//   z = sigmoid(W_z x + U_z h + b_z)
//   r = sigmoid(W_r x + U_r h + b_r)
//   hcand = tanh(W_h x + U_h (r.h) + b_h)
//   h_t = (1-z).h_prev + z.hcand
// Masked steps pass h_prev through unchanged and receive no gradient.
class Gru {
  public:
    struct Ctx;

    Gru() = default;
    Gru(std::size_t input, std::size_t hidden, std::string name);
    void init(Rng& rng);

    Tensor forward(const Tensor& x, std::span<const std::uint8_t> mask, Ctx& ctx) const;
    // dh: gradient at the final hidden state (N,H). Returns dx (N,T,I).
    Tensor backward(const Tensor& dh, const Ctx& ctx);

    // One cell step for small-scale verification: x (N,I), h (N,H) -> (N,H).
    Tensor step(const Tensor& x, const Tensor& h) const;

    std::size_t input_size() const { return input_; }
    std::size_t hidden_size() const { return hidden_; }
    std::vector<Param*> params();

    Param& wz() { return wz_; }
    Param& wr() { return wr_; }
    Param& wh() { return wh_; }
    Param& uz() { return uz_; }
    Param& ur() { return ur_; }
    Param& uh() { return uh_; }
    Param& bz() { return bz_; }
    Param& br() { return br_; }
    Param& bh() { return bh_; }

    struct Ctx {
        Tensor x;
        std::vector<std::uint8_t> mask;
        std::vector<Tensor> h;      // h[t] after step t, plus h[-1] stored first
        std::vector<Tensor> z, r, hcand;
    };

  private:
    std::size_t input_ = 0, hidden_ = 0;
    Param wz_, wr_, wh_, uz_, ur_, uh_, bz_, br_, bh_;
};

// Row-wise log-softmax with max-subtraction: logits (N,C) -> logprobs (N,C).
Tensor log_softmax(const Tensor& logits);

// Mean negative log-likelihood over the batch. If dlogits is non-null it is
// filled with the gradient w.r.t. the raw logits: (softmax - onehot)/N.
double nll_loss(const Tensor& logprobs, std::span<const int> targets, Tensor* dlogits);

// Convenience for the single-sample contract: loss plus gradient w.r.t. the
// logits vector.
double log_softmax_nll(const Tensor& logits, int target, Tensor* dlogits);

// Bias-corrected Adam over an externally owned parameter set. step() consumes
// the grads currently stored in each Param; lr is supplied per call so the
// schedule lives with the trainer.
class Adam {
  public:
    explicit Adam(std::vector<Param*> params, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    void step(double lr);
    void zero_grad();
    std::size_t t() const { return t_; }

  private:
    std::vector<Param*> params_;
    std::vector<std::vector<double>> m_, v_;
    double beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
    std::string worst_param;
    std::size_t worst_index = 0;

    bool pass(double tol = 1e-4) const { return max_rel_err < tol; }
};

// Central differences with step h on every coordinate of every param. loss()
// must recompute the scalar objective from the params' current values; the
// caller fills each Param::grad analytically before the call. Relative error
// per coordinate is |analytic-numeric| / max(1, |analytic|, |numeric|).
// Throws NonFinite if loss() or a stored gradient is not finite.
GradCheckResult grad_check(std::span<Param* const> params, const std::function<double()>& loss,
                           double h = 1e-5);

}  // namespace vtnet::nn
