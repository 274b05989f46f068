#include "vtnet/nn_core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

#include "vtnet/errors.hpp"

namespace vtnet::nn {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

void require(bool cond, const std::string& what) {
    if (!cond) throw ShapeMismatch(what);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// C (n x p) += A (n x m) * B (m x p)
void matmul_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
                std::size_t p) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a + i * m;
        double* crow = c + i * p;
        for (std::size_t k = 0; k < m; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = b + k * p;
            for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
}

// C (n x p) += A (n x m) * B^T (p x m)
void matmul_bt_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
                   std::size_t p) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a + i * m;
        double* crow = c + i * p;
        for (std::size_t j = 0; j < p; ++j) {
            const double* brow = b + j * m;
            double acc = 0.0;
            for (std::size_t k = 0; k < m; ++k) acc += arow[k] * brow[k];
            crow[j] += acc;
        }
    }
}

// C (n x p) += A^T (m x n) * B (m x p)
void matmul_at_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
                   std::size_t p) {
    for (std::size_t k = 0; k < m; ++k) {
        const double* arow = a + k * n;
        const double* brow = b + k * p;
        for (std::size_t i = 0; i < n; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + i * p;
            for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    Tensor t;
    t.data.assign(shape_numel(shape), 0.0);
    t.shape = std::move(shape);
    return t;
}

Param::Param(std::string name, std::vector<std::size_t> shape) : name(std::move(name)) {
    value = Tensor::zeros(shape);
    grad = Tensor::zeros(std::move(shape));
}

void Param::zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }

Linear::Linear(std::size_t in, std::size_t out, std::string name)
    : in_(in),
      out_(out),
      w_(name + ".w", {out, in}),
      b_(name + ".b", {out}) {}

void Linear::init(Rng& rng) {
    const double a = 1.0 / std::sqrt(static_cast<double>(in_));
    for (double& v : w_.value.data) v = rng.uniform(-a, a);
    std::fill(b_.value.data.begin(), b_.value.data.end(), 0.0);
}

Tensor Linear::forward(const Tensor& x, Ctx& ctx) const {
    require(x.shape.size() == 2 && x.shape[1] == in_, "linear: input shape");
    const std::size_t n = x.shape[0];
    Tensor y = Tensor::zeros({n, out_});
    for (std::size_t i = 0; i < n; ++i) {
        double* yrow = y.data.data() + i * out_;
        for (std::size_t o = 0; o < out_; ++o) yrow[o] = b_.value[o];
    }
    matmul_bt_acc(x.data.data(), w_.value.data.data(), y.data.data(), n, in_, out_);
    ctx.x = x;
    return y;
}

Tensor Linear::backward(const Tensor& dy, const Ctx& ctx) {
    require(dy.shape.size() == 2 && dy.shape[1] == out_, "linear: grad shape");
    const std::size_t n = dy.shape[0];
    require(ctx.x.shape.size() == 2 && ctx.x.shape[0] == n, "linear: ctx mismatch");
    // dW (out,in) += dy^T (n,out) * x (n,in)
    matmul_at_acc(dy.data.data(), ctx.x.data.data(), w_.grad.data.data(), out_, n, in_);
    for (std::size_t i = 0; i < n; ++i) {
        const double* dyrow = dy.data.data() + i * out_;
        for (std::size_t o = 0; o < out_; ++o) b_.grad[o] += dyrow[o];
    }
    Tensor dx = Tensor::zeros({n, in_});
    matmul_acc(dy.data.data(), w_.value.data.data(), dx.data.data(), n, out_, in_);
    return dx;
}

Conv2d::Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::string name)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      k_(kernel),
      w_(name + ".w", {out_ch, in_ch, kernel, kernel}),
      b_(name + ".b", {out_ch}) {}

void Conv2d::init(Rng& rng) {
    const double a = 1.0 / std::sqrt(static_cast<double>(in_ch_ * k_ * k_));
    for (double& v : w_.value.data) v = rng.uniform(-a, a);
    std::fill(b_.value.data.begin(), b_.value.data.end(), 0.0);
}

Tensor Conv2d::forward(const Tensor& x, Ctx& ctx) const {
    require(x.shape.size() == 4 && x.shape[1] == in_ch_, "conv2d: input shape");
    const std::size_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
    require(h >= k_ && w >= k_, "conv2d: input smaller than kernel");
    const std::size_t oh = h - k_ + 1, ow = w - k_ + 1;
    Tensor y = Tensor::zeros({n, out_ch_, oh, ow});
    for (std::size_t in = 0; in < n; ++in) {
        for (std::size_t oc = 0; oc < out_ch_; ++oc) {
            double* yplane = y.data.data() + ((in * out_ch_ + oc) * oh) * ow;
            const double bias = b_.value[oc];
            for (std::size_t i = 0; i < oh * ow; ++i) yplane[i] = bias;
            for (std::size_t c = 0; c < in_ch_; ++c) {
                const double* xplane = x.data.data() + ((in * in_ch_ + c) * h) * w;
                const double* kplane = w_.value.data.data() + ((oc * in_ch_ + c) * k_) * k_;
                for (std::size_t p = 0; p < k_; ++p) {
                    for (std::size_t q = 0; q < k_; ++q) {
                        const double kv = kplane[p * k_ + q];
                        if (kv == 0.0) continue;
                        for (std::size_t i = 0; i < oh; ++i) {
                            const double* xrow = xplane + (i + p) * w + q;
                            double* yrow = yplane + i * ow;
                            for (std::size_t j = 0; j < ow; ++j) yrow[j] += kv * xrow[j];
                        }
                    }
                }
            }
        }
    }
    ctx.x = x;
    return y;
}

Tensor Conv2d::backward(const Tensor& dy, const Ctx& ctx) {
    const Tensor& x = ctx.x;
    require(dy.shape.size() == 4 && dy.shape[1] == out_ch_, "conv2d: grad shape");
    const std::size_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
    const std::size_t oh = dy.shape[2], ow = dy.shape[3];
    require(oh == h - k_ + 1 && ow == w - k_ + 1, "conv2d: grad dims");
    Tensor dx = Tensor::zeros(x.shape);
    for (std::size_t in = 0; in < n; ++in) {
        for (std::size_t oc = 0; oc < out_ch_; ++oc) {
            const double* dyplane = dy.data.data() + ((in * out_ch_ + oc) * oh) * ow;
            double dbacc = 0.0;
            for (std::size_t i = 0; i < oh * ow; ++i) dbacc += dyplane[i];
            b_.grad[oc] += dbacc;
            for (std::size_t c = 0; c < in_ch_; ++c) {
                const double* xplane = x.data.data() + ((in * in_ch_ + c) * h) * w;
                double* dxplane = dx.data.data() + ((in * in_ch_ + c) * h) * w;
                const double* kplane = w_.value.data.data() + ((oc * in_ch_ + c) * k_) * k_;
                double* dkplane = w_.grad.data.data() + ((oc * in_ch_ + c) * k_) * k_;
                for (std::size_t p = 0; p < k_; ++p) {
                    for (std::size_t q = 0; q < k_; ++q) {
                        const double kv = kplane[p * k_ + q];
                        double dkacc = 0.0;
                        for (std::size_t i = 0; i < oh; ++i) {
                            const double* xrow = xplane + (i + p) * w + q;
                            double* dxrow = dxplane + (i + p) * w + q;
                            const double* dyrow = dyplane + i * ow;
                            for (std::size_t j = 0; j < ow; ++j) {
                                dkacc += dyrow[j] * xrow[j];
                                dxrow[j] += dyrow[j] * kv;
                            }
                        }
                        dkplane[p * k_ + q] += dkacc;
                    }
                }
            }
        }
    }
    return dx;
}

Tensor relu(const Tensor& x, ReluCtx& ctx) {
    Tensor y = x;
    ctx.positive.assign(x.numel(), 0);
    for (std::size_t i = 0; i < y.numel(); ++i) {
        if (y[i] > 0.0) {
            ctx.positive[i] = 1;
        } else {
            y[i] = 0.0;
        }
    }
    return y;
}

Tensor relu_backward(const Tensor& dy, const ReluCtx& ctx) {
    require(dy.numel() == ctx.positive.size(), "relu: grad size");
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.numel(); ++i) {
        if (!ctx.positive[i]) dx[i] = 0.0;
    }
    return dx;
}

Tensor maxpool2(const Tensor& x, PoolCtx& ctx) {
    require(x.shape.size() == 4, "maxpool2: rank");
    const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    require(h >= 2 && w >= 2, "maxpool2: input too small");
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor y = Tensor::zeros({n, c, oh, ow});
    ctx.in_shape = x.shape;
    ctx.argmax.assign(y.numel(), 0);
    std::size_t oidx = 0;
    for (std::size_t nc = 0; nc < n * c; ++nc) {
        const double* plane = x.data.data() + nc * h * w;
        const std::size_t base = nc * h * w;
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                std::size_t best = (2 * i) * w + 2 * j;
                double bv = plane[best];
                const std::size_t cands[3] = {(2 * i) * w + 2 * j + 1, (2 * i + 1) * w + 2 * j,
                                              (2 * i + 1) * w + 2 * j + 1};
                for (std::size_t k = 0; k < 3; ++k) {
                    if (plane[cands[k]] > bv) {
                        bv = plane[cands[k]];
                        best = cands[k];
                    }
                }
                y[oidx] = bv;
                ctx.argmax[oidx] = base + best;
                ++oidx;
            }
        }
    }
    return y;
}

Tensor maxpool2_backward(const Tensor& dy, const PoolCtx& ctx) {
    require(dy.numel() == ctx.argmax.size(), "maxpool2: grad size");
    Tensor dx = Tensor::zeros(ctx.in_shape);
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[ctx.argmax[i]] += dy[i];
    return dx;
}

Gru::Gru(std::size_t input, std::size_t hidden, std::string name)
    : input_(input),
      hidden_(hidden),
      wz_(name + ".wz", {hidden, input}),
      wr_(name + ".wr", {hidden, input}),
      wh_(name + ".wh", {hidden, input}),
      uz_(name + ".uz", {hidden, hidden}),
      ur_(name + ".ur", {hidden, hidden}),
      uh_(name + ".uh", {hidden, hidden}),
      bz_(name + ".bz", {hidden}),
      br_(name + ".br", {hidden}),
      bh_(name + ".bh", {hidden}) {}

void Gru::init(Rng& rng) {
    const double aw = 1.0 / std::sqrt(static_cast<double>(input_));
    const double au = 1.0 / std::sqrt(static_cast<double>(hidden_));
    for (Param* p : {&wz_, &wr_, &wh_}) {
        for (double& v : p->value.data) v = rng.uniform(-aw, aw);
    }
    for (Param* p : {&uz_, &ur_, &uh_}) {
        for (double& v : p->value.data) v = rng.uniform(-au, au);
    }
    for (Param* p : {&bz_, &br_, &bh_}) {
        std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
    }
}

std::vector<Param*> Gru::params() {
    return {&wz_, &wr_, &wh_, &uz_, &ur_, &uh_, &bz_, &br_, &bh_};
}

namespace {

// out (N,H) = bias + x (N,I) W^T (H,I) + h (N,H) U^T (H,H)
Tensor gru_preact(const Tensor& x, std::size_t xoff, std::size_t stride, const Tensor& h,
                  const Param& w, const Param& u, const Param& b, std::size_t n, std::size_t in,
                  std::size_t hid) {
    Tensor a = Tensor::zeros({n, hid});
    for (std::size_t i = 0; i < n; ++i) {
        double* arow = a.data.data() + i * hid;
        const double* xrow = x.data.data() + xoff + i * stride;
        for (std::size_t o = 0; o < hid; ++o) {
            const double* wrow = w.value.data.data() + o * in;
            double acc = b.value[o];
            for (std::size_t k = 0; k < in; ++k) acc += wrow[k] * xrow[k];
            arow[o] = acc;
        }
    }
    matmul_bt_acc(h.data.data(), u.value.data.data(), a.data.data(), n, hid, hid);
    return a;
}

}  // namespace

Tensor Gru::forward(const Tensor& x, std::span<const std::uint8_t> mask, Ctx& ctx) const {
    require(x.shape.size() == 3 && x.shape[2] == input_, "gru: input shape");
    const std::size_t n = x.shape[0], t_len = x.shape[1];
    require(mask.size() == n * t_len, "gru: mask size");
    ctx.x = x;
    ctx.mask.assign(mask.begin(), mask.end());
    ctx.h.clear();
    ctx.z.clear();
    ctx.r.clear();
    ctx.hcand.clear();
    ctx.h.reserve(t_len + 1);
    ctx.z.reserve(t_len);
    ctx.r.reserve(t_len);
    ctx.hcand.reserve(t_len);
    Tensor h = Tensor::zeros({n, hidden_});
    ctx.h.push_back(h);
    const std::size_t stride = t_len * input_;
    for (std::size_t t = 0; t < t_len; ++t) {
        const std::size_t xoff = t * input_;
        Tensor az = gru_preact(x, xoff, stride, h, wz_, uz_, bz_, n, input_, hidden_);
        Tensor ar = gru_preact(x, xoff, stride, h, wr_, ur_, br_, n, input_, hidden_);
        Tensor z = az, r = ar;
        for (double& v : z.data) v = sigmoid(v);
        for (double& v : r.data) v = sigmoid(v);
        // rh = r .* h_prev feeds the candidate preactivation
        Tensor rh = r;
        for (std::size_t i = 0; i < rh.numel(); ++i) rh[i] *= h[i];
        Tensor ah = gru_preact(x, xoff, stride, rh, wh_, uh_, bh_, n, input_, hidden_);
        Tensor hc = ah;
        for (double& v : hc.data) v = std::tanh(v);
        Tensor hnext = Tensor::zeros({n, hidden_});
        for (std::size_t i = 0; i < n; ++i) {
            const bool live = mask[i * t_len + t] != 0;
            double* hn = hnext.data.data() + i * hidden_;
            const double* hp = h.data.data() + i * hidden_;
            if (!live) {
                std::copy(hp, hp + hidden_, hn);
                continue;
            }
            const double* zr = z.data.data() + i * hidden_;
            const double* hcr = hc.data.data() + i * hidden_;
            for (std::size_t k = 0; k < hidden_; ++k) {
                hn[k] = (1.0 - zr[k]) * hp[k] + zr[k] * hcr[k];
            }
        }
        ctx.z.push_back(std::move(z));
        ctx.r.push_back(std::move(r));
        ctx.hcand.push_back(std::move(hc));
        h = hnext;
        ctx.h.push_back(h);
    }
    return h;
}

Tensor Gru::backward(const Tensor& dh_final, const Ctx& ctx) {
    const std::size_t n = ctx.x.shape[0], t_len = ctx.x.shape[1];
    require(dh_final.shape.size() == 2 && dh_final.shape[0] == n &&
                dh_final.shape[1] == hidden_,
            "gru: grad shape");
    Tensor dx = Tensor::zeros(ctx.x.shape);
    Tensor dh = dh_final;
    const std::size_t stride = t_len * input_;
    for (std::size_t t = t_len; t-- > 0;) {
        const Tensor& hprev = ctx.h[t];
        const Tensor& z = ctx.z[t];
        const Tensor& r = ctx.r[t];
        const Tensor& hc = ctx.hcand[t];
        Tensor daz = Tensor::zeros({n, hidden_});
        Tensor dar = Tensor::zeros({n, hidden_});
        Tensor dah = Tensor::zeros({n, hidden_});
        for (std::size_t i = 0; i < n; ++i) {
            if (ctx.mask[i * t_len + t] == 0) continue;
            const std::size_t off = i * hidden_;
            for (std::size_t k = 0; k < hidden_; ++k) {
                const double zv = z[off + k], hcv = hc[off + k], hpv = hprev[off + k];
                const double g = dh[off + k];
                daz[off + k] = g * (hcv - hpv) * zv * (1.0 - zv);
                dah[off + k] = g * zv * (1.0 - hcv * hcv);
            }
        }
        // drh = dah U_h; dr = drh .* h_prev
        Tensor drh = Tensor::zeros({n, hidden_});
        matmul_acc(dah.data.data(), uh_.value.data.data(), drh.data.data(), n, hidden_, hidden_);
        for (std::size_t i = 0; i < n; ++i) {
            if (ctx.mask[i * t_len + t] == 0) continue;
            const std::size_t off = i * hidden_;
            for (std::size_t k = 0; k < hidden_; ++k) {
                const double rv = r[off + k];
                dar[off + k] = drh[off + k] * hprev[off + k] * rv * (1.0 - rv);
            }
        }
        // Parameter gradients. x_t rows for this step live at stride offsets;
        // gather them once.
        Tensor xt = Tensor::zeros({n, input_});
        for (std::size_t i = 0; i < n; ++i) {
            const double* src = ctx.x.data.data() + i * stride + t * input_;
            std::copy(src, src + input_, xt.data.data() + i * input_);
        }
        Tensor rh = r;
        for (std::size_t i = 0; i < rh.numel(); ++i) rh[i] *= hprev[i];
        matmul_at_acc(daz.data.data(), xt.data.data(), wz_.grad.data.data(), hidden_, n, input_);
        matmul_at_acc(dar.data.data(), xt.data.data(), wr_.grad.data.data(), hidden_, n, input_);
        matmul_at_acc(dah.data.data(), xt.data.data(), wh_.grad.data.data(), hidden_, n, input_);
        matmul_at_acc(daz.data.data(), hprev.data.data(), uz_.grad.data.data(), hidden_, n,
                      hidden_);
        matmul_at_acc(dar.data.data(), hprev.data.data(), ur_.grad.data.data(), hidden_, n,
                      hidden_);
        matmul_at_acc(dah.data.data(), rh.data.data(), uh_.grad.data.data(), hidden_, n, hidden_);
        for (std::size_t i = 0; i < n * hidden_; ++i) {
            const std::size_t k = i % hidden_;
            bz_.grad[k] += daz[i];
            br_.grad[k] += dar[i];
            bh_.grad[k] += dah[i];
        }
        // dx_t = daz W_z + dar W_r + dah W_h
        Tensor dxt = Tensor::zeros({n, input_});
        matmul_acc(daz.data.data(), wz_.value.data.data(), dxt.data.data(), n, hidden_, input_);
        matmul_acc(dar.data.data(), wr_.value.data.data(), dxt.data.data(), n, hidden_, input_);
        matmul_acc(dah.data.data(), wh_.value.data.data(), dxt.data.data(), n, hidden_, input_);
        for (std::size_t i = 0; i < n; ++i) {
            double* dst = dx.data.data() + i * stride + t * input_;
            const double* src = dxt.data.data() + i * input_;
            std::copy(src, src + input_, dst);
        }
        // dh_prev = dh.(1-z) + daz U_z + dar U_r + (dah U_h).r, masked rows
        // pass dh through untouched.
        Tensor dhprev = Tensor::zeros({n, hidden_});
        matmul_acc(daz.data.data(), uz_.value.data.data(), dhprev.data.data(), n, hidden_,
                   hidden_);
        matmul_acc(dar.data.data(), ur_.value.data.data(), dhprev.data.data(), n, hidden_,
                   hidden_);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t off = i * hidden_;
            if (ctx.mask[i * t_len + t] == 0) {
                std::copy(dh.data.data() + off, dh.data.data() + off + hidden_,
                          dhprev.data.data() + off);
                continue;
            }
            for (std::size_t k = 0; k < hidden_; ++k) {
                dhprev[off + k] +=
                    dh[off + k] * (1.0 - z[off + k]) + drh[off + k] * r[off + k];
            }
        }
        dh = std::move(dhprev);
    }
    return dx;
}

Tensor Gru::step(const Tensor& x, const Tensor& h) const {
    require(x.shape.size() == 2 && x.shape[1] == input_, "gru step: input shape");
    require(h.shape.size() == 2 && h.shape[1] == hidden_ && h.shape[0] == x.shape[0],
            "gru step: hidden shape");
    const std::size_t n = x.shape[0];
    Tensor az = gru_preact(x, 0, input_, h, wz_, uz_, bz_, n, input_, hidden_);
    Tensor ar = gru_preact(x, 0, input_, h, wr_, ur_, br_, n, input_, hidden_);
    for (double& v : az.data) v = sigmoid(v);
    for (double& v : ar.data) v = sigmoid(v);
    Tensor rh = ar;
    for (std::size_t i = 0; i < rh.numel(); ++i) rh[i] *= h[i];
    Tensor ah = gru_preact(x, 0, input_, rh, wh_, uh_, bh_, n, input_, hidden_);
    for (double& v : ah.data) v = std::tanh(v);
    Tensor out = Tensor::zeros({n, hidden_});
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] = (1.0 - az[i]) * h[i] + az[i] * ah[i];
    }
    return out;
}

Tensor log_softmax(const Tensor& logits) {
    require(logits.shape.size() == 2, "log_softmax: rank");
    const std::size_t n = logits.shape[0], c = logits.shape[1];
    require(c >= 1, "log_softmax: empty rows");
    Tensor out = logits;
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data.data() + i * c;
        double m = row[0];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - m);
        const double lse = m + std::log(s);
        for (std::size_t j = 0; j < c; ++j) row[j] -= lse;
    }
    return out;
}

double nll_loss(const Tensor& logprobs, std::span<const int> targets, Tensor* dlogits) {
    require(logprobs.shape.size() == 2, "nll: rank");
    const std::size_t n = logprobs.shape[0], c = logprobs.shape[1];
    require(targets.size() == n, "nll: target count");
    for (int t : targets) {
        if (t < 0 || static_cast<std::size_t>(t) >= c) {
            throw BadTarget("class index out of range: " + std::to_string(t));
        }
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        loss -= logprobs[i * c + static_cast<std::size_t>(targets[i])];
    }
    loss /= static_cast<double>(n);
    if (dlogits) {
        *dlogits = Tensor::zeros({n, c});
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                double g = std::exp(logprobs[i * c + j]);
                if (j == static_cast<std::size_t>(targets[i])) g -= 1.0;
                (*dlogits)[i * c + j] = g * inv;
            }
        }
    }
    return loss;
}

double log_softmax_nll(const Tensor& logits, int target, Tensor* dlogits) {
    require(logits.shape.size() == 1, "log_softmax_nll: expects a vector");
    Tensor row = logits;
    row.shape = {1, logits.numel()};
    Tensor lp = log_softmax(row);
    std::array<int, 1> t{target};
    Tensor dl;
    const double loss = nll_loss(lp, t, dlogits ? &dl : nullptr);
    if (dlogits) {
        dl.shape = {logits.numel()};
        *dlogits = std::move(dl);
    }
    return loss;
}

Adam::Adam(std::vector<Param*> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Param* p : params_) {
        m_.emplace_back(p->value.numel(), 0.0);
        v_.emplace_back(p->value.numel(), 0.0);
    }
}

void Adam::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Param& p = *params_[pi];
        std::vector<double>& m = m_[pi];
        std::vector<double>& v = v_[pi];
        for (std::size_t i = 0; i < p.value.numel(); ++i) {
            const double g = p.grad[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void Adam::zero_grad() {
    for (Param* p : params_) p->zero_grad();
}

GradCheckResult grad_check(std::span<Param* const> params, const std::function<double()>& loss,
                           double h) {
    GradCheckResult res;
    for (Param* p : params) {
        for (double g : p->grad.data) {
            if (!std::isfinite(g)) throw NonFinite("gradient of " + p->name);
        }
    }
    for (Param* p : params) {
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            const double saved = p->value[i];
            p->value[i] = saved + h;
            const double lp = loss();
            p->value[i] = saved - h;
            const double lm = loss();
            p->value[i] = saved;
            if (!std::isfinite(lp) || !std::isfinite(lm)) throw NonFinite("loss evaluation");
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = p->grad[i];
            const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
            const double rel = std::fabs(analytic - numeric) / denom;
            ++res.coords_checked;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_param = p->name;
                res.worst_index = i;
            }
        }
    }
    return res;
}

}  // namespace vtnet::nn
