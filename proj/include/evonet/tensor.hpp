#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "evonet/errors.hpp"
#include "evonet/rng.hpp"

namespace evonet {

// Dense row-major tensor with an optional gradient buffer. Images are laid out
// [H][W][C] (channel fastest), conv filters [k][k][Cin][F] (filter fastest) so
// the innermost accumulation loops run over contiguous memory.
template <typename S>
struct Tensor {
    std::vector<int> shape;
    std::vector<S> data;
    std::vector<S> grad;  // same length as data once ensure_grad() ran
    bool requires_grad = false;

    Tensor() = default;
    Tensor(std::vector<int> shp, bool rg) : shape(std::move(shp)), requires_grad(rg) {
        data.assign(element_count(shape), S(0));
        if (requires_grad) grad.assign(data.size(), S(0));
    }

    static size_t element_count(const std::vector<int>& shp) {
        size_t n = 1;
        for (int e : shp) n *= static_cast<size_t>(e);
        return n;
    }

    size_t size() const { return data.size(); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), S(0));
    }

    void zero_grad() { std::fill(grad.begin(), grad.end(), S(0)); }

    std::string shape_str() const {
        std::ostringstream os;
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        return os.str();
    }
};

template <typename S>
using TensorPtr = std::shared_ptr<Tensor<S>>;

template <typename S>
TensorPtr<S> make_tensor(std::vector<int> shape, bool requires_grad = false) {
    return std::make_shared<Tensor<S>>(std::move(shape), requires_grad);
}

template <typename S>
TensorPtr<S> make_tensor(std::vector<int> shape, std::vector<S> values,
                         bool requires_grad = false) {
    auto t = make_tensor<S>(std::move(shape), requires_grad);
    if (values.size() != t->data.size())
        throw DataError("tensor init: " + std::to_string(values.size()) +
                        " values for shape " + t->shape_str());
    t->data = std::move(values);
    return t;
}

// Reverse-mode tape. Operations record one backward step each; backward()
// replays them once, in reverse recording order.
template <typename S>
class Tape {
  public:
    void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

    size_t size() const { return steps_.size(); }

    void backward(const TensorPtr<S>& loss) {
        if (loss->size() != 1)
            throw DataError("backward: loss must be scalar, got shape " + loss->shape_str());
        loss->ensure_grad();
        loss->grad[0] = S(1);
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    }

    void clear() { steps_.clear(); }

    // --- operations ------------------------------------------------------

    // Zero same-padding, stride 1. input [H,W,Cin], filters [k,k,Cin,F],
    // bias [F] -> [H,W,F]. k must be odd (the genome layer set restricts it
    // further to {3,5,7}).
    TensorPtr<S> conv2d(const TensorPtr<S>& input, const TensorPtr<S>& filters,
                        const TensorPtr<S>& bias) {
        if (input->shape.size() != 3)
            throw DataError("conv2d: input must be HxWxC, got " + input->shape_str());
        if (filters->shape.size() != 4 || filters->shape[0] != filters->shape[1])
            throw DataError("conv2d: filters must be kxkxCinxF, got " + filters->shape_str());
        const int H = input->shape[0], W = input->shape[1], Cin = input->shape[2];
        const int k = filters->shape[0], F = filters->shape[3];
        if (k % 2 == 0 || k < 1)
            throw DataError("conv2d: filter size must be odd, got " + std::to_string(k));
        if (filters->shape[2] != Cin)
            throw DataError("conv2d: input channels (" + std::to_string(Cin) +
                            ") do not match filter channels (" +
                            std::to_string(filters->shape[2]) + ")");
        if (bias->shape != std::vector<int>{F})
            throw DataError("conv2d: bias must have shape " + std::to_string(F) +
                            ", got " + bias->shape_str());
        if (H < 1 || W < 1) throw DataError("conv2d: empty input");

        auto out = make_tensor<S>({H, W, F});
        out->requires_grad =
            input->requires_grad || filters->requires_grad || bias->requires_grad;
        conv2d_forward(input->data.data(), filters->data.data(), bias->data.data(),
                       out->data.data(), H, W, Cin, k, F);
        if (out->requires_grad) {
            out->ensure_grad();
            record([input, filters, bias, out, H, W, Cin, k, F]() {
                conv2d_backward(input, filters, bias, out, H, W, Cin, k, F);
            });
        }
        return out;
    }

    // input [N], weights [N,M], bias [M] -> [M]
    TensorPtr<S> dense(const TensorPtr<S>& input, const TensorPtr<S>& weights,
                       const TensorPtr<S>& bias) {
        if (input->shape.size() != 1)
            throw DataError("dense: input must be a vector, got " + input->shape_str());
        if (weights->shape.size() != 2)
            throw DataError("dense: weights must be NxM, got " + weights->shape_str());
        const int N = input->shape[0], M = weights->shape[1];
        if (weights->shape[0] != N)
            throw DataError("dense: input length " + std::to_string(N) +
                            " does not match weight rows " +
                            std::to_string(weights->shape[0]));
        if (bias->shape != std::vector<int>{M})
            throw DataError("dense: bias must have shape " + std::to_string(M) +
                            ", got " + bias->shape_str());

        auto out = make_tensor<S>({M});
        out->requires_grad =
            input->requires_grad || weights->requires_grad || bias->requires_grad;
        S* __restrict__ o = out->data.data();
        const S* __restrict__ in = input->data.data();
        const S* __restrict__ w = weights->data.data();
        const S* __restrict__ b = bias->data.data();
        for (int j = 0; j < M; ++j) o[j] = b[j];
        for (int i = 0; i < N; ++i) {
            const S v = in[i];
            const S* __restrict__ wrow = w + static_cast<size_t>(i) * M;
            for (int j = 0; j < M; ++j) o[j] += v * wrow[j];
        }
        if (out->requires_grad) {
            out->ensure_grad();
            record([input, weights, bias, out, N, M]() {
                const S* dout = out->grad.data();
                if (bias->requires_grad) {
                    bias->ensure_grad();
                    for (int j = 0; j < M; ++j) bias->grad[j] += dout[j];
                }
                if (weights->requires_grad) {
                    weights->ensure_grad();
                    S* dw = weights->grad.data();
                    const S* in = input->data.data();
                    for (int i = 0; i < N; ++i) {
                        const S v = in[i];
                        S* dwrow = dw + static_cast<size_t>(i) * M;
                        for (int j = 0; j < M; ++j) dwrow[j] += v * dout[j];
                    }
                }
                if (input->requires_grad) {
                    input->ensure_grad();
                    const S* w = weights->data.data();
                    for (int i = 0; i < N; ++i) {
                        const S* wrow = w + static_cast<size_t>(i) * M;
                        S s = 0;
                        for (int j = 0; j < M; ++j) s += wrow[j] * dout[j];
                        input->grad[i] += s;
                    }
                }
            });
        }
        return out;
    }

    TensorPtr<S> relu(const TensorPtr<S>& x) {
        auto out = make_tensor<S>(x->shape);
        out->requires_grad = x->requires_grad;
        const size_t n = x->size();
        for (size_t i = 0; i < n; ++i) out->data[i] = x->data[i] > S(0) ? x->data[i] : S(0);
        if (out->requires_grad) {
            out->ensure_grad();
            record([x, out, n]() {
                x->ensure_grad();
                for (size_t i = 0; i < n; ++i)
                    if (x->data[i] > S(0)) x->grad[i] += out->grad[i];
            });
        }
        return out;
    }

    // Inverted dropout: at train time kept units are scaled by 1/(1-p); at
    // inference the op is the identity (same tensor, no copy).
    TensorPtr<S> dropout(const TensorPtr<S>& x, double p, bool training, Rng* rng) {
        if (p < 0.0 || p >= 1.0)
            throw DataError("dropout: p must be in [0,1), got " + std::to_string(p));
        if (!training || p == 0.0) return x;
        auto out = make_tensor<S>(x->shape);
        out->requires_grad = x->requires_grad;
        const size_t n = x->size();
        const S scale = S(1.0 / (1.0 - p));
        auto mask = std::make_shared<std::vector<S>>(n);
        for (size_t i = 0; i < n; ++i) {
            (*mask)[i] = (rng->uniform01() >= p) ? scale : S(0);
            out->data[i] = x->data[i] * (*mask)[i];
        }
        if (out->requires_grad) {
            out->ensure_grad();
            record([x, out, mask, n]() {
                x->ensure_grad();
                for (size_t i = 0; i < n; ++i) x->grad[i] += (*mask)[i] * out->grad[i];
            });
        }
        return out;
    }

    TensorPtr<S> flatten(const TensorPtr<S>& x) {
        auto out = make_tensor<S>({static_cast<int>(x->size())});
        out->requires_grad = x->requires_grad;
        out->data = x->data;
        if (out->requires_grad) {
            out->ensure_grad();
            record([x, out]() {
                x->ensure_grad();
                const size_t n = x->size();
                for (size_t i = 0; i < n; ++i) x->grad[i] += out->grad[i];
            });
        }
        return out;
    }

    TensorPtr<S> concat(const TensorPtr<S>& a, const TensorPtr<S>& b) {
        if (a->shape.size() != 1 || b->shape.size() != 1)
            throw DataError("concat: expects vectors, got " + a->shape_str() + " and " +
                            b->shape_str());
        const int na = a->shape[0], nb = b->shape[0];
        auto out = make_tensor<S>({na + nb});
        out->requires_grad = a->requires_grad || b->requires_grad;
        std::copy(a->data.begin(), a->data.end(), out->data.begin());
        std::copy(b->data.begin(), b->data.end(), out->data.begin() + na);
        if (out->requires_grad) {
            out->ensure_grad();
            record([a, b, out, na, nb]() {
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (int i = 0; i < na; ++i) a->grad[i] += out->grad[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (int i = 0; i < nb; ++i) b->grad[i] += out->grad[na + i];
                }
            });
        }
        return out;
    }

    // loss = -log softmax(logits)[true class]. Gradient w.r.t. logits is
    // softmax(logits) - one_hot.
    TensorPtr<S> softmax_cross_entropy(const TensorPtr<S>& logits,
                                       const std::vector<S>& one_hot) {
        if (logits->shape.size() != 1)
            throw DataError("softmax_cross_entropy: logits must be a vector, got " +
                            logits->shape_str());
        const int C = logits->shape[0];
        if (static_cast<int>(one_hot.size()) != C)
            throw DataError("softmax_cross_entropy: label length " +
                            std::to_string(one_hot.size()) + " vs " + std::to_string(C) +
                            " classes");
        int true_class = -1;
        for (int i = 0; i < C; ++i) {
            if (one_hot[i] == S(1)) {
                if (true_class >= 0)
                    throw DataError("softmax_cross_entropy: label is not one-hot");
                true_class = i;
            } else if (one_hot[i] != S(0)) {
                throw DataError("softmax_cross_entropy: label is not one-hot");
            }
        }
        if (true_class < 0) throw DataError("softmax_cross_entropy: label is not one-hot");
        for (int i = 0; i < C; ++i)
            if (!std::isfinite(static_cast<double>(logits->data[i])))
                throw NumericError("softmax_cross_entropy: non-finite logit");

        auto probs = softmax_values(logits->data);
        auto out = make_tensor<S>({1});
        out->requires_grad = logits->requires_grad;
        S m = logits->data[0];
        for (int i = 1; i < C; ++i) m = std::max(m, logits->data[i]);
        S z = 0;
        for (int i = 0; i < C; ++i) z += std::exp(logits->data[i] - m);
        out->data[0] = std::log(z) - (logits->data[true_class] - m);
        if (out->requires_grad) {
            out->ensure_grad();
            auto p = std::make_shared<std::vector<S>>(probs);
            auto y = std::make_shared<std::vector<S>>(one_hot);
            record([logits, out, p, y, C]() {
                logits->ensure_grad();
                const S d = out->grad[0];
                for (int i = 0; i < C; ++i)
                    logits->grad[i] += ((*p)[i] - (*y)[i]) * d;
            });
        }
        return out;
    }

    static std::vector<S> softmax_values(const std::vector<S>& logits) {
        S m = logits[0];
        for (S v : logits) m = std::max(m, v);
        std::vector<S> p(logits.size());
        S z = 0;
        for (size_t i = 0; i < logits.size(); ++i) {
            p[i] = std::exp(logits[i] - m);
            z += p[i];
        }
        for (S& v : p) v /= z;
        return p;
    }

  private:
    static void conv2d_forward(const S* __restrict__ in, const S* __restrict__ filt,
                               const S* __restrict__ bias, S* __restrict__ out, int H,
                               int W, int Cin, int k, int F) {
        const int pad = k / 2;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                S* o = out + (static_cast<size_t>(y) * W + x) * F;
                for (int f = 0; f < F; ++f) o[f] = bias[f];
                const int dy0 = std::max(0, pad - y), dy1 = std::min(k, H + pad - y);
                const int dx0 = std::max(0, pad - x), dx1 = std::min(k, W + pad - x);
                for (int dy = dy0; dy < dy1; ++dy) {
                    const int sy = y + dy - pad;
                    for (int dx = dx0; dx < dx1; ++dx) {
                        const int sx = x + dx - pad;
                        const S* px = in + (static_cast<size_t>(sy) * W + sx) * Cin;
                        const S* w = filt + (static_cast<size_t>(dy) * k + dx) * Cin * F;
                        for (int c = 0; c < Cin; ++c) {
                            const S v = px[c];
                            const S* wf = w + static_cast<size_t>(c) * F;
                            for (int f = 0; f < F; ++f) o[f] += v * wf[f];
                        }
                    }
                }
            }
        }
    }

    static void conv2d_backward(const TensorPtr<S>& input, const TensorPtr<S>& filters,
                                const TensorPtr<S>& bias, const TensorPtr<S>& out, int H,
                                int W, int Cin, int k, int F) {
        const int pad = k / 2;
        const S* dout = out->grad.data();
        const S* in = input->data.data();
        const S* filt = filters->data.data();
        if (bias->requires_grad) {
            bias->ensure_grad();
            S* db = bias->grad.data();
            for (size_t px = 0; px < static_cast<size_t>(H) * W; ++px) {
                const S* d = dout + px * F;
                for (int f = 0; f < F; ++f) db[f] += d[f];
            }
        }
        const bool need_dw = filters->requires_grad;
        const bool need_di = input->requires_grad;
        if (need_dw) filters->ensure_grad();
        if (need_di) input->ensure_grad();
        S* dw = need_dw ? filters->grad.data() : nullptr;
        S* di = need_di ? input->grad.data() : nullptr;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const S* d = dout + (static_cast<size_t>(y) * W + x) * F;
                const int dy0 = std::max(0, pad - y), dy1 = std::min(k, H + pad - y);
                const int dx0 = std::max(0, pad - x), dx1 = std::min(k, W + pad - x);
                for (int dy = dy0; dy < dy1; ++dy) {
                    const int sy = y + dy - pad;
                    for (int dx = dx0; dx < dx1; ++dx) {
                        const int sx = x + dx - pad;
                        const size_t poff = (static_cast<size_t>(sy) * W + sx) * Cin;
                        const size_t woff = (static_cast<size_t>(dy) * k + dx) *
                                            static_cast<size_t>(Cin) * F;
                        for (int c = 0; c < Cin; ++c) {
                            if (need_dw) {
                                const S v = in[poff + c];
                                S* dwf = dw + woff + static_cast<size_t>(c) * F;
                                for (int f = 0; f < F; ++f) dwf[f] += v * d[f];
                            }
                            if (need_di) {
                                const S* wf = filt + woff + static_cast<size_t>(c) * F;
                                S s = 0;
                                for (int f = 0; f < F; ++f) s += wf[f] * d[f];
                                di[poff + c] += s;
                            }
                        }
                    }
                }
            }
        }
    }

    std::vector<std::function<void()>> steps_;
};

}  // namespace evonet
