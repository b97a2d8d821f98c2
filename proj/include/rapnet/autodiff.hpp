#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <utility>

#include "rapnet/ops.hpp"

namespace rapnet {

// Adjoint of conv2d: accumulates into gx, gw and (optionally) gb.
template <typename T>
void conv2d_backward(const Tensor<T>& g, const Tensor<T>& x, const Tensor<T>& w,
                     Tensor<T>& gx, Tensor<T>& gw, Tensor<T>* gb, const ConvSpec& spec) {
    const int cg = spec.in_channels / spec.groups;
    const int pg = spec.out_channels / spec.groups;
    if (spec.stride == 1) {
        // row-contiguous form of the loop below (gradients are accumulation
        // order independent up to rounding; nothing depends on this ordering)
        for (int ni = 0; ni < g.n; ++ni)
            for (int p = 0; p < g.c; ++p) {
                const int grp = p / pg;
                if (gb) {
                    T acc = T(0);
                    for (int oy = 0; oy < g.h; ++oy) {
                        const T* grow = g.row(ni, p, oy);
                        for (int ox = 0; ox < g.w; ++ox) acc += grow[ox];
                    }
                    gb->data[static_cast<std::size_t>(p)] += acc;
                }
                for (int ci = 0; ci < cg; ++ci) {
                    const int cin = grp * cg + ci;
                    for (int ky = 0; ky < spec.kh; ++ky)
                        for (int kx = 0; kx < spec.kw; ++kx) {
                            const T wv = w.at(p, ci, ky, kx);
                            T wacc = T(0);
                            const int ox0 = std::max(0, spec.pad - kx);
                            const int ox1 = std::min(g.w, x.w + spec.pad - kx);
                            for (int oy = 0; oy < g.h; ++oy) {
                                const int iy = oy + ky - spec.pad;
                                if (iy < 0 || iy >= x.h) continue;
                                const T* grow = g.row(ni, p, oy);
                                const T* xs = x.row(ni, cin, iy) + kx - spec.pad;
                                T* gxs = gx.row(ni, cin, iy) + kx - spec.pad;
                                for (int ox = ox0; ox < ox1; ++ox) {
                                    gxs[ox] += grow[ox] * wv;
                                    wacc += grow[ox] * xs[ox];
                                }
                            }
                            gw.at(p, ci, ky, kx) += wacc;
                        }
                }
            }
        return;
    }
    for (int ni = 0; ni < g.n; ++ni)
        for (int p = 0; p < g.c; ++p) {
            const int grp = p / pg;
            for (int oy = 0; oy < g.h; ++oy)
                for (int ox = 0; ox < g.w; ++ox) {
                    const T gv = g.at(ni, p, oy, ox);
                    if (gb) gb->data[static_cast<std::size_t>(p)] += gv;
                    for (int ci = 0; ci < cg; ++ci) {
                        const int cin = grp * cg + ci;
                        for (int ky = 0; ky < spec.kh; ++ky) {
                            const int iy = oy * spec.stride + ky - spec.pad;
                            if (iy < 0 || iy >= x.h) continue;
                            for (int kx = 0; kx < spec.kw; ++kx) {
                                const int ix = ox * spec.stride + kx - spec.pad;
                                if (ix < 0 || ix >= x.w) continue;
                                gx.at(ni, cin, iy, ix) += gv * w.at(p, ci, ky, kx);
                                gw.at(p, ci, ky, kx) += gv * x.at(ni, cin, iy, ix);
                            }
                        }
                    }
                }
        }
}

// Reverse-mode tape over the tensor op set. Node values are immutable once
// recorded; creation order is the topological order used by backward().
// Gradients accumulate across backward() calls until reset_grads().
template <typename T>
class Tape {
public:
    using NodeId = int;

    NodeId leaf(Tensor<T> v, bool requires_grad = false) {
        return push(std::move(v), {}, nullptr, requires_grad);
    }

    const Tensor<T>& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    // smallest |input| seen by any kinked op (relu/prelu/abs) on this tape;
    // finite-difference checks use it to reject poorly conditioned draws
    double kink_clearance() const { return kink_clearance_; }

    // During a backward sweep this returns the sweep-local buffer, so the
    // chain rule never reads gradients accumulated by earlier sweeps.
    Tensor<T>& grad(NodeId id) {
        auto& slot = sweep_active_ ? sweep_[static_cast<std::size_t>(id)]
                                   : grads_[static_cast<std::size_t>(id)];
        if (!slot) slot = std::make_unique<Tensor<T>>(Tensor<T>::zeros_like(value(id)));
        return *slot;
    }

    bool has_grad(NodeId id) const { return grads_[static_cast<std::size_t>(id)] != nullptr; }

    void reset_grads() {
        for (auto& g : grads_) g.reset();
    }

    std::size_t node_count() const { return nodes_.size(); }

    // ---- ops ----

    NodeId conv2d(NodeId x, NodeId weight, NodeId bias /* -1 for none */, ConvSpec spec) {
        const Tensor<T>* b = bias >= 0 ? &value(bias) : nullptr;
        Tensor<T> out = rapnet::conv2d(value(x), value(weight), b, spec);
        std::vector<NodeId> parents = {x, weight};
        if (bias >= 0) parents.push_back(bias);
        auto bw = [this, x, weight, bias, spec](const Tensor<T>& g) {
            conv2d_backward(g, value(x), value(weight), grad(x), grad(weight),
                            bias >= 0 ? &grad(bias) : nullptr, spec);
        };
        return push(std::move(out), std::move(parents), bw);
    }

    NodeId avg_pool_same(NodeId x, int k) {
        Tensor<T> out = rapnet::avg_pool_same(value(x), k);
        auto bw = [this, x, k](const Tensor<T>& g) {
            Tensor<T>& gx = grad(x);
            const int r = k / 2;
            // adjoint: scatter each output grad over its window with the
            // output pixel's in-bounds divisor
            for (int ni = 0; ni < g.n; ++ni)
                for (int ci = 0; ci < g.c; ++ci)
                    for (int y = 0; y < g.h; ++y) {
                        const int y0 = std::max(0, y - r), y1 = std::min(g.h - 1, y + r);
                        for (int xx = 0; xx < g.w; ++xx) {
                            const int x0 = std::max(0, xx - r), x1 = std::min(g.w - 1, xx + r);
                            const T gv = g.at(ni, ci, y, xx) /
                                         static_cast<T>((y1 - y0 + 1) * (x1 - x0 + 1));
                            for (int iy = y0; iy <= y1; ++iy)
                                for (int ix = x0; ix <= x1; ++ix) gx.at(ni, ci, iy, ix) += gv;
                        }
                    }
        };
        return push(std::move(out), {x}, bw);
    }

    NodeId global_avg_pool(NodeId x) {
        Tensor<T> out = rapnet::global_avg_pool(value(x));
        auto bw = [this, x](const Tensor<T>& g) {
            Tensor<T>& gx = grad(x);
            const T inv = T(1) / static_cast<T>(gx.plane());
            for (int ni = 0; ni < gx.n; ++ni)
                for (int ci = 0; ci < gx.c; ++ci) {
                    const T gv = g.at(ni, ci, 0, 0) * inv;
                    for (int y = 0; y < gx.h; ++y)
                        for (int xx = 0; xx < gx.w; ++xx) gx.at(ni, ci, y, xx) += gv;
                }
        };
        return push(std::move(out), {x}, bw);
    }

    NodeId sigmoid(NodeId x) {
        Tensor<T> out = rapnet::sigmoid(value(x));
        NodeId id = push(Tensor<T>(out), {x}, nullptr);
        nodes_[static_cast<std::size_t>(id)].backward = [this, x, id](const Tensor<T>& g) {
            Tensor<T>& gx = grad(x);
            const Tensor<T>& s = value(id);
            for (std::size_t i = 0; i < gx.data.size(); ++i)
                gx.data[i] += g.data[i] * s.data[i] * (T(1) - s.data[i]);
        };
        return id;
    }

    NodeId relu(NodeId x) {
        track_kink_clearance(value(x));
        Tensor<T> out = rapnet::relu(value(x));
        auto bw = [this, x](const Tensor<T>& g) {
            Tensor<T>& gx = grad(x);
            const Tensor<T>& xv = value(x);
            for (std::size_t i = 0; i < gx.data.size(); ++i)
                if (xv.data[i] >= T(0)) gx.data[i] += g.data[i];
        };
        return push(std::move(out), {x}, bw);
    }

    // slope is a 1x1x1x1 learnable node.
    NodeId prelu(NodeId x, NodeId slope) {
        track_kink_clearance(value(x));
        const T s = value(slope).data[0];
        Tensor<T> out = rapnet::prelu(value(x), s);
        auto bw = [this, x, slope, s](const Tensor<T>& g) {
            Tensor<T>& gx = grad(x);
            Tensor<T>& gs = grad(slope);
            const Tensor<T>& xv = value(x);
            T sacc = T(0);
            for (std::size_t i = 0; i < gx.data.size(); ++i) {
                if (xv.data[i] >= T(0)) {
                    gx.data[i] += g.data[i];
                } else {
                    gx.data[i] += g.data[i] * s;
                    sacc += g.data[i] * xv.data[i];
                }
            }
            gs.data[0] += sacc;
        };
        return push(std::move(out), {x, slope}, bw);
    }

    NodeId abs(NodeId x) {
        track_kink_clearance(value(x));
        Tensor<T> out = value(x);
        for (auto& v : out.data) v = v >= T(0) ? v : -v;
        auto bw = [this, x](const Tensor<T>& g) {
            Tensor<T>& gx = grad(x);
            const Tensor<T>& xv = value(x);
            for (std::size_t i = 0; i < gx.data.size(); ++i)
                gx.data[i] += xv.data[i] >= T(0) ? g.data[i] : -g.data[i];
        };
        return push(std::move(out), {x}, bw);
    }

    NodeId upsample_bilinear(NodeId x, int ratio) {
        Tensor<T> out = rapnet::upsample_bilinear(value(x), ratio);
        auto bw = [this, x, ratio](const Tensor<T>& g) {
            Tensor<T>& gx = grad(x);
            for (int ni = 0; ni < g.n; ++ni)
                for (int ci = 0; ci < g.c; ++ci)
                    for (int y = 0; y < g.h; ++y) {
                        double sy = std::clamp((y + 0.5) / ratio - 0.5, 0.0, gx.h - 1.0);
                        const int y0 = static_cast<int>(std::floor(sy));
                        const int y1 = std::min(y0 + 1, gx.h - 1);
                        const T fy = static_cast<T>(sy - y0);
                        for (int xx = 0; xx < g.w; ++xx) {
                            double sx = std::clamp((xx + 0.5) / ratio - 0.5, 0.0, gx.w - 1.0);
                            const int x0 = static_cast<int>(std::floor(sx));
                            const int x1 = std::min(x0 + 1, gx.w - 1);
                            const T fx = static_cast<T>(sx - x0);
                            const T gv = g.at(ni, ci, y, xx);
                            gx.at(ni, ci, y0, x0) += gv * (T(1) - fy) * (T(1) - fx);
                            gx.at(ni, ci, y0, x1) += gv * (T(1) - fy) * fx;
                            gx.at(ni, ci, y1, x0) += gv * fy * (T(1) - fx);
                            gx.at(ni, ci, y1, x1) += gv * fy * fx;
                        }
                    }
        };
        return push(std::move(out), {x}, bw);
    }

    NodeId concat(NodeId a, NodeId b) {
        Tensor<T> out = concat_channels(value(a), value(b));
        auto bw = [this, a, b](const Tensor<T>& g) {
            Tensor<T>& ga = grad(a);
            Tensor<T>& gb = grad(b);
            for (int ni = 0; ni < g.n; ++ni)
                for (int ci = 0; ci < g.c; ++ci)
                    for (int y = 0; y < g.h; ++y)
                        for (int xx = 0; xx < g.w; ++xx) {
                            if (ci < ga.c)
                                ga.at(ni, ci, y, xx) += g.at(ni, ci, y, xx);
                            else
                                gb.at(ni, ci - ga.c, y, xx) += g.at(ni, ci, y, xx);
                        }
        };
        return push(std::move(out), {a, b}, bw);
    }

    NodeId hadamard(NodeId a, NodeId b) {
        Tensor<T> out = rapnet::hadamard(value(a), value(b));
        auto bw = [this, a, b](const Tensor<T>& g) {
            Tensor<T>& ga = grad(a);
            Tensor<T>& gb = grad(b);
            const Tensor<T>& av = value(a);
            const Tensor<T>& bv = value(b);
            for (std::size_t i = 0; i < g.data.size(); ++i) {
                ga.data[i] += g.data[i] * bv.data[i];
                gb.data[i] += g.data[i] * av.data[i];
            }
        };
        return push(std::move(out), {a, b}, bw);
    }

    NodeId add(NodeId a, NodeId b) {
        Tensor<T> out = rapnet::add(value(a), value(b));
        auto bw = [this, a, b](const Tensor<T>& g) {
            Tensor<T>& ga = grad(a);
            Tensor<T>& gb = grad(b);
            for (std::size_t i = 0; i < g.data.size(); ++i) {
                ga.data[i] += g.data[i];
                gb.data[i] += g.data[i];
            }
        };
        return push(std::move(out), {a, b}, bw);
    }

    NodeId broadcast_hw(NodeId v, int h, int w) {
        Tensor<T> out = rapnet::broadcast_hw(value(v), h, w);
        auto bw = [this, v](const Tensor<T>& g) {
            Tensor<T>& gv = grad(v);
            for (int ni = 0; ni < g.n; ++ni)
                for (int ci = 0; ci < g.c; ++ci) {
                    T acc = T(0);
                    for (int y = 0; y < g.h; ++y)
                        for (int xx = 0; xx < g.w; ++xx) acc += g.at(ni, ci, y, xx);
                    gv.at(ni, ci, 0, 0) += acc;
                }
        };
        return push(std::move(out), {v}, bw);
    }

    // x: (n, c, h, w), mask: (n, 1, h, w) -> x * mask broadcast over channels.
    NodeId mul_bcast_c(NodeId x, NodeId mask) {
        const Tensor<T>& xv = value(x);
        const Tensor<T>& mv = value(mask);
        if (mv.c != 1 || mv.n != xv.n || mv.h != xv.h || mv.w != xv.w)
            throw ShapeError("mul_bcast_c: mask " + mv.shape_str() + " incompatible with " + xv.shape_str());
        Tensor<T> out = xv;
        for (int ni = 0; ni < xv.n; ++ni)
            for (int ci = 0; ci < xv.c; ++ci)
                for (int y = 0; y < xv.h; ++y)
                    for (int xx = 0; xx < xv.w; ++xx)
                        out.at(ni, ci, y, xx) *= mv.at(ni, 0, y, xx);
        auto bw = [this, x, mask](const Tensor<T>& g) {
            Tensor<T>& gx = grad(x);
            Tensor<T>& gm = grad(mask);
            const Tensor<T>& xv2 = value(x);
            const Tensor<T>& mv2 = value(mask);
            for (int ni = 0; ni < g.n; ++ni)
                for (int y = 0; y < g.h; ++y)
                    for (int xx = 0; xx < g.w; ++xx) {
                        T macc = T(0);
                        for (int ci = 0; ci < g.c; ++ci) {
                            gx.at(ni, ci, y, xx) += g.at(ni, ci, y, xx) * mv2.at(ni, 0, y, xx);
                            macc += g.at(ni, ci, y, xx) * xv2.at(ni, ci, y, xx);
                        }
                        gm.at(ni, 0, y, xx) += macc;
                    }
        };
        return push(std::move(out), {x, mask}, bw);
    }

    // per-pixel mean over channels -> (n, 1, h, w)
    NodeId channel_mean(NodeId x) {
        const Tensor<T>& xv = value(x);
        Tensor<T> out(xv.n, 1, xv.h, xv.w);
        for (int ni = 0; ni < xv.n; ++ni)
            for (int y = 0; y < xv.h; ++y)
                for (int xx = 0; xx < xv.w; ++xx) {
                    T acc = T(0);
                    for (int ci = 0; ci < xv.c; ++ci) acc += xv.at(ni, ci, y, xx);
                    out.at(ni, 0, y, xx) = acc / static_cast<T>(xv.c);
                }
        auto bw = [this, x](const Tensor<T>& g) {
            Tensor<T>& gx = grad(x);
            const T inv = T(1) / static_cast<T>(gx.c);
            for (int ni = 0; ni < g.n; ++ni)
                for (int y = 0; y < g.h; ++y)
                    for (int xx = 0; xx < g.w; ++xx)
                        for (int ci = 0; ci < gx.c; ++ci)
                            gx.at(ni, ci, y, xx) += g.at(ni, 0, y, xx) * inv;
        };
        return push(std::move(out), {x}, bw);
    }

    // per-pixel max over channels -> (n, 1, h, w); grad routed to the first
    // channel attaining the max.
    NodeId channel_max(NodeId x) {
        const Tensor<T>& xv = value(x);
        Tensor<T> out(xv.n, 1, xv.h, xv.w);
        for (int ni = 0; ni < xv.n; ++ni)
            for (int y = 0; y < xv.h; ++y)
                for (int xx = 0; xx < xv.w; ++xx) {
                    T best = xv.at(ni, 0, y, xx);
                    for (int ci = 1; ci < xv.c; ++ci) best = std::max(best, xv.at(ni, ci, y, xx));
                    out.at(ni, 0, y, xx) = best;
                }
        auto bw = [this, x](const Tensor<T>& g) {
            Tensor<T>& gx = grad(x);
            const Tensor<T>& xv2 = value(x);
            for (int ni = 0; ni < g.n; ++ni)
                for (int y = 0; y < g.h; ++y)
                    for (int xx = 0; xx < g.w; ++xx) {
                        int arg = 0;
                        T best = xv2.at(ni, 0, y, xx);
                        for (int ci = 1; ci < xv2.c; ++ci)
                            if (xv2.at(ni, ci, y, xx) > best) { best = xv2.at(ni, ci, y, xx); arg = ci; }
                        gx.at(ni, arg, y, xx) += g.at(ni, 0, y, xx);
                    }
        };
        return push(std::move(out), {x}, bw);
    }

    // Per-pixel adaptive 3x3 convolution (zero pad 1, stride 1):
    //   y[p, oy, ox] = sum_{c,i,j} A[c,i,j,oy,ox] * K[p,c,i,j] * xpad[c, oy+i-1, ox+j-1]
    // attn is the (n, 9C, h, w) field, kernel is (P, C, 3, 3).
    NodeId adaptive_conv(NodeId x, NodeId attn, NodeId kernel) {
        const Tensor<T>& xv = value(x);
        const Tensor<T>& av = value(attn);
        const Tensor<T>& kv = value(kernel);
        if (av.c != 9 * xv.c)
            throw ShapeError("adaptive_conv: attention channels " + std::to_string(av.c) +
                             " != 9 * input channels " + std::to_string(xv.c));
        if (kv.c != xv.c || kv.h != 3 || kv.w != 3)
            throw ShapeError("adaptive_conv: kernel shape " + kv.shape_str() +
                             " does not match input channels " + std::to_string(xv.c));
        const int P = kv.n;
        Tensor<T> out(xv.n, P, xv.h, xv.w);
        parallel_for(static_cast<std::int64_t>(xv.n) * P, [&](std::int64_t idx) {
            const int ni = static_cast<int>(idx / P);
            const int p = static_cast<int>(idx % P);
            const int W = xv.w;
            // row-contiguous accumulation in the same (ci, i, j) per-element
            // order as the naive triple loop, so results are bit-identical
            for (int oy = 0; oy < xv.h; ++oy) {
                T* orow = out.row(ni, p, oy);
                std::fill_n(orow, W, T(0));
                for (int ci = 0; ci < xv.c; ++ci)
                    for (int i = 0; i < 3; ++i) {
                        const int iy = oy + i - 1;
                        if (iy < 0 || iy >= xv.h) continue;
                        const T* xrow = xv.row(ni, ci, iy);
                        for (int j = 0; j < 3; ++j) {
                            const T k = kv.at(p, ci, i, j);
                            const T* arow = av.row(ni, 9 * ci + 3 * i + j, oy);
                            const T* xs = xrow + j - 1;
                            const int ox0 = std::max(0, 1 - j);
                            const int ox1 = std::min(W, W + 1 - j);
                            for (int ox = ox0; ox < ox1; ++ox)
                                orow[ox] += arow[ox] * k * xs[ox];
                        }
                    }
            }
        });
        auto bw = [this, x, attn, kernel](const Tensor<T>& g) {
            const Tensor<T>& xv2 = value(x);
            const Tensor<T>& av2 = value(attn);
            const Tensor<T>& kv2 = value(kernel);
            Tensor<T>& gx = grad(x);
            Tensor<T>& ga = grad(attn);
            Tensor<T>& gk = grad(kernel);
            const int P = kv2.n;
            const int W = xv2.w;
            for (int ni = 0; ni < xv2.n; ++ni)
                for (int ci = 0; ci < xv2.c; ++ci)
                    for (int i = 0; i < 3; ++i)
                        for (int j = 0; j < 3; ++j) {
                            const int ox0 = std::max(0, 1 - j);
                            const int ox1 = std::min(W, W + 1 - j);
                            for (int p = 0; p < P; ++p) {
                                const T k = kv2.at(p, ci, i, j);
                                T gk_acc = T(0);
                                for (int oy = 0; oy < xv2.h; ++oy) {
                                    const int iy = oy + i - 1;
                                    if (iy < 0 || iy >= xv2.h) continue;
                                    const T* grow = g.row(ni, p, oy);
                                    const T* arow = av2.row(ni, 9 * ci + 3 * i + j, oy);
                                    const T* xs = xv2.row(ni, ci, iy) + j - 1;
                                    T* gxs = gx.row(ni, ci, iy) + j - 1;
                                    T* garow = ga.row(ni, 9 * ci + 3 * i + j, oy);
                                    for (int ox = ox0; ox < ox1; ++ox) {
                                        const T gva = grow[ox] * arow[ox];
                                        gxs[ox] += gva * k;
                                        gk_acc += gva * xs[ox];
                                        garow[ox] += grow[ox] * k * xs[ox];
                                    }
                                }
                                gk.at(p, ci, i, j) += gk_acc;
                            }
                        }
        };
        return push(std::move(out), {x, attn, kernel}, bw);
    }

    // scalar (1x1x1x1) mean squared error against a constant target node
    NodeId mse(NodeId pred, NodeId target) {
        const Tensor<T>& pv = value(pred);
        const Tensor<T>& tv = value(target);
        check_same_shape(pv, tv, "mse");
        Tensor<T> out(1, 1, 1, 1);
        double acc = 0.0;
        for (std::size_t i = 0; i < pv.data.size(); ++i) {
            const double d = static_cast<double>(pv.data[i]) - static_cast<double>(tv.data[i]);
            acc += d * d;
        }
        out.data[0] = static_cast<T>(acc / static_cast<double>(pv.size()));
        auto bw = [this, pred, target](const Tensor<T>& g) {
            Tensor<T>& gp = grad(pred);
            const Tensor<T>& pv2 = value(pred);
            const Tensor<T>& tv2 = value(target);
            const T scale = g.data[0] * T(2) / static_cast<T>(pv2.size());
            for (std::size_t i = 0; i < gp.data.size(); ++i)
                gp.data[i] += scale * (pv2.data[i] - tv2.data[i]);
        };
        return push(std::move(out), {pred, target}, bw);
    }

    NodeId sum(NodeId x) {
        const Tensor<T>& xv = value(x);
        Tensor<T> out(1, 1, 1, 1);
        T acc = T(0);
        for (T v : xv.data) acc += v;
        out.data[0] = acc;
        auto bw = [this, x](const Tensor<T>& g) {
            Tensor<T>& gx = grad(x);
            for (auto& v : gx.data) v += g.data[0];
        };
        return push(std::move(out), {x}, bw);
    }

    // Reverse sweep from a scalar loss. Seeds d(loss)/d(loss) = 1 and
    // accumulates into per-node grad buffers; calling twice doubles them.
    void backward(NodeId loss) {
        const Tensor<T>& lv = value(loss);
        if (lv.size() != 1)
            throw ShapeError("backward: loss must be scalar, got " + lv.shape_str());
        std::vector<char> needed(nodes_.size(), 0);
        needed[static_cast<std::size_t>(loss)] = 1;
        for (int i = loss; i >= 0; --i) {
            if (!needed[static_cast<std::size_t>(i)]) continue;
            for (NodeId p : nodes_[static_cast<std::size_t>(i)].parents)
                needed[static_cast<std::size_t>(p)] = 1;
        }
        sweep_.clear();
        sweep_.resize(nodes_.size());
        sweep_active_ = true;
        grad(loss).data[0] = T(1);
        for (int i = loss; i >= 0; --i) {
            auto& node = nodes_[static_cast<std::size_t>(i)];
            if (!needed[static_cast<std::size_t>(i)] || !node.backward) continue;
            const auto* gout = sweep_[static_cast<std::size_t>(i)].get();
            if (!gout) continue;  // no downstream path contributed
            node.backward(*gout);
        }
        sweep_active_ = false;
        // fold the sweep into the persistent accumulators
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (!sweep_[i]) continue;
            Tensor<T>& acc = grad(static_cast<NodeId>(i));
            for (std::size_t k = 0; k < acc.data.size(); ++k) acc.data[k] += sweep_[i]->data[k];
        }
        sweep_.clear();
    }

private:
    struct Node {
        Tensor<T> value;
        std::vector<NodeId> parents;
        std::function<void(const Tensor<T>&)> backward;
        bool requires_grad = false;
    };

    NodeId push(Tensor<T> v, std::vector<NodeId> parents,
                std::function<void(const Tensor<T>&)> bw, bool requires_grad = false) {
        nodes_.push_back(Node{std::move(v), std::move(parents), std::move(bw), requires_grad});
        grads_.emplace_back(nullptr);
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    void track_kink_clearance(const Tensor<T>& x) {
        for (const T v : x.data) {
            const double a = std::abs(static_cast<double>(v));
            if (a < kink_clearance_) kink_clearance_ = a;
        }
    }

    std::vector<Node> nodes_;
    std::vector<std::unique_ptr<Tensor<T>>> grads_;
    double kink_clearance_ = std::numeric_limits<double>::infinity();

    // sweep redirection state (see backward())
    bool sweep_active_ = false;
    std::vector<std::unique_ptr<Tensor<T>>> sweep_;
};

}  // namespace rapnet
