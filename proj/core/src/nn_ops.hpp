#pragma once

// Internal layer primitives shared by the network forward/backward passes and
// the fixed feature net. All backward functions accumulate (+=) into their
// gradient outputs; callers zero them first.

#include <cmath>

#include "sensemap/tensor.hpp"

namespace sensemap::ops {

inline int conv_out(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// x [Cin, H, W], w [Cout, Cin, k, k], b [Cout] -> y [Cout, Ho, Wo]
inline void conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                   int pad, Tensor& y) {
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int cout = w.dim(0), k = w.dim(2);
    const int ho = conv_out(h, k, stride, pad), wo = conv_out(wd, k, stride, pad);
    y = Tensor({cout, ho, wo});
    const double* xp = x.data();
    const double* wp = w.data();
    double* yp = y.data();
    for (int o = 0; o < cout; ++o) {
        const double bias = b[static_cast<std::size_t>(o)];
        for (int r = 0; r < ho; ++r) {
            for (int c = 0; c < wo; ++c) {
                double acc = bias;
                const int r0 = r * stride - pad, c0 = c * stride - pad;
                for (int i = 0; i < cin; ++i) {
                    const double* xch = xp + static_cast<std::size_t>(i) * h * wd;
                    const double* wch = wp + (static_cast<std::size_t>(o) * cin + i) * k * k;
                    for (int dr = 0; dr < k; ++dr) {
                        const int rr = r0 + dr;
                        if (rr < 0 || rr >= h) continue;
                        const double* xrow = xch + static_cast<std::size_t>(rr) * wd;
                        const double* wrow = wch + static_cast<std::size_t>(dr) * k;
                        for (int dc = 0; dc < k; ++dc) {
                            const int cc = c0 + dc;
                            if (cc < 0 || cc >= wd) continue;
                            acc += xrow[cc] * wrow[dc];
                        }
                    }
                }
                yp[(static_cast<std::size_t>(o) * ho + r) * wo + c] = acc;
            }
        }
    }
}

inline void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                            int stride, int pad, Tensor& gx, Tensor& gw, Tensor& gb) {
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int cout = w.dim(0), k = w.dim(2);
    const int ho = gy.dim(1), wo = gy.dim(2);
    const double* xp = x.data();
    const double* wp = w.data();
    const double* gyp = gy.data();
    double* gxp = gx.data();
    double* gwp = gw.data();
    double* gbp = gb.data();
    for (int o = 0; o < cout; ++o) {
        for (int r = 0; r < ho; ++r) {
            for (int c = 0; c < wo; ++c) {
                const double g = gyp[(static_cast<std::size_t>(o) * ho + r) * wo + c];
                if (g == 0.0) continue;
                gbp[o] += g;
                const int r0 = r * stride - pad, c0 = c * stride - pad;
                for (int i = 0; i < cin; ++i) {
                    const double* xch = xp + static_cast<std::size_t>(i) * h * wd;
                    double* gxch = gxp + static_cast<std::size_t>(i) * h * wd;
                    const double* wch = wp + (static_cast<std::size_t>(o) * cin + i) * k * k;
                    double* gwch = gwp + (static_cast<std::size_t>(o) * cin + i) * k * k;
                    for (int dr = 0; dr < k; ++dr) {
                        const int rr = r0 + dr;
                        if (rr < 0 || rr >= h) continue;
                        for (int dc = 0; dc < k; ++dc) {
                            const int cc = c0 + dc;
                            if (cc < 0 || cc >= wd) continue;
                            const std::size_t xi = static_cast<std::size_t>(rr) * wd + cc;
                            gwch[static_cast<std::size_t>(dr) * k + dc] += g * xch[xi];
                            gxch[xi] += g * wch[static_cast<std::size_t>(dr) * k + dc];
                        }
                    }
                }
            }
        }
    }
}

// Kernel-2 stride-2 transposed conv (exact 2x upsample).
// x [Cin, H, W], w [Cin, Cout, 2, 2], b [Cout] -> y [Cout, 2H, 2W]
inline void deconv2x2(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int cout = w.dim(1);
    y = Tensor({cout, 2 * h, 2 * wd});
    const double* xp = x.data();
    const double* wp = w.data();
    double* yp = y.data();
    for (int o = 0; o < cout; ++o) {
        double* ych = yp + static_cast<std::size_t>(o) * 4 * h * wd;
        const double bias = b[static_cast<std::size_t>(o)];
        for (std::size_t i = 0; i < static_cast<std::size_t>(4) * h * wd; ++i) ych[i] = bias;
    }
    for (int i = 0; i < cin; ++i) {
        const double* xch = xp + static_cast<std::size_t>(i) * h * wd;
        for (int o = 0; o < cout; ++o) {
            const double* wk = wp + (static_cast<std::size_t>(i) * cout + o) * 4;
            double* ych = yp + static_cast<std::size_t>(o) * 4 * h * wd;
            for (int r = 0; r < h; ++r) {
                for (int c = 0; c < wd; ++c) {
                    const double v = xch[static_cast<std::size_t>(r) * wd + c];
                    double* base = ych + (static_cast<std::size_t>(2 * r) * 2 * wd) + 2 * c;
                    base[0] += v * wk[0];
                    base[1] += v * wk[1];
                    base[2 * wd] += v * wk[2];
                    base[2 * wd + 1] += v * wk[3];
                }
            }
        }
    }
}

inline void deconv2x2_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                               Tensor& gx, Tensor& gw, Tensor& gb) {
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int cout = w.dim(1);
    const double* xp = x.data();
    const double* wp = w.data();
    const double* gyp = gy.data();
    double* gxp = gx.data();
    double* gwp = gw.data();
    double* gbp = gb.data();
    for (int o = 0; o < cout; ++o) {
        const double* gych = gyp + static_cast<std::size_t>(o) * 4 * h * wd;
        double acc = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(4) * h * wd; ++i) acc += gych[i];
        gbp[o] += acc;
    }
    for (int i = 0; i < cin; ++i) {
        const double* xch = xp + static_cast<std::size_t>(i) * h * wd;
        double* gxch = gxp + static_cast<std::size_t>(i) * h * wd;
        for (int o = 0; o < cout; ++o) {
            const double* wk = wp + (static_cast<std::size_t>(i) * cout + o) * 4;
            double* gwk = gwp + (static_cast<std::size_t>(i) * cout + o) * 4;
            const double* gych = gyp + static_cast<std::size_t>(o) * 4 * h * wd;
            for (int r = 0; r < h; ++r) {
                for (int c = 0; c < wd; ++c) {
                    const std::size_t xi = static_cast<std::size_t>(r) * wd + c;
                    const double* gbase =
                        gych + (static_cast<std::size_t>(2 * r) * 2 * wd) + 2 * c;
                    const double g0 = gbase[0], g1 = gbase[1];
                    const double g2 = gbase[2 * wd], g3 = gbase[2 * wd + 1];
                    gwk[0] += g0 * xch[xi];
                    gwk[1] += g1 * xch[xi];
                    gwk[2] += g2 * xch[xi];
                    gwk[3] += g3 * xch[xi];
                    gxch[xi] += g0 * wk[0] + g1 * wk[1] + g2 * wk[2] + g3 * wk[3];
                }
            }
        }
    }
}

// Kernel-2 stride-2 conv (exact 2x downsample).
// x [Cin, H, W], w [Cout, Cin, 2, 2], b [Cout] -> y [Cout, H/2, W/2]
inline void conv2x2_down(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
    conv2d(x, w, b, 2, 0, y);
}

inline void conv2x2_down_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                                  Tensor& gx, Tensor& gw, Tensor& gb) {
    conv2d_backward(x, w, gy, 2, 0, gx, gw, gb);
}

// x [T, In], w [Out, In], b [Out] -> y [T, Out]
inline void linear(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
    const int t = x.dim(0), in = x.dim(1), out = w.dim(0);
    y = Tensor({t, out});
    const double* xp = x.data();
    const double* wp = w.data();
    double* yp = y.data();
    for (int r = 0; r < t; ++r) {
        const double* xr = xp + static_cast<std::size_t>(r) * in;
        double* yr = yp + static_cast<std::size_t>(r) * out;
        for (int o = 0; o < out; ++o) {
            const double* wr = wp + static_cast<std::size_t>(o) * in;
            double acc = b[static_cast<std::size_t>(o)];
            for (int i = 0; i < in; ++i) acc += xr[i] * wr[i];
            yr[o] = acc;
        }
    }
}

inline void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                            Tensor& gx, Tensor& gw, Tensor& gb) {
    const int t = x.dim(0), in = x.dim(1), out = w.dim(0);
    const double* xp = x.data();
    const double* wp = w.data();
    const double* gyp = gy.data();
    double* gxp = gx.data();
    double* gwp = gw.data();
    double* gbp = gb.data();
    for (int r = 0; r < t; ++r) {
        const double* xr = xp + static_cast<std::size_t>(r) * in;
        const double* gyr = gyp + static_cast<std::size_t>(r) * out;
        double* gxr = gxp + static_cast<std::size_t>(r) * in;
        for (int o = 0; o < out; ++o) {
            const double g = gyr[o];
            if (g == 0.0) continue;
            gbp[o] += g;
            const double* wr = wp + static_cast<std::size_t>(o) * in;
            double* gwr = gwp + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) {
                gwr[i] += g * xr[i];
                gxr[i] += g * wr[i];
            }
        }
    }
}

inline void relu(const Tensor& z, Tensor& a) {
    a = z;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] < 0.0) a[i] = 0.0;
}

// ga += gy * relu'(z)
inline void relu_backward(const Tensor& z, const Tensor& gy, Tensor& gz) {
    for (std::size_t i = 0; i < z.size(); ++i)
        if (z[i] > 0.0) gz[i] += gy[i];
}

// tanh-form GELU (analytic everywhere, unlike the erf form in <cmath>).
inline double gelu(double x) {
    const double k = 0.7978845608028653558799; // sqrt(2/pi)
    const double u = k * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_grad(double x) {
    const double k = 0.7978845608028653558799;
    const double u = k * (x + 0.044715 * x * x * x);
    const double t = std::tanh(u);
    const double sech2 = 1.0 - t * t;
    return 0.5 * (1.0 + t) + 0.5 * x * sech2 * k * (1.0 + 3.0 * 0.044715 * x * x);
}

inline void gelu(const Tensor& z, Tensor& a) {
    a = Tensor(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) a[i] = gelu(z[i]);
}

inline void gelu_backward(const Tensor& z, const Tensor& gy, Tensor& gz) {
    for (std::size_t i = 0; i < z.size(); ++i) gz[i] += gy[i] * gelu_grad(z[i]);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kLayerNormEps = 1e-5;

// x [T, D]; saves per-token mean and 1/sqrt(var + eps).
inline void layernorm(const Tensor& x, const Tensor& g, const Tensor& b, Tensor& y,
                      Tensor& mean, Tensor& rstd) {
    const int t = x.dim(0), d = x.dim(1);
    y = Tensor({t, d});
    mean = Tensor({t});
    rstd = Tensor({t});
    for (int r = 0; r < t; ++r) {
        const double* xr = x.data() + static_cast<std::size_t>(r) * d;
        double* yr = y.data() + static_cast<std::size_t>(r) * d;
        double mu = 0.0;
        for (int i = 0; i < d; ++i) mu += xr[i];
        mu /= d;
        double var = 0.0;
        for (int i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
        var /= d;
        const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
        mean[static_cast<std::size_t>(r)] = mu;
        rstd[static_cast<std::size_t>(r)] = rs;
        for (int i = 0; i < d; ++i)
            yr[i] = (xr[i] - mu) * rs * g[static_cast<std::size_t>(i)] +
                    b[static_cast<std::size_t>(i)];
    }
}

inline void layernorm_backward(const Tensor& x, const Tensor& g, const Tensor& mean,
                               const Tensor& rstd, const Tensor& gy, Tensor& gx,
                               Tensor& gg, Tensor& gb) {
    const int t = x.dim(0), d = x.dim(1);
    for (int r = 0; r < t; ++r) {
        const double* xr = x.data() + static_cast<std::size_t>(r) * d;
        const double* gyr = gy.data() + static_cast<std::size_t>(r) * d;
        double* gxr = gx.data() + static_cast<std::size_t>(r) * d;
        const double mu = mean[static_cast<std::size_t>(r)];
        const double rs = rstd[static_cast<std::size_t>(r)];
        double sum_gyg = 0.0, sum_gyg_xhat = 0.0;
        for (int i = 0; i < d; ++i) {
            const double xhat = (xr[i] - mu) * rs;
            const double gyg = gyr[i] * g[static_cast<std::size_t>(i)];
            sum_gyg += gyg;
            sum_gyg_xhat += gyg * xhat;
            gg[static_cast<std::size_t>(i)] += gyr[i] * xhat;
            gb[static_cast<std::size_t>(i)] += gyr[i];
        }
        for (int i = 0; i < d; ++i) {
            const double xhat = (xr[i] - mu) * rs;
            const double gyg = gyr[i] * g[static_cast<std::size_t>(i)];
            gxr[i] += rs * (gyg - (sum_gyg + xhat * sum_gyg_xhat) / d);
        }
    }
}

} // namespace sensemap::ops
