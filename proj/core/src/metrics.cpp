#include "sensemap/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace sensemap {

namespace {

// View an image tensor as [H, W]; accepts [H, W] or [1, H, W].
std::pair<int, int> image_dims(const Tensor& t, const char* what) {
    if (t.rank() == 2) return {t.dim(0), t.dim(1)};
    if (t.rank() == 3 && t.dim(0) == 1) return {t.dim(1), t.dim(2)};
    throw ShapeError(std::string(what) + ": expected [H, W] or [1, H, W], got " +
                     t.shape_string());
}

} // namespace

double ssim(const Tensor& x, const Tensor& y, const SsimConfig& cfg) {
    const auto [h, w] = image_dims(x, "ssim");
    const auto [hy, wy] = image_dims(y, "ssim");
    if (h != hy || w != wy)
        throw ShapeError("ssim: shape mismatch " + x.shape_string() + " vs " +
                         y.shape_string());
    const int win = cfg.window;
    if (h < win || w < win)
        throw DomainError("ssim: image smaller than the " + std::to_string(win) +
                          "x" + std::to_string(win) + " window");

    // Normalized Gaussian window.
    std::vector<double> kernel(static_cast<std::size_t>(win) * win);
    const int half = win / 2;
    double ksum = 0.0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double d2 = (i - half) * (i - half) + (j - half) * (j - half);
            kernel[static_cast<std::size_t>(i) * win + j] =
                std::exp(-d2 / (2.0 * cfg.sigma * cfg.sigma));
            ksum += kernel[static_cast<std::size_t>(i) * win + j];
        }
    for (double& k : kernel) k /= ksum;

    const double c1 = cfg.c1(), c2 = cfg.c2();
    const double* xp = x.data();
    const double* yp = y.data();

    double total = 0.0;
    long count = 0;
    for (int r = 0; r + win <= h; ++r) {
        for (int c = 0; c + win <= w; ++c) {
            double mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
            for (int i = 0; i < win; ++i) {
                const double* xrow = xp + static_cast<std::size_t>(r + i) * w + c;
                const double* yrow = yp + static_cast<std::size_t>(r + i) * w + c;
                const double* krow = kernel.data() + static_cast<std::size_t>(i) * win;
                for (int j = 0; j < win; ++j) {
                    const double k = krow[j];
                    const double xv = xrow[j], yv = yrow[j];
                    mx += k * xv;
                    my += k * yv;
                    mxx += k * xv * xv;
                    myy += k * yv * yv;
                    mxy += k * xv * yv;
                }
            }
            const double vx = mxx - mx * mx;
            const double vy = myy - my * my;
            const double cxy = mxy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
                     ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

namespace {

Tensor as_chw(const Tensor& t, const char* what) {
    const auto [h, w] = image_dims(t, what);
    if (t.rank() == 3) return t;
    Tensor out({1, h, w});
    std::copy(t.data(), t.data() + t.size(), out.data());
    return out;
}

// Channel-unit-normalize activations at every spatial position.
Tensor unit_normalize(const Tensor& a) {
    const int ch = a.dim(0), h = a.dim(1), w = a.dim(2);
    Tensor out(a.shape());
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < plane; ++i) {
        double norm2 = 0.0;
        for (int c = 0; c < ch; ++c) {
            const double v = a[static_cast<std::size_t>(c) * plane + i];
            norm2 += v * v;
        }
        const double inv = 1.0 / (std::sqrt(norm2) + 1e-12);
        for (int c = 0; c < ch; ++c)
            out[static_cast<std::size_t>(c) * plane + i] =
                a[static_cast<std::size_t>(c) * plane + i] * inv;
    }
    return out;
}

} // namespace

double plpips(const FeatureNet& phi, const Tensor& x, const Tensor& y) {
    const Tensor xc = as_chw(x, "plpips");
    const Tensor yc = as_chw(y, "plpips");
    if (!xc.same_shape(yc)) throw ShapeError("plpips: shape mismatch");
    const auto ax = phi.activations(xc);
    const auto ay = phi.activations(yc);
    double total = 0.0;
    for (int j = 0; j < FeatureNet::kLayers; ++j) {
        const Tensor nx = unit_normalize(ax.a[static_cast<std::size_t>(j)]);
        const Tensor ny = unit_normalize(ay.a[static_cast<std::size_t>(j)]);
        double sq = 0.0;
        for (std::size_t i = 0; i < nx.size(); ++i) {
            const double d = nx[i] - ny[i];
            sq += d * d;
        }
        total += std::sqrt(sq);
    }
    return total;
}

std::vector<double> pooled_features(const FeatureNet& phi, const Tensor& x) {
    const auto acts = phi.activations(as_chw(x, "pooled_features"));
    const Tensor& last = acts.a[FeatureNet::kLayers - 1];
    const int ch = last.dim(0);
    const std::size_t plane = static_cast<std::size_t>(last.dim(1)) * last.dim(2);
    std::vector<double> out(static_cast<std::size_t>(ch), 0.0);
    for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i)
            acc += last[static_cast<std::size_t>(c) * plane + i];
        out[static_cast<std::size_t>(c)] = acc / static_cast<double>(plane);
    }
    return out;
}

namespace {

// Cyclic Jacobi eigendecomposition for small symmetric matrices.
// a is n*n row-major and is destroyed; eigenvalues land in eig.
void jacobi_eigenvalues(std::vector<double>& a, int n, std::vector<double>& eig) {
    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q)
                off += a[static_cast<std::size_t>(p) * n + q] *
                       a[static_cast<std::size_t>(p) * n + q];
        if (off < 1e-26) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[static_cast<std::size_t>(p) * n + q];
                if (std::abs(apq) < 1e-300) continue;
                const double app = a[static_cast<std::size_t>(p) * n + p];
                const double aqq = a[static_cast<std::size_t>(q) * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a[static_cast<std::size_t>(k) * n + p];
                    const double akq = a[static_cast<std::size_t>(k) * n + q];
                    a[static_cast<std::size_t>(k) * n + p] = c * akp - s * akq;
                    a[static_cast<std::size_t>(k) * n + q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a[static_cast<std::size_t>(p) * n + k];
                    const double aqk = a[static_cast<std::size_t>(q) * n + k];
                    a[static_cast<std::size_t>(p) * n + k] = c * apk - s * aqk;
                    a[static_cast<std::size_t>(q) * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    eig.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i) * n + i];
}

// Symmetric square root via eigendecomposition (with the eigenvector
// accumulation variant of Jacobi).
void jacobi_eigensystem(std::vector<double> a, int n, std::vector<double>& eig,
                        std::vector<double>& vecs) {
    vecs.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) vecs[static_cast<std::size_t>(i) * n + i] = 1.0;
    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q)
                off += a[static_cast<std::size_t>(p) * n + q] *
                       a[static_cast<std::size_t>(p) * n + q];
        if (off < 1e-26) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[static_cast<std::size_t>(p) * n + q];
                if (std::abs(apq) < 1e-300) continue;
                const double app = a[static_cast<std::size_t>(p) * n + p];
                const double aqq = a[static_cast<std::size_t>(q) * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a[static_cast<std::size_t>(k) * n + p];
                    const double akq = a[static_cast<std::size_t>(k) * n + q];
                    a[static_cast<std::size_t>(k) * n + p] = c * akp - s * akq;
                    a[static_cast<std::size_t>(k) * n + q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a[static_cast<std::size_t>(p) * n + k];
                    const double aqk = a[static_cast<std::size_t>(q) * n + k];
                    a[static_cast<std::size_t>(p) * n + k] = c * apk - s * aqk;
                    a[static_cast<std::size_t>(q) * n + k] = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = vecs[static_cast<std::size_t>(k) * n + p];
                    const double vkq = vecs[static_cast<std::size_t>(k) * n + q];
                    vecs[static_cast<std::size_t>(k) * n + p] = c * vkp - s * vkq;
                    vecs[static_cast<std::size_t>(k) * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    eig.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i) * n + i];
}

double clamp_eigenvalue(double lambda, const char* what) {
    if (lambda < -1e-10)
        throw NumericError(std::string(what) + ": eigenvalue " +
                           std::to_string(lambda) + " below -1e-10");
    return std::max(lambda, 0.0);
}

} // namespace

double pfid(const std::vector<std::vector<double>>& features_x,
            const std::vector<std::vector<double>>& features_y) {
    if (features_x.empty() || features_y.empty())
        throw DomainError("pfid: empty feature set");
    const int d = static_cast<int>(features_x.front().size());
    for (const auto& v : features_x)
        if (static_cast<int>(v.size()) != d) throw DomainError("pfid: ragged features");
    for (const auto& v : features_y)
        if (static_cast<int>(v.size()) != d) throw DomainError("pfid: ragged features");
    const int nx = static_cast<int>(features_x.size());
    const int ny = static_cast<int>(features_y.size());
    if (nx < d + 1 || ny < d + 1)
        throw DomainError("pfid: need at least dim+1 = " + std::to_string(d + 1) +
                          " samples per side, got " + std::to_string(nx) + "/" +
                          std::to_string(ny));

    auto mean_of = [&](const std::vector<std::vector<double>>& f) {
        std::vector<double> mu(static_cast<std::size_t>(d), 0.0);
        for (const auto& v : f)
            for (int i = 0; i < d; ++i) mu[static_cast<std::size_t>(i)] += v[static_cast<std::size_t>(i)];
        for (double& m : mu) m /= static_cast<double>(f.size());
        return mu;
    };
    auto cov_of = [&](const std::vector<std::vector<double>>& f,
                      const std::vector<double>& mu) {
        std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
        for (const auto& v : f)
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    cov[static_cast<std::size_t>(i) * d + j] +=
                        (v[static_cast<std::size_t>(i)] - mu[static_cast<std::size_t>(i)]) *
                        (v[static_cast<std::size_t>(j)] - mu[static_cast<std::size_t>(j)]);
        const double denom = static_cast<double>(f.size()) - 1.0;
        for (double& c : cov) c /= denom;
        return cov;
    };

    const std::vector<double> mux = mean_of(features_x);
    const std::vector<double> muy = mean_of(features_y);
    const std::vector<double> sx = cov_of(features_x, mux);
    const std::vector<double> sy = cov_of(features_y, muy);

    double mean_term = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = mux[static_cast<std::size_t>(i)] - muy[static_cast<std::size_t>(i)];
        mean_term += diff * diff;
    }
    double tr_x = 0.0, tr_y = 0.0;
    for (int i = 0; i < d; ++i) {
        tr_x += sx[static_cast<std::size_t>(i) * d + i];
        tr_y += sy[static_cast<std::size_t>(i) * d + i];
    }

    // sqrt(Sx) from its eigensystem, then M = sqrt(Sx) Sy sqrt(Sx).
    std::vector<double> eig, vecs;
    jacobi_eigensystem(sx, d, eig, vecs);
    std::vector<double> sqrt_sx(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int k = 0; k < d; ++k)
                acc += vecs[static_cast<std::size_t>(i) * d + k] *
                       std::sqrt(clamp_eigenvalue(eig[static_cast<std::size_t>(k)], "pfid Sx")) *
                       vecs[static_cast<std::size_t>(j) * d + k];
            sqrt_sx[static_cast<std::size_t>(i) * d + j] = acc;
        }
    }
    auto matmul = [&](const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> out(static_cast<std::size_t>(d) * d, 0.0);
        for (int i = 0; i < d; ++i)
            for (int k = 0; k < d; ++k) {
                const double av = a[static_cast<std::size_t>(i) * d + k];
                if (av == 0.0) continue;
                for (int j = 0; j < d; ++j)
                    out[static_cast<std::size_t>(i) * d + j] +=
                        av * b[static_cast<std::size_t>(k) * d + j];
            }
        return out;
    };
    std::vector<double> m = matmul(matmul(sqrt_sx, sy), sqrt_sx);
    // Symmetrize away rounding asymmetry before the eigensolve.
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            const double avg = 0.5 * (m[static_cast<std::size_t>(i) * d + j] +
                                      m[static_cast<std::size_t>(j) * d + i]);
            m[static_cast<std::size_t>(i) * d + j] = avg;
            m[static_cast<std::size_t>(j) * d + i] = avg;
        }
    std::vector<double> meig;
    jacobi_eigenvalues(m, d, meig);
    double tr_sqrt = 0.0;
    for (int i = 0; i < d; ++i)
        tr_sqrt += std::sqrt(clamp_eigenvalue(meig[static_cast<std::size_t>(i)], "pfid M"));

    return mean_term + tr_x + tr_y - 2.0 * tr_sqrt;
}

Tensor image_from_prob(const ProbMap& p) {
    Tensor out({p.height(), p.width()});
    for (int r = 0; r < p.height(); ++r)
        for (int c = 0; c < p.width(); ++c)
            out[static_cast<std::size_t>(r) * p.width() + c] = p(r, c);
    return out;
}

Tensor image_from_trinary(const TrinaryMap& m) {
    Tensor out({m.height(), m.width()});
    for (int r = 0; r < m.height(); ++r)
        for (int c = 0; c < m.width(); ++c)
            out[static_cast<std::size_t>(r) * m.width() + c] = cell_value(m(r, c));
    return out;
}

double coverage_rho(const TrinaryMap& m, const TrinaryMap& truth) {
    if (m.height() != truth.height() || m.width() != truth.width())
        throw DomainError("coverage_rho: shape mismatch");
    const int truth_free = truth.count(CellState::Free);
    if (truth_free == 0)
        throw DomainError("coverage_rho: truth has no Free cells");
    return static_cast<double>(m.count(CellState::Free)) /
           static_cast<double>(truth_free);
}

double reconstruction_accuracy(const TrinaryMap& m, const TrinaryMap& truth) {
    if (m.height() != truth.height() || m.width() != truth.width())
        throw DomainError("reconstruction_accuracy: shape mismatch");
    int claimed = 0, correct = 0;
    for (int r = 0; r < m.height(); ++r) {
        for (int c = 0; c < m.width(); ++c) {
            if (m(r, c) != CellState::Free) continue;
            ++claimed;
            if (truth(r, c) == CellState::Free) ++correct;
        }
    }
    if (claimed == 0)
        throw DomainError("reconstruction_accuracy: map claims no Free cells");
    return static_cast<double>(correct) / static_cast<double>(claimed);
}

} // namespace sensemap
