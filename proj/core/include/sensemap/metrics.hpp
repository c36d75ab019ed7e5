#pragma once

#include <vector>

#include "sensemap/gridmap.hpp"
#include "sensemap/tensor.hpp"
#include "sensemap/training.hpp"

namespace sensemap {

/// Windowed SSIM constants (the usual 11x11 Gaussian window).
struct SsimConfig {
    int window = 11;
    double sigma = 1.5;
    double dynamic_range = 1.0;
    double k1 = 0.01;
    double k2 = 0.03;

    double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
    double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

/// Mean of the per-window SSIM over all valid (fully interior) windows,
/// Gaussian-weighted local statistics. Inputs are [H, W] or [1, H, W] images
/// in [0, dynamic_range]; symmetric in (x, y).
double ssim(const Tensor& x, const Tensor& y, const SsimConfig& cfg = {});

/// Proxy perceptual distance through the fixed feature net: sum over layers
/// of the L2 norm (not squared) of the difference of channel-unit-normalized
/// activations.
double plpips(const FeatureNet& phi, const Tensor& x, const Tensor& y);

/// Proxy Frechet distance between two feature sets (rows = samples):
/// ||mu_x - mu_y||^2 + Tr(Sx + Sy - 2 (Sx Sy)^{1/2}), computed via the
/// symmetric form with an eigendecomposition. Throws DomainError when a side
/// has fewer than dim+1 samples and NumericError when an eigenvalue falls
/// below -1e-10 (small negatives clamp to zero).
double pfid(const std::vector<std::vector<double>>& features_x,
            const std::vector<std::vector<double>>& features_y);

/// Final-layer activations of phi, global-average-pooled: the feature vector
/// pfid consumes (dimension 32).
std::vector<double> pooled_features(const FeatureNet& phi, const Tensor& x);

/// Exploration coverage: free cells of m over free cells of truth, full map.
double coverage_rho(const TrinaryMap& m, const TrinaryMap& truth);

/// Precision of m's free-cell claims against truth.
double reconstruction_accuracy(const TrinaryMap& m, const TrinaryMap& truth);

/// [H, W] image from a probability map (values already in [0,1]).
Tensor image_from_prob(const ProbMap& p);

/// [H, W] image using the trinary numeric encoding (0, 0.5, 1).
Tensor image_from_trinary(const TrinaryMap& m);

struct MetricsReport {
    double ssim = 0.0;
    double plpips = 0.0;
    double pfid = 0.0;
    double rho = 0.0;
    double ra = 0.0;
    int sample_count = 0;
};

} // namespace sensemap
