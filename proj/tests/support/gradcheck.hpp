#pragma once

// Finite-difference gradient verification.
//
// The loss is piecewise smooth (rectifier kinks), so a blind FD stencil can
// straddle a kink and report garbage that has nothing to do with gradient
// correctness. The setup here makes the comparison well-posed:
//  - test points are sampled, then every rectifier bias channel is nudged so
//    no pre-activation sits within `margin_net` of zero;
//  - the fixed feature net's seed is chosen so its pre-activations on the
//    prediction clear `margin_phi`;
//  - every stencil evaluation records the sign pattern of all rectifier
//    inputs, and a coordinate whose stencil flips any sign retries with a
//    smaller step.
// The check itself is a 5-point central stencil, O(h^4), so the step can stay
// large enough to keep subtractive cancellation far below the tolerance.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sensemap/nnet.hpp"
#include "sensemap/rng.hpp"
#include "sensemap/training.hpp"

namespace gradcheck {

using sensemap::FeatureNet;
using sensemap::ForwardTrace;
using sensemap::LossWeights;
using sensemap::NetConfig;
using sensemap::NetParams;
using sensemap::Tensor;

struct Problem {
    NetConfig cfg;
    NetParams params;
    std::uint64_t phi_seed = 0;
    Tensor x, gt;
    LossWeights w{10.0, 1.0};
};

inline std::uint64_t sign_pattern(const NetConfig& cfg, const ForwardTrace& tr,
                                  const FeatureNet& phi) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](const Tensor& z) {
        for (std::size_t i = 0; i < z.size(); ++i) {
            h ^= z[i] > 0.0 ? 0x9eULL : 0x31ULL;
            h *= 0x100000001b3ULL;
        }
    };
    for (int k = 0; k < 4; ++k) {
        mix(tr.enc_z1[static_cast<std::size_t>(k)]);
        mix(tr.enc_z2[static_cast<std::size_t>(k)]);
    }
    for (int k = 0; k < 4; ++k)
        for (const Tensor& z : tr.fuse_z[static_cast<std::size_t>(k)]) mix(z);
    for (int k = 0; k < 4; ++k) mix(tr.up_z[static_cast<std::size_t>(k)]);
    const auto acts = phi.activations(tr.y);
    for (const Tensor& z : acts.z) mix(z);
    (void)cfg;
    return h;
}

struct LossEval {
    double loss = 0.0;
    std::uint64_t pattern = 0;
};

inline LossEval eval_loss(const Problem& p, const FeatureNet& phi) {
    const ForwardTrace tr = sensemap::forward_trace(p.cfg, p.params, p.x);
    LossEval e;
    e.loss = sensemap::hybrid_loss(p.w, phi, tr.y, p.gt);
    e.pattern = sign_pattern(p.cfg, tr, phi);
    return e;
}

// Bias channels paired with the pre-activation tensors they shift, in
// forward (topological) order.
struct BiasLayer {
    Tensor* bias;
    std::function<const Tensor&(const ForwardTrace&)> z_of;
};

inline std::vector<BiasLayer> rectifier_biases(NetParams& params) {
    std::vector<BiasLayer> layers;
    for (int k = 0; k < 4; ++k) {
        layers.push_back({&params.enc[static_cast<std::size_t>(k)].b1,
                          [k](const ForwardTrace& tr) -> const Tensor& {
                              return tr.enc_z1[static_cast<std::size_t>(k)];
                          }});
        layers.push_back({&params.enc[static_cast<std::size_t>(k)].b2,
                          [k](const ForwardTrace& tr) -> const Tensor& {
                              return tr.enc_z2[static_cast<std::size_t>(k)];
                          }});
    }
    for (int k = 0; k < 4; ++k)
        for (std::size_t j = 0; j < params.fuse[static_cast<std::size_t>(k)].b.size(); ++j)
            layers.push_back({&params.fuse[static_cast<std::size_t>(k)].b[j],
                              [k, j](const ForwardTrace& tr) -> const Tensor& {
                                  return tr.fuse_z[static_cast<std::size_t>(k)][j];
                              }});
    for (int k = 3; k >= 0; --k)
        layers.push_back({&params.up[static_cast<std::size_t>(k)].conv_b,
                          [k](const ForwardTrace& tr) -> const Tensor& {
                              return tr.up_z[static_cast<std::size_t>(k)];
                          }});
    return layers;
}

// Shift each bias channel so the channel's pre-activations clear `margin`.
inline void nudge_away_from_kinks(Problem& p, double margin) {
    auto layers = rectifier_biases(p.params);
    for (auto& layer : layers) {
        const ForwardTrace tr = sensemap::forward_trace(p.cfg, p.params, p.x);
        const Tensor& z = layer.z_of(tr);
        const int channels = static_cast<int>(layer.bias->size());
        const std::size_t plane = z.size() / static_cast<std::size_t>(channels);
        for (int ch = 0; ch < channels; ++ch) {
            const double* zch = z.data() + static_cast<std::size_t>(ch) * plane;
            double closest = 1e300;
            for (std::size_t i = 0; i < plane; ++i)
                closest = std::min(closest, std::abs(zch[i]));
            if (closest >= margin) continue;
            double best_delta = 0.0, best_score = -1.0;
            for (int step = -100; step <= 100; ++step) {
                const double delta = step * 0.0025;
                double score = 1e300;
                for (std::size_t i = 0; i < plane; ++i)
                    score = std::min(score, std::abs(zch[i] + delta));
                if (score > best_score + 1e-15 ||
                    (score > best_score - 1e-15 && std::abs(delta) < std::abs(best_delta))) {
                    best_score = score;
                    best_delta = delta;
                }
            }
            (*layer.bias)[static_cast<std::size_t>(ch)] += best_delta;
        }
    }
}

inline double min_abs_preactivation(const Problem& p) {
    NetParams& params = const_cast<NetParams&>(p.params);
    auto layers = rectifier_biases(params);
    const ForwardTrace tr = sensemap::forward_trace(p.cfg, p.params, p.x);
    double worst = 1e300;
    for (auto& layer : layers) {
        const Tensor& z = layer.z_of(tr);
        for (std::size_t i = 0; i < z.size(); ++i)
            worst = std::min(worst, std::abs(z[i]));
    }
    return worst;
}

// Pick a feature-net seed whose pre-activations on the current prediction
// stay clear of zero.
inline std::uint64_t select_phi_seed(const Problem& p, std::uint64_t base,
                                     double margin, int tries = 400) {
    const Tensor y = sensemap::forward(p.cfg, p.params, p.x);
    std::uint64_t best_seed = base;
    double best_margin = -1.0;
    for (int i = 0; i < tries; ++i) {
        const std::uint64_t seed = base + static_cast<std::uint64_t>(i);
        const FeatureNet phi(seed);
        const auto acts = phi.activations(y);
        double m = 1e300;
        for (const Tensor& z : acts.z)
            for (std::size_t k = 0; k < z.size(); ++k)
                m = std::min(m, std::abs(z[k]));
        if (m > best_margin) {
            best_margin = m;
            best_seed = seed;
        }
        if (m >= margin) break;
    }
    return best_seed;
}

// Random one-hot observation and binary target for the given config.
inline Problem make_problem(const NetConfig& cfg, std::uint64_t seed) {
    Problem p;
    p.cfg = cfg;
    p.params = sensemap::init_params(cfg, seed);
    sensemap::Rng rng(sensemap::Rng::mix(seed, 0xdafaULL));
    p.x = Tensor({3, cfg.side, cfg.side});
    for (int r = 0; r < cfg.side; ++r)
        for (int c = 0; c < cfg.side; ++c) {
            const int ch = static_cast<int>(rng.uniform_int(0, 2));
            p.x[(static_cast<std::size_t>(ch) * cfg.side + r) * cfg.side + c] = 1.0;
        }
    p.gt = Tensor({1, cfg.side, cfg.side});
    for (std::size_t i = 0; i < p.gt.size(); ++i)
        p.gt[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;

    nudge_away_from_kinks(p, 2e-2);
    p.phi_seed = select_phi_seed(p, sensemap::Rng::mix(seed, 0xf1f1ULL), 1.5e-3);
    return p;
}

struct SweepResult {
    double max_rel = 0.0;
    std::string worst_name;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::int64_t checked = 0;
    std::int64_t pattern_retries = 0;
    std::int64_t dirty = 0; // coordinates that never found a clean stencil
};

// 5-point central difference on every parameter (or every `stride`-th
// parameter of each tensor when stride > 1). The relative-error denominator
// is floored at 1e-3 * max(1, ||g||_inf) so that coordinates with vanishing
// true derivative, where FD can only resolve noise, stay well-posed.
inline SweepResult sweep(Problem& p, int stride = 1) {
    const FeatureNet phi(p.phi_seed);
    const sensemap::BackwardResult analytic = sensemap::loss_and_gradients(
        p.cfg, p.params, p.x, p.gt, p.w, phi);

    double g_inf = 0.0;
    analytic.grads.for_each([&](const std::string&, const Tensor& t) {
        for (std::size_t i = 0; i < t.size(); ++i)
            g_inf = std::max(g_inf, std::abs(t[i]));
    });
    const double floor = 1e-3 * std::max(1.0, g_inf);
    const LossEval center = eval_loss(p, phi);

    struct Slot {
        std::string name;
        Tensor* param;
        const Tensor* grad;
    };
    std::vector<Slot> slots;
    p.params.for_each([&](const std::string& name, Tensor& t) {
        slots.push_back({name, &t, nullptr});
    });
    std::size_t si = 0;
    analytic.grads.for_each([&](const std::string&, const Tensor& t) {
        slots[si++].grad = &t;
    });

    SweepResult result;
    for (const Slot& slot : slots) {
        for (std::size_t i = 0; i < slot.param->size(); i += static_cast<std::size_t>(stride)) {
            const double theta = (*slot.param)[i];
            double h = 1e-4 * std::max(1.0, std::abs(theta));
            double numeric = 0.0;
            bool clean = false;
            for (int attempt = 0; attempt < 3 && !clean; ++attempt) {
                double losses[4];
                std::uint64_t pats[4];
                const double offsets[4] = {-2.0 * h, -h, h, 2.0 * h};
                for (int k = 0; k < 4; ++k) {
                    (*slot.param)[i] = theta + offsets[k];
                    const LossEval e = eval_loss(p, phi);
                    losses[k] = e.loss;
                    pats[k] = e.pattern;
                }
                (*slot.param)[i] = theta;
                numeric =
                    (losses[0] - 8.0 * losses[1] + 8.0 * losses[2] - losses[3]) /
                    (12.0 * h);
                clean = pats[0] == center.pattern && pats[1] == center.pattern &&
                        pats[2] == center.pattern && pats[3] == center.pattern;
                if (!clean) {
                    ++result.pattern_retries;
                    h /= 8.0;
                }
            }
            if (!clean) ++result.dirty;
            const double a = (*slot.grad)[i];
            const double rel = std::abs(a - numeric) /
                               std::max({std::abs(a), std::abs(numeric), floor});
            if (rel > result.max_rel) {
                result.max_rel = rel;
                result.worst_name = slot.name;
                result.worst_index = i;
                result.worst_analytic = a;
                result.worst_numeric = numeric;
            }
            ++result.checked;
        }
    }
    return result;
}

} // namespace gradcheck
