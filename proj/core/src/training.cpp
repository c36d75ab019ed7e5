#include "sensemap/training.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "nn_ops.hpp"
#include "sensemap/image_io.hpp"
#include "sensemap/rng.hpp"

namespace sensemap {

void LossWeights::validate() const {
    if (w_mse < 0.0 || w_feat < 0.0)
        throw ConfigError("LossWeights: weights must be >= 0");
    if (w_mse == 0.0 && w_feat == 0.0)
        throw ConfigError("LossWeights: at least one weight must be positive");
}

namespace {
constexpr int kPhiChannels[FeatureNet::kLayers + 1] = {1, 8, 16, 32};
} // namespace

FeatureNet::FeatureNet(std::uint64_t seed) : seed_(seed) {
    Rng rng(seed);
    for (int j = 0; j < kLayers; ++j) {
        const int cin = kPhiChannels[j], cout = kPhiChannels[j + 1];
        w_[static_cast<std::size_t>(j)] = Tensor({cout, cin, 3, 3});
        b_[static_cast<std::size_t>(j)] = Tensor({cout});
        const double bound = 1.0 / std::sqrt(cin * 9.0);
        for (std::size_t i = 0; i < w_[static_cast<std::size_t>(j)].size(); ++i)
            w_[static_cast<std::size_t>(j)][i] = rng.uniform(-bound, bound);
    }
}

FeatureNet::Activations FeatureNet::activations(const Tensor& x) const {
    if (x.rank() != 3 || x.dim(0) != 1)
        throw ShapeError("FeatureNet: input must be [1, S, S], got " + x.shape_string());
    if (x.dim(1) % 8 != 0 || x.dim(2) % 8 != 0)
        throw ShapeError("FeatureNet: input side must be divisible by 8");
    Activations acts;
    const Tensor* cur = &x;
    for (int j = 0; j < kLayers; ++j) {
        ops::conv2d(*cur, w_[static_cast<std::size_t>(j)], b_[static_cast<std::size_t>(j)],
                    2, 1, acts.z[static_cast<std::size_t>(j)]);
        ops::relu(acts.z[static_cast<std::size_t>(j)], acts.a[static_cast<std::size_t>(j)]);
        cur = &acts.a[static_cast<std::size_t>(j)];
    }
    return acts;
}

Tensor FeatureNet::input_gradient(const Tensor& x, const Activations& acts,
                                  const std::array<Tensor, kLayers>& grad_a) const {
    // Every phi_j feeds the loss directly, so each layer's incoming gradient
    // is the sum of the upstream flow and its own grad_a term.
    Tensor g_out(acts.a[kLayers - 1].shape());
    for (int j = kLayers - 1; j >= 0; --j) {
        Tensor g_z(acts.z[static_cast<std::size_t>(j)].shape());
        Tensor g_with = g_out;
        for (std::size_t i = 0; i < g_with.size(); ++i)
            g_with[i] += grad_a[static_cast<std::size_t>(j)][i];
        ops::relu_backward(acts.z[static_cast<std::size_t>(j)], g_with, g_z);
        const Tensor& in = j == 0 ? x : acts.a[static_cast<std::size_t>(j - 1)];
        Tensor g_in(in.shape());
        Tensor gw(w_[static_cast<std::size_t>(j)].shape());
        Tensor gb(b_[static_cast<std::size_t>(j)].shape());
        ops::conv2d_backward(in, w_[static_cast<std::size_t>(j)], g_z, 2, 1, g_in, gw, gb);
        g_out = std::move(g_in);
    }
    return g_out;
}

std::uint64_t FeatureNet::weights_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](const Tensor& t) {
        h ^= fnv1a64(t.data(), t.size() * sizeof(double));
        h *= 0x100000001b3ULL;
    };
    for (int j = 0; j < kLayers; ++j) {
        mix(w_[static_cast<std::size_t>(j)]);
        mix(b_[static_cast<std::size_t>(j)]);
    }
    return h;
}

double mse_loss(const Tensor& pred, const Tensor& gt) {
    if (!pred.same_shape(gt))
        throw ShapeError("mse_loss: shape mismatch " + pred.shape_string() + " vs " +
                         gt.shape_string());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - gt[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

double feature_loss(const FeatureNet& phi, const Tensor& pred, const Tensor& gt) {
    if (!pred.same_shape(gt))
        throw ShapeError("feature_loss: shape mismatch");
    const auto ap = phi.activations(pred);
    const auto ag = phi.activations(gt);
    double acc = 0.0;
    for (int j = 0; j < FeatureNet::kLayers; ++j) {
        const Tensor& p = ap.a[static_cast<std::size_t>(j)];
        const Tensor& g = ag.a[static_cast<std::size_t>(j)];
        double layer = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double d = p[i] - g[i];
            layer += d * d;
        }
        acc += layer / static_cast<double>(p.size());
    }
    return acc / FeatureNet::kLayers;
}

LossParts hybrid_loss_parts(const LossWeights& w, const FeatureNet& phi,
                            const Tensor& pred, const Tensor& gt) {
    w.validate();
    LossParts parts;
    parts.mse = mse_loss(pred, gt);
    parts.feat = feature_loss(phi, pred, gt);
    parts.hybrid = w.w_mse * parts.mse + w.w_feat * parts.feat;
    return parts;
}

double hybrid_loss(const LossWeights& w, const FeatureNet& phi, const Tensor& pred,
                   const Tensor& gt) {
    return hybrid_loss_parts(w, phi, pred, gt).hybrid;
}

Tensor hybrid_loss_grad(const LossWeights& w, const FeatureNet& phi, const Tensor& pred,
                        const Tensor& gt) {
    w.validate();
    if (!pred.same_shape(gt)) throw ShapeError("hybrid_loss_grad: shape mismatch");

    Tensor grad(pred.shape());
    const double n = static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
        grad[i] = w.w_mse * 2.0 * (pred[i] - gt[i]) / n;

    if (w.w_feat != 0.0) {
        const auto ap = phi.activations(pred);
        const auto ag = phi.activations(gt);
        std::array<Tensor, FeatureNet::kLayers> grad_a;
        for (int j = 0; j < FeatureNet::kLayers; ++j) {
            const Tensor& p = ap.a[static_cast<std::size_t>(j)];
            const Tensor& g = ag.a[static_cast<std::size_t>(j)];
            Tensor ga(p.shape());
            const double scale =
                w.w_feat * 2.0 / (FeatureNet::kLayers * static_cast<double>(p.size()));
            for (std::size_t i = 0; i < p.size(); ++i) ga[i] = scale * (p[i] - g[i]);
            grad_a[static_cast<std::size_t>(j)] = std::move(ga);
        }
        const Tensor g_in = phi.input_gradient(pred, ap, grad_a);
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g_in[i];
    }
    grad.assert_finite("hybrid loss gradient");
    return grad;
}

BackwardResult loss_and_gradients(const NetConfig& cfg, const NetParams& params,
                                  const Tensor& x, const Tensor& gt,
                                  const LossWeights& w, const FeatureNet& phi) {
    const ForwardTrace trace = forward_trace(cfg, params, x);
    BackwardResult result;
    result.loss = hybrid_loss_parts(w, phi, trace.y, gt);
    const Tensor grad_y = hybrid_loss_grad(w, phi, trace.y, gt);
    result.grads = backward_trace(cfg, params, trace, grad_y);
    return result;
}

NetParams backward(const NetConfig& cfg, const NetParams& params, const Tensor& x,
                   const Tensor& gt, const LossWeights& w, const FeatureNet& phi) {
    return loss_and_gradients(cfg, params, x, gt, w, phi).grads;
}

AdamState AdamState::zeros(const NetConfig& cfg) {
    return AdamState{zero_params(cfg), zero_params(cfg), 0};
}

void adam_step(AdamState& state, NetParams& params, const NetParams& grads, double lr,
               double beta1, double beta2, double eps) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

    struct Slot {
        Tensor* p;
        const Tensor* g;
        Tensor* m;
        Tensor* v;
    };
    std::vector<Slot> slots;
    params.for_each([&](const std::string&, Tensor& t) { slots.push_back({&t, nullptr, nullptr, nullptr}); });
    std::size_t i = 0;
    grads.for_each([&](const std::string&, const Tensor& t) { slots[i++].g = &t; });
    i = 0;
    state.m.for_each([&](const std::string&, Tensor& t) { slots[i++].m = &t; });
    i = 0;
    state.v.for_each([&](const std::string&, Tensor& t) { slots[i++].v = &t; });

    for (auto& slot : slots) {
        if (!slot.p->same_shape(*slot.g))
            throw ShapeError("adam_step: gradient shape mismatch");
        Tensor& p = *slot.p;
        const Tensor& g = *slot.g;
        Tensor& m = *slot.m;
        Tensor& v = *slot.v;
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p[k] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (lr_phase1 <= 0.0 || lr_phase2 <= 0.0)
        throw ConfigError("TrainConfig: learning rates must be > 0");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (split_epoch < 0 || split_epoch > epochs)
        throw ConfigError("TrainConfig: split_epoch out of range");
}

namespace {

void check_dataset(const std::vector<TrainSample>& dataset, const NetConfig& cfg) {
    if (dataset.empty()) throw ConfigError("train: dataset is empty");
    const std::vector<int> xshape{3, cfg.side, cfg.side};
    const std::vector<int> gshape{1, cfg.side, cfg.side};
    for (const auto& s : dataset)
        if (s.x.shape() != xshape || s.gt.shape() != gshape)
            throw ConfigError("train: sample shape does not match NetConfig side " +
                              std::to_string(cfg.side));
}

void scale_params(NetParams& p, double s) {
    p.for_each([&](const std::string&, Tensor& t) {
        for (std::size_t i = 0; i < t.size(); ++i) t[i] *= s;
    });
}

void accumulate_params(NetParams& into, const NetParams& from) {
    struct Pair {
        Tensor* dst;
        const Tensor* src;
    };
    std::vector<Pair> pairs;
    into.for_each([&](const std::string&, Tensor& t) { pairs.push_back({&t, nullptr}); });
    std::size_t i = 0;
    from.for_each([&](const std::string&, const Tensor& t) { pairs[i++].src = &t; });
    for (auto& pr : pairs)
        for (std::size_t k = 0; k < pr.dst->size(); ++k)
            (*pr.dst)[k] += (*pr.src)[k];
}

} // namespace

TrainResult train_from(const std::vector<TrainSample>& dataset, const NetConfig& cfg,
                       const TrainConfig& tcfg, const LossWeights& w,
                       const FeatureNet& phi, NetParams params, AdamState opt,
                       int start_epoch) {
    cfg.validate();
    tcfg.validate();
    w.validate();
    check_dataset(dataset, cfg);
    validate_params(cfg, params);

    TrainResult result;
    const int split = tcfg.effective_split();
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = start_epoch; epoch <= tcfg.epochs; ++epoch) {
        const double lr = epoch <= split ? tcfg.lr_phase1 : tcfg.lr_phase2;
        Rng shuffle_rng(Rng::mix(tcfg.seed, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(
                shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        double sum_mse = 0.0, sum_feat = 0.0, sum_hybrid = 0.0;
        std::size_t pos = 0;
        while (pos < order.size()) {
            const std::size_t batch_end =
                std::min(pos + static_cast<std::size_t>(tcfg.batch_size), order.size());
            NetParams grads = zero_params(cfg);
            for (std::size_t i = pos; i < batch_end; ++i) {
                const TrainSample& sample = dataset[order[i]];
                BackwardResult bw = loss_and_gradients(cfg, params, sample.x, sample.gt, w, phi);
                sum_mse += bw.loss.mse;
                sum_feat += bw.loss.feat;
                sum_hybrid += bw.loss.hybrid;
                accumulate_params(grads, bw.grads);
            }
            scale_params(grads, 1.0 / static_cast<double>(batch_end - pos));
            adam_step(opt, params, grads, lr, tcfg.beta1, tcfg.beta2, tcfg.eps);
            pos = batch_end;
        }

        const double n = static_cast<double>(dataset.size());
        result.history.push_back(
            EpochStats{epoch, sum_mse / n, sum_feat / n, sum_hybrid / n, lr});
    }

    result.params = std::move(params);
    result.opt = std::move(opt);
    return result;
}

TrainResult train(const std::vector<TrainSample>& dataset, const NetConfig& cfg,
                  const TrainConfig& tcfg, const LossWeights& w, const FeatureNet& phi) {
    NetParams params = init_params(cfg, Rng::mix(tcfg.seed, 0x696e6974ULL));
    return train_from(dataset, cfg, tcfg, w, phi, std::move(params),
                      AdamState::zeros(cfg), 1);
}

void write_loss_history(const std::string& path, const std::vector<EpochStats>& history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("write_loss_history: cannot open " + path);
    out << "epoch,mean_mse,mean_feat,mean_hybrid,lr\n";
    char line[160];
    for (const auto& e : history) {
        std::snprintf(line, sizeof(line), "%d,%.12g,%.12g,%.12g,%.6g\n", e.epoch,
                      e.mean_mse, e.mean_feat, e.mean_hybrid, e.lr);
        out << line;
    }
    if (!out) throw IoError("write_loss_history: write failure on " + path);
}

} // namespace sensemap
