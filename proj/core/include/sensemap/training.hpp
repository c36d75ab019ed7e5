#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sensemap/nnet.hpp"
#include "sensemap/tensor.hpp"

namespace sensemap {

struct LossWeights {
    double w_mse = 10.0;
    double w_feat = 1.0;

    void validate() const;
};

/// Fixed seeded conv net standing in for a pretrained loss backbone:
/// 3 stride-2 3x3 layers (1 -> 8 -> 16 -> 32 channels) with rectified-linear
/// activations. Weights never change after construction; the activations of
/// the three layers define phi_j.
class FeatureNet {
public:
    static constexpr int kLayers = 3;

    explicit FeatureNet(std::uint64_t seed);

    struct Activations {
        std::array<Tensor, kLayers> z; // pre-activation
        std::array<Tensor, kLayers> a; // post-relu, the phi_j features
    };

    /// x must be [1, S, S] with S divisible by 8.
    Activations activations(const Tensor& x) const;

    /// Backprop per-layer activation gradients to the input. The fixed
    /// weights receive no gradient anywhere.
    Tensor input_gradient(const Tensor& x, const Activations& acts,
                          const std::array<Tensor, kLayers>& grad_a) const;

    std::uint64_t seed() const { return seed_; }

    /// Hash over the raw weight bytes; frozen-ness checks compare this.
    std::uint64_t weights_hash() const;

    const Tensor& weight(int layer) const { return w_[static_cast<std::size_t>(layer)]; }
    const Tensor& bias(int layer) const { return b_[static_cast<std::size_t>(layer)]; }

private:
    std::array<Tensor, kLayers> w_, b_;
    std::uint64_t seed_;
};

/// Mean squared error over all S*S pixels.
double mse_loss(const Tensor& pred, const Tensor& gt);

/// Feature reconstruction loss: mean over the phi layers of the
/// size-normalized squared feature distance.
double feature_loss(const FeatureNet& phi, const Tensor& pred, const Tensor& gt);

struct LossParts {
    double mse = 0.0;
    double feat = 0.0;
    double hybrid = 0.0;
};

LossParts hybrid_loss_parts(const LossWeights& w, const FeatureNet& phi,
                            const Tensor& pred, const Tensor& gt);

double hybrid_loss(const LossWeights& w, const FeatureNet& phi, const Tensor& pred,
                   const Tensor& gt);

/// d hybrid_loss / d pred.
Tensor hybrid_loss_grad(const LossWeights& w, const FeatureNet& phi,
                        const Tensor& pred, const Tensor& gt);

struct BackwardResult {
    LossParts loss;
    NetParams grads;
};

/// Loss and exact gradients of the hybrid loss w.r.t. every network
/// parameter for one sample (input x, target gt shaped [1, S, S]).
BackwardResult loss_and_gradients(const NetConfig& cfg, const NetParams& params,
                                  const Tensor& x, const Tensor& gt,
                                  const LossWeights& w, const FeatureNet& phi);

/// Gradient-only variant matching the spec operation.
NetParams backward(const NetConfig& cfg, const NetParams& params, const Tensor& x,
                   const Tensor& gt, const LossWeights& w, const FeatureNet& phi);

struct AdamState {
    NetParams m, v;
    std::int64_t step = 0;

    static AdamState zeros(const NetConfig& cfg);
};

/// Standard bias-corrected Adam update, applied in place.
void adam_step(AdamState& state, NetParams& params, const NetParams& grads, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct TrainConfig {
    int epochs = 60;
    int split_epoch = 0; // 0 means epochs / 2
    double lr_phase1 = 0.001;
    double lr_phase2 = 0.0001;
    int batch_size = 8;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    int effective_split() const { return split_epoch > 0 ? split_epoch : epochs / 2; }
    void validate() const;
};

struct TrainSample {
    Tensor x;  // [3, S, S]
    Tensor gt; // [1, S, S]
};

struct EpochStats {
    int epoch = 0; // 1-based
    double mean_mse = 0.0;
    double mean_feat = 0.0;
    double mean_hybrid = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    NetParams params;
    AdamState opt;
    std::vector<EpochStats> history;
};

/// Shuffled mini-batch training with the two-phase learning rate schedule.
/// Deterministic in cfg/tcfg: parameters initialize from tcfg.seed and each
/// epoch shuffles with a stream derived from (seed, epoch), so resuming from
/// a checkpoint reproduces the remaining epochs exactly.
TrainResult train(const std::vector<TrainSample>& dataset, const NetConfig& cfg,
                  const TrainConfig& tcfg, const LossWeights& w, const FeatureNet& phi);

/// Resume: continue from `params`/`opt` at 1-based epoch `start_epoch`.
TrainResult train_from(const std::vector<TrainSample>& dataset, const NetConfig& cfg,
                       const TrainConfig& tcfg, const LossWeights& w,
                       const FeatureNet& phi, NetParams params, AdamState opt,
                       int start_epoch);

/// loss_history.csv: epoch, mean_mse, mean_feat, mean_hybrid, lr.
void write_loss_history(const std::string& path, const std::vector<EpochStats>& history);

} // namespace sensemap
