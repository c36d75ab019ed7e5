#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sensemap/gridmap.hpp"
#include "sensemap/tensor.hpp"

namespace sensemap {

/// Architecture hyperparameters. The base value b scales every conv channel
/// count and the transformer embedding dimension (d = 8b), so one number
/// moves the whole model between the standard and large variants.
struct NetConfig {
    int side = 64;      // input patch side S (= 2L)
    int base = 16;      // conv channel base b; channels b, 2b, 4b, 8b
    int patch = 8;      // transformer patch side p (power of two)
    int depth = 4;      // transformer blocks
    int heads = 4;
    int mlp_ratio = 2;

    int embed_dim() const { return 8 * base; }
    int tokens() const { return (side / patch) * (side / patch); }
    int token_grid() const { return side / patch; }

    /// Throws ConfigError unless: side divisible by patch and by 16, patch a
    /// power of two, embed dim divisible by heads and by 4.
    void validate() const;

    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// One encoder stage: conv3x3 (the skip) followed by a stride-2 conv3x3.
struct ConvStage {
    Tensor w1, b1; // [out, in, 3, 3], [out]
    Tensor w2, b2; // stride-2
};

struct TransformerBlock {
    Tensor ln1_g, ln1_b;
    Tensor qkv_w, qkv_b;   // [3d, d], [3d]
    Tensor proj_w, proj_b; // [d, d], [d]
    Tensor ln2_g, ln2_b;
    Tensor mlp1_w, mlp1_b; // [ratio*d, d]
    Tensor mlp2_w, mlp2_b; // [d, ratio*d]
};

/// Resize stack taking one quarter of the token grid to a skip's
/// resolution/channels: kernel-2 stride-2 transposed convs when upsampling,
/// kernel-2 stride-2 convs when downsampling, a single 3x3 conv when the
/// resolutions already match.
struct FusionBranch {
    std::vector<Tensor> w, b;
};

struct UpStage {
    Tensor deconv_w, deconv_b; // kernel-2 stride-2, [in, out, 2, 2]
    Tensor conv_w, conv_b;     // 3x3 on the concatenated map
};

struct NetParams {
    std::array<ConvStage, 4> enc;
    Tensor patch_w, patch_b; // [d, 3p*p], [d]
    Tensor pos;              // [T, d]
    std::vector<TransformerBlock> blocks;
    std::array<FusionBranch, 4> fuse;
    std::array<UpStage, 4> up; // index k decodes onto skip k (applied deep to shallow)
    Tensor out_w, out_b;       // 1x1 conv, [1, b, 1, 1], [1]

    /// Visit every parameter tensor in schema order as (name, tensor).
    template <typename F> void for_each(F&& f);
    template <typename F> void for_each(F&& f) const;
};

/// (name, shape) of every parameter tensor, in the same order for_each
/// visits them. The single source of truth for shapes.
std::vector<std::pair<std::string, std::vector<int>>> param_schema(const NetConfig& cfg);

/// Total parameter count implied by the config.
std::int64_t param_count(const NetConfig& cfg);

/// All-zero parameters with the schema shapes.
NetParams zero_params(const NetConfig& cfg);

/// Seeded init: fan-in-scaled uniform weights, zero biases, N(0, 0.02)
/// positional embedding, layernorm gain 1.
NetParams init_params(const NetConfig& cfg, std::uint64_t seed);

/// Throws ShapeError naming the first tensor whose shape disagrees with cfg.
void validate_params(const NetConfig& cfg, const NetParams& params);

/// One-hot input encoding: channel 0 Free, 1 Uncertain, 2 Obstacle.
/// Throws ShapeError if obs.side != side.
Tensor encode_input(const LocalPatch& obs, int side);

/// Everything the backward pass needs, plus the intermediates tests inspect.
struct ForwardTrace {
    Tensor x;
    // encoder
    std::array<Tensor, 4> enc_z1, enc_a1, enc_z2, enc_a2; // a1 = skip k
    // transformer
    Tensor patches;    // [T, 3p*p]
    Tensor tokens_pre; // projection output before positional embedding
    Tensor tokens0;    // + pos
    struct BlockTrace {
        Tensor ln1_mean, ln1_rstd, ln1_out;
        Tensor qkv; // [T, 3d]
        Tensor attn_probs; // [heads, T, T]
        Tensor ctx;        // [T, d]
        Tensor attn_out, resid1;
        Tensor ln2_mean, ln2_rstd, ln2_out;
        Tensor mlp_z, mlp_h, mlp_out, resid2;
    };
    std::vector<BlockTrace> blocks;
    Tensor token_grid; // [d, S/p, S/p]
    // fusion
    std::array<std::vector<Tensor>, 4> fuse_z, fuse_a;
    std::array<Tensor, 4> fused; // concat(skip k, branch k)
    // decoder
    std::array<Tensor, 4> up_deconv, up_cat, up_z, up_a; // stored at index k
    Tensor out_z;
    Tensor y; // [1, S, S]
};

/// Run the network, keeping intermediates. Validates parameter shapes.
ForwardTrace forward_trace(const NetConfig& cfg, const NetParams& params,
                           const Tensor& x);

/// Obstacle-probability prediction, shape [1, S, S], values in (0, 1).
Tensor forward(const NetConfig& cfg, const NetParams& params, const Tensor& x);

/// Gradients w.r.t. every parameter, shaped like NetParams. grad_y is
/// dLoss/dy for the trace's output.
NetParams backward_trace(const NetConfig& cfg, const NetParams& params,
                         const ForwardTrace& trace, const Tensor& grad_y);

/// Local map predictor interface: obstacle probabilities for the patch.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual ProbMap predict(const LocalPatch& obs) const = 0;
};

/// Passthrough baseline: Free -> 0, Uncertain -> 0.5, Obstacle -> 1.
class IdentityPredictor final : public Predictor {
public:
    ProbMap predict(const LocalPatch& obs) const override;
};

/// Upper bound for efficiency experiments: answers with the ground-truth
/// crop at the patch's origin (outside the map -> 0.5). Throws DomainError if
/// the patch's origin/center metadata is inconsistent.
class OraclePredictor final : public Predictor {
public:
    explicit OraclePredictor(TrinaryMap truth) : truth_(std::move(truth)) {}
    ProbMap predict(const LocalPatch& obs) const override;

private:
    TrinaryMap truth_;
};

/// Wraps a trained network.
class NetPredictor final : public Predictor {
public:
    NetPredictor(NetConfig cfg, NetParams params);
    ProbMap predict(const LocalPatch& obs) const override;

    const NetConfig& config() const { return cfg_; }
    const NetParams& params() const { return params_; }

private:
    NetConfig cfg_;
    NetParams params_;
};

template <typename F> void NetParams::for_each(F&& f) {
    for (int k = 0; k < 4; ++k) {
        const std::string s = "enc" + std::to_string(k) + ".";
        f(s + "w1", enc[k].w1);
        f(s + "b1", enc[k].b1);
        f(s + "w2", enc[k].w2);
        f(s + "b2", enc[k].b2);
    }
    f("patch.w", patch_w);
    f("patch.b", patch_b);
    f("pos", pos);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string s = "block" + std::to_string(i) + ".";
        TransformerBlock& blk = blocks[i];
        f(s + "ln1.g", blk.ln1_g);
        f(s + "ln1.b", blk.ln1_b);
        f(s + "qkv.w", blk.qkv_w);
        f(s + "qkv.b", blk.qkv_b);
        f(s + "proj.w", blk.proj_w);
        f(s + "proj.b", blk.proj_b);
        f(s + "ln2.g", blk.ln2_g);
        f(s + "ln2.b", blk.ln2_b);
        f(s + "mlp1.w", blk.mlp1_w);
        f(s + "mlp1.b", blk.mlp1_b);
        f(s + "mlp2.w", blk.mlp2_w);
        f(s + "mlp2.b", blk.mlp2_b);
    }
    for (int k = 0; k < 4; ++k) {
        const std::string s = "fuse" + std::to_string(k) + ".";
        for (std::size_t j = 0; j < fuse[k].w.size(); ++j) {
            f(s + "w" + std::to_string(j), fuse[k].w[j]);
            f(s + "b" + std::to_string(j), fuse[k].b[j]);
        }
    }
    for (int k = 0; k < 4; ++k) {
        const std::string s = "up" + std::to_string(k) + ".";
        f(s + "deconv.w", up[k].deconv_w);
        f(s + "deconv.b", up[k].deconv_b);
        f(s + "conv.w", up[k].conv_w);
        f(s + "conv.b", up[k].conv_b);
    }
    f("out.w", out_w);
    f("out.b", out_b);
}

template <typename F> void NetParams::for_each(F&& f) const {
    const_cast<NetParams*>(this)->for_each(
        [&](const std::string& name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
}

} // namespace sensemap
