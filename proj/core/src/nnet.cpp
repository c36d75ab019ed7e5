#include "sensemap/nnet.hpp"

#include <cmath>

#include "nn_ops.hpp"
#include "sensemap/rng.hpp"

namespace sensemap {

namespace {

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int ilog2(int v) {
    int n = 0;
    while (v > 1) {
        v >>= 1;
        ++n;
    }
    return n;
}

enum class StepKind { Up, Down, Same };

struct BranchStep {
    StepKind kind;
    int in_ch, out_ch;
};

// Resize plan taking quarter k of the token grid (resolution S/p, d/4
// channels) to skip k's resolution S/2^k and channels b*2^k.
std::vector<BranchStep> branch_plan(const NetConfig& cfg, int k) {
    const int token_res = cfg.token_grid();
    const int target_res = cfg.side >> k;
    const int target_ch = cfg.base << k;
    const int d4 = cfg.embed_dim() / 4;

    std::vector<BranchStep> steps;
    if (target_res == token_res) {
        steps.push_back({StepKind::Same, d4, target_ch});
        return steps;
    }
    const bool up = target_res > token_res;
    const int n = up ? ilog2(target_res / token_res) : ilog2(token_res / target_res);
    for (int j = 0; j < n; ++j)
        steps.push_back({up ? StepKind::Up : StepKind::Down,
                         j == 0 ? d4 : target_ch, target_ch});
    return steps;
}

std::vector<int> step_weight_shape(const BranchStep& s) {
    switch (s.kind) {
        case StepKind::Up: return {s.in_ch, s.out_ch, 2, 2};
        case StepKind::Down: return {s.out_ch, s.in_ch, 2, 2};
        case StepKind::Same: return {s.out_ch, s.in_ch, 3, 3};
    }
    return {};
}

int step_fan_in(const BranchStep& s) {
    return s.kind == StepKind::Same ? s.in_ch * 9 : s.in_ch * 4;
}

} // namespace

void NetConfig::validate() const {
    if (side < 16 || side % 16 != 0)
        throw ConfigError("NetConfig: side must be a positive multiple of 16");
    if (!power_of_two(patch))
        throw ConfigError("NetConfig: patch must be a power of two");
    if (side % patch != 0)
        throw ConfigError("NetConfig: side must be divisible by patch");
    if (base < 1) throw ConfigError("NetConfig: base must be >= 1");
    if (depth < 1) throw ConfigError("NetConfig: depth must be >= 1");
    if (heads < 1 || embed_dim() % heads != 0)
        throw ConfigError("NetConfig: embed dim must divide by heads");
    if (embed_dim() % 4 != 0)
        throw ConfigError("NetConfig: embed dim must divide by 4");
    if (mlp_ratio < 1) throw ConfigError("NetConfig: mlp_ratio must be >= 1");
}

std::vector<std::pair<std::string, std::vector<int>>> param_schema(const NetConfig& cfg) {
    cfg.validate();
    const int b = cfg.base, d = cfg.embed_dim(), p = cfg.patch, t = cfg.tokens();
    std::vector<std::pair<std::string, std::vector<int>>> schema;

    int in_ch = 3;
    for (int k = 0; k < 4; ++k) {
        const int c = b << k;
        const std::string s = "enc" + std::to_string(k) + ".";
        schema.push_back({s + "w1", {c, in_ch, 3, 3}});
        schema.push_back({s + "b1", {c}});
        schema.push_back({s + "w2", {c, c, 3, 3}});
        schema.push_back({s + "b2", {c}});
        in_ch = c;
    }
    schema.push_back({"patch.w", {d, 3 * p * p}});
    schema.push_back({"patch.b", {d}});
    schema.push_back({"pos", {t, d}});
    for (int i = 0; i < cfg.depth; ++i) {
        const std::string s = "block" + std::to_string(i) + ".";
        schema.push_back({s + "ln1.g", {d}});
        schema.push_back({s + "ln1.b", {d}});
        schema.push_back({s + "qkv.w", {3 * d, d}});
        schema.push_back({s + "qkv.b", {3 * d}});
        schema.push_back({s + "proj.w", {d, d}});
        schema.push_back({s + "proj.b", {d}});
        schema.push_back({s + "ln2.g", {d}});
        schema.push_back({s + "ln2.b", {d}});
        schema.push_back({s + "mlp1.w", {cfg.mlp_ratio * d, d}});
        schema.push_back({s + "mlp1.b", {cfg.mlp_ratio * d}});
        schema.push_back({s + "mlp2.w", {d, cfg.mlp_ratio * d}});
        schema.push_back({s + "mlp2.b", {d}});
    }
    for (int k = 0; k < 4; ++k) {
        const std::string s = "fuse" + std::to_string(k) + ".";
        const auto plan = branch_plan(cfg, k);
        for (std::size_t j = 0; j < plan.size(); ++j) {
            schema.push_back({s + "w" + std::to_string(j), step_weight_shape(plan[j])});
            schema.push_back({s + "b" + std::to_string(j), {plan[j].out_ch}});
        }
    }
    for (int k = 0; k < 4; ++k) {
        const int c = b << k;
        const int in = k == 3 ? 8 * b : b << (k + 1);
        const std::string s = "up" + std::to_string(k) + ".";
        schema.push_back({s + "deconv.w", {in, c, 2, 2}});
        schema.push_back({s + "deconv.b", {c}});
        schema.push_back({s + "conv.w", {c, 3 * c, 3, 3}});
        schema.push_back({s + "conv.b", {c}});
    }
    schema.push_back({"out.w", {1, b, 1, 1}});
    schema.push_back({"out.b", {1}});
    return schema;
}

std::int64_t param_count(const NetConfig& cfg) {
    std::int64_t n = 0;
    for (const auto& [name, shape] : param_schema(cfg))
        n += static_cast<std::int64_t>(shape_size(shape));
    return n;
}

namespace {

NetParams build_params(const NetConfig& cfg, Rng* rng) {
    cfg.validate();
    NetParams params;
    params.blocks.resize(static_cast<std::size_t>(cfg.depth));
    const auto schema = param_schema(cfg);
    std::size_t idx = 0;

    auto next = [&](Tensor& t, double fan_in_or_zero, bool is_pos = false,
                    bool is_gain = false) {
        const auto& shape = schema[idx++].second;
        t = Tensor(shape);
        if (is_gain && rng) {
            // Norm gains start at 1 when initializing; gradient/optimizer
            // containers built without an rng stay all-zero.
            t.fill(1.0);
        } else if (rng && is_pos) {
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng->normal(0.0, 0.02);
        } else if (rng && fan_in_or_zero > 0.0) {
            const double bound = 1.0 / std::sqrt(fan_in_or_zero);
            for (std::size_t i = 0; i < t.size(); ++i)
                t[i] = rng->uniform(-bound, bound);
        }
    };

    const int b = cfg.base, d = cfg.embed_dim(), p = cfg.patch;
    int in_ch = 3;
    for (int k = 0; k < 4; ++k) {
        const int c = b << k;
        next(params.enc[k].w1, in_ch * 9.0);
        next(params.enc[k].b1, 0.0);
        next(params.enc[k].w2, c * 9.0);
        next(params.enc[k].b2, 0.0);
        in_ch = c;
    }
    next(params.patch_w, 3.0 * p * p);
    next(params.patch_b, 0.0);
    next(params.pos, 0.0, /*is_pos=*/true);
    for (auto& blk : params.blocks) {
        next(blk.ln1_g, 0.0, false, /*is_gain=*/true);
        next(blk.ln1_b, 0.0);
        next(blk.qkv_w, static_cast<double>(d));
        next(blk.qkv_b, 0.0);
        next(blk.proj_w, static_cast<double>(d));
        next(blk.proj_b, 0.0);
        next(blk.ln2_g, 0.0, false, true);
        next(blk.ln2_b, 0.0);
        next(blk.mlp1_w, static_cast<double>(d));
        next(blk.mlp1_b, 0.0);
        next(blk.mlp2_w, static_cast<double>(cfg.mlp_ratio) * d);
        next(blk.mlp2_b, 0.0);
    }
    for (int k = 0; k < 4; ++k) {
        const auto plan = branch_plan(cfg, k);
        params.fuse[k].w.resize(plan.size());
        params.fuse[k].b.resize(plan.size());
        for (std::size_t j = 0; j < plan.size(); ++j) {
            next(params.fuse[k].w[j], static_cast<double>(step_fan_in(plan[j])));
            next(params.fuse[k].b[j], 0.0);
        }
    }
    for (int k = 0; k < 4; ++k) {
        const int in = k == 3 ? 8 * b : b << (k + 1);
        const int c = b << k;
        next(params.up[k].deconv_w, in * 4.0);
        next(params.up[k].deconv_b, 0.0);
        next(params.up[k].conv_w, 3.0 * c * 9.0);
        next(params.up[k].conv_b, 0.0);
    }
    next(params.out_w, static_cast<double>(b));
    next(params.out_b, 0.0);
    return params;
}

} // namespace

NetParams zero_params(const NetConfig& cfg) { return build_params(cfg, nullptr); }

NetParams init_params(const NetConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    return build_params(cfg, &rng);
}

void validate_params(const NetConfig& cfg, const NetParams& params) {
    const auto schema = param_schema(cfg);
    if (params.blocks.size() != static_cast<std::size_t>(cfg.depth))
        throw ShapeError("params: block count " + std::to_string(params.blocks.size()) +
                         " != depth " + std::to_string(cfg.depth));
    std::size_t idx = 0;
    bool fuse_counts_ok = true;
    for (int k = 0; k < 4; ++k) {
        const auto plan = branch_plan(cfg, k);
        fuse_counts_ok = fuse_counts_ok && params.fuse[k].w.size() == plan.size() &&
                         params.fuse[k].b.size() == plan.size();
    }
    if (!fuse_counts_ok) throw ShapeError("params: fusion branch step count mismatch");
    std::string bad;
    params.for_each([&](const std::string& name, const Tensor& t) {
        if (!bad.empty()) return;
        if (idx >= schema.size() || schema[idx].first != name ||
            schema[idx].second != t.shape()) {
            bad = name + " has shape " + t.shape_string() + ", expected " +
                  (idx < schema.size() ? Tensor::shape_string(schema[idx].second)
                                       : std::string("<none>"));
        }
        ++idx;
    });
    if (!bad.empty()) throw ShapeError("params: " + bad);
    if (idx != schema.size()) throw ShapeError("params: tensor count mismatch");
}

Tensor encode_input(const LocalPatch& obs, int side) {
    if (obs.side != side || obs.cells.height() != side || obs.cells.width() != side)
        throw ShapeError("encode_input: patch side " + std::to_string(obs.side) +
                         " != expected " + std::to_string(side));
    Tensor x({3, side, side});
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            const int ch = static_cast<int>(obs.cells(r, c));
            x[(static_cast<std::size_t>(ch) * side + r) * side + c] = 1.0;
        }
    }
    return x;
}

namespace {

// x [3, S, S] -> [T, 3p^2]; token t = gr*(S/p)+gc, feature (c, pr, pc).
Tensor patchify(const Tensor& x, int p) {
    const int s = x.dim(1);
    const int g = s / p;
    Tensor out({g * g, 3 * p * p});
    for (int gr = 0; gr < g; ++gr)
        for (int gc = 0; gc < g; ++gc) {
            double* row = out.data() + static_cast<std::size_t>(gr * g + gc) * 3 * p * p;
            for (int c = 0; c < 3; ++c)
                for (int pr = 0; pr < p; ++pr)
                    for (int pc = 0; pc < p; ++pc)
                        row[(c * p + pr) * p + pc] =
                            x[(static_cast<std::size_t>(c) * s + gr * p + pr) * s +
                              gc * p + pc];
        }
    return out;
}

// tokens [T, d] -> grid [d, G, G]
Tensor tokens_to_grid(const Tensor& tokens, int g) {
    const int d = tokens.dim(1);
    Tensor grid({d, g, g});
    for (int ch = 0; ch < d; ++ch)
        for (int gr = 0; gr < g; ++gr)
            for (int gc = 0; gc < g; ++gc)
                grid[(static_cast<std::size_t>(ch) * g + gr) * g + gc] =
                    tokens[static_cast<std::size_t>(gr * g + gc) * d + ch];
    return grid;
}

void grid_grad_to_tokens(const Tensor& ggrid, Tensor& gtokens) {
    const int d = ggrid.dim(0), g = ggrid.dim(1);
    for (int ch = 0; ch < d; ++ch)
        for (int gr = 0; gr < g; ++gr)
            for (int gc = 0; gc < g; ++gc)
                gtokens[static_cast<std::size_t>(gr * g + gc) * d + ch] +=
                    ggrid[(static_cast<std::size_t>(ch) * g + gr) * g + gc];
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const int h = a.dim(1), w = a.dim(2);
    Tensor out({a.dim(0) + b.dim(0), h, w});
    std::copy(a.data(), a.data() + a.size(), out.data());
    std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
    return out;
}

// Multi-head self-attention on pre-normed tokens; fills probs/ctx.
void attention(const Tensor& qkv, int heads, Tensor& probs, Tensor& ctx) {
    const int t = qkv.dim(0);
    const int d = qkv.dim(1) / 3;
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    probs = Tensor({heads, t, t});
    ctx = Tensor({t, d});
    std::vector<double> scores(static_cast<std::size_t>(t));
    for (int h = 0; h < heads; ++h) {
        const int qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
        for (int i = 0; i < t; ++i) {
            const double* qi = qkv.data() + static_cast<std::size_t>(i) * 3 * d + qo;
            double mx = -1e300;
            for (int j = 0; j < t; ++j) {
                const double* kj = qkv.data() + static_cast<std::size_t>(j) * 3 * d + ko;
                double acc = 0.0;
                for (int c = 0; c < dh; ++c) acc += qi[c] * kj[c];
                scores[static_cast<std::size_t>(j)] = acc * scale;
                mx = std::max(mx, acc * scale);
            }
            double denom = 0.0;
            double* prow = probs.data() + (static_cast<std::size_t>(h) * t + i) * t;
            for (int j = 0; j < t; ++j) {
                prow[j] = std::exp(scores[static_cast<std::size_t>(j)] - mx);
                denom += prow[j];
            }
            for (int j = 0; j < t; ++j) prow[j] /= denom;
            double* ci = ctx.data() + static_cast<std::size_t>(i) * d + h * dh;
            for (int j = 0; j < t; ++j) {
                const double pij = prow[j];
                const double* vj = qkv.data() + static_cast<std::size_t>(j) * 3 * d + vo;
                for (int c = 0; c < dh; ++c) ci[c] += pij * vj[c];
            }
        }
    }
}

void attention_backward(const Tensor& qkv, const Tensor& probs, int heads,
                        const Tensor& gctx, Tensor& gqkv) {
    const int t = qkv.dim(0);
    const int d = qkv.dim(1) / 3;
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> gprob(static_cast<std::size_t>(t));
    std::vector<double> gscore(static_cast<std::size_t>(t));
    for (int h = 0; h < heads; ++h) {
        const int qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
        for (int i = 0; i < t; ++i) {
            const double* prow = probs.data() + (static_cast<std::size_t>(h) * t + i) * t;
            const double* gci = gctx.data() + static_cast<std::size_t>(i) * d + h * dh;
            // d ctx/d probs and d ctx/d v
            for (int j = 0; j < t; ++j) {
                const double* vj = qkv.data() + static_cast<std::size_t>(j) * 3 * d + vo;
                double* gvj = gqkv.data() + static_cast<std::size_t>(j) * 3 * d + vo;
                double acc = 0.0;
                for (int c = 0; c < dh; ++c) {
                    acc += gci[c] * vj[c];
                    gvj[c] += prow[j] * gci[c];
                }
                gprob[static_cast<std::size_t>(j)] = acc;
            }
            double dot = 0.0;
            for (int j = 0; j < t; ++j) dot += gprob[static_cast<std::size_t>(j)] * prow[j];
            for (int j = 0; j < t; ++j)
                gscore[static_cast<std::size_t>(j)] =
                    prow[j] * (gprob[static_cast<std::size_t>(j)] - dot);
            const double* qi = qkv.data() + static_cast<std::size_t>(i) * 3 * d + qo;
            double* gqi = gqkv.data() + static_cast<std::size_t>(i) * 3 * d + qo;
            for (int j = 0; j < t; ++j) {
                const double gs = gscore[static_cast<std::size_t>(j)] * scale;
                if (gs == 0.0) continue;
                const double* kj = qkv.data() + static_cast<std::size_t>(j) * 3 * d + ko;
                double* gkj = gqkv.data() + static_cast<std::size_t>(j) * 3 * d + ko;
                for (int c = 0; c < dh; ++c) {
                    gqi[c] += gs * kj[c];
                    gkj[c] += gs * qi[c];
                }
            }
        }
    }
}

void add_inplace(Tensor& a, const Tensor& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

} // namespace

ForwardTrace forward_trace(const NetConfig& cfg, const NetParams& params,
                           const Tensor& x) {
    validate_params(cfg, params);
    const int s = cfg.side;
    if (x.shape() != std::vector<int>{3, s, s})
        throw ShapeError("forward: input shape " + x.shape_string() + ", expected [3, " +
                         std::to_string(s) + ", " + std::to_string(s) + "]");
    x.assert_finite("forward input");

    ForwardTrace tr;
    tr.x = x;

    // Convolutional encoder; skip k is the pre-stride activation of stage k.
    const Tensor* h = &tr.x;
    for (int k = 0; k < 4; ++k) {
        ops::conv2d(*h, params.enc[k].w1, params.enc[k].b1, 1, 1, tr.enc_z1[k]);
        ops::relu(tr.enc_z1[k], tr.enc_a1[k]);
        ops::conv2d(tr.enc_a1[k], params.enc[k].w2, params.enc[k].b2, 2, 1, tr.enc_z2[k]);
        ops::relu(tr.enc_z2[k], tr.enc_a2[k]);
        tr.enc_a2[k].assert_finite("enc" + std::to_string(k));
        h = &tr.enc_a2[k];
    }

    // Transformer branch.
    tr.patches = patchify(x, cfg.patch);
    ops::linear(tr.patches, params.patch_w, params.patch_b, tr.tokens_pre);
    tr.tokens0 = tr.tokens_pre;
    add_inplace(tr.tokens0, params.pos);

    const Tensor* tok = &tr.tokens0;
    tr.blocks.resize(params.blocks.size());
    for (std::size_t i = 0; i < params.blocks.size(); ++i) {
        const TransformerBlock& blk = params.blocks[i];
        auto& bt = tr.blocks[i];
        ops::layernorm(*tok, blk.ln1_g, blk.ln1_b, bt.ln1_out, bt.ln1_mean, bt.ln1_rstd);
        ops::linear(bt.ln1_out, blk.qkv_w, blk.qkv_b, bt.qkv);
        attention(bt.qkv, cfg.heads, bt.attn_probs, bt.ctx);
        ops::linear(bt.ctx, blk.proj_w, blk.proj_b, bt.attn_out);
        bt.resid1 = *tok;
        add_inplace(bt.resid1, bt.attn_out);
        ops::layernorm(bt.resid1, blk.ln2_g, blk.ln2_b, bt.ln2_out, bt.ln2_mean,
                       bt.ln2_rstd);
        ops::linear(bt.ln2_out, blk.mlp1_w, blk.mlp1_b, bt.mlp_z);
        ops::gelu(bt.mlp_z, bt.mlp_h);
        ops::linear(bt.mlp_h, blk.mlp2_w, blk.mlp2_b, bt.mlp_out);
        bt.resid2 = bt.resid1;
        add_inplace(bt.resid2, bt.mlp_out);
        bt.resid2.assert_finite("block" + std::to_string(i));
        tok = &bt.resid2;
    }
    tr.token_grid = tokens_to_grid(*tok, cfg.token_grid());

    // Four-way channel split, each quarter resized onto its skip.
    const int d4 = cfg.embed_dim() / 4;
    const int g = cfg.token_grid();
    for (int k = 0; k < 4; ++k) {
        Tensor part({d4, g, g});
        std::copy(tr.token_grid.data() + static_cast<std::size_t>(k) * d4 * g * g,
                  tr.token_grid.data() + static_cast<std::size_t>(k + 1) * d4 * g * g,
                  part.data());
        const auto plan = branch_plan(cfg, k);
        tr.fuse_z[k].resize(plan.size());
        tr.fuse_a[k].resize(plan.size());
        const Tensor* cur = &part;
        for (std::size_t j = 0; j < plan.size(); ++j) {
            switch (plan[j].kind) {
                case StepKind::Up:
                    ops::deconv2x2(*cur, params.fuse[k].w[j], params.fuse[k].b[j],
                                   tr.fuse_z[k][j]);
                    break;
                case StepKind::Down:
                    ops::conv2x2_down(*cur, params.fuse[k].w[j], params.fuse[k].b[j],
                                      tr.fuse_z[k][j]);
                    break;
                case StepKind::Same:
                    ops::conv2d(*cur, params.fuse[k].w[j], params.fuse[k].b[j], 1, 1,
                                tr.fuse_z[k][j]);
                    break;
            }
            ops::relu(tr.fuse_z[k][j], tr.fuse_a[k][j]);
            cur = &tr.fuse_a[k][j];
        }
        tr.fused[k] = concat_channels(tr.enc_a1[k], *cur);
        tr.fused[k].assert_finite("fuse" + std::to_string(k));
    }

    // Decoder from the bottleneck, consuming fused skips deep to shallow.
    const Tensor* dec = &tr.enc_a2[3];
    for (int k = 3; k >= 0; --k) {
        ops::deconv2x2(*dec, params.up[k].deconv_w, params.up[k].deconv_b,
                       tr.up_deconv[k]);
        tr.up_cat[k] = concat_channels(tr.up_deconv[k], tr.fused[k]);
        ops::conv2d(tr.up_cat[k], params.up[k].conv_w, params.up[k].conv_b, 1, 1,
                    tr.up_z[k]);
        ops::relu(tr.up_z[k], tr.up_a[k]);
        tr.up_a[k].assert_finite("up" + std::to_string(k));
        dec = &tr.up_a[k];
    }

    ops::conv2d(*dec, params.out_w, params.out_b, 1, 0, tr.out_z);
    tr.y = Tensor({1, s, s});
    for (std::size_t i = 0; i < tr.y.size(); ++i) tr.y[i] = ops::sigmoid(tr.out_z[i]);
    tr.y.assert_finite("output");
    return tr;
}

Tensor forward(const NetConfig& cfg, const NetParams& params, const Tensor& x) {
    return forward_trace(cfg, params, x).y;
}

NetParams backward_trace(const NetConfig& cfg, const NetParams& params,
                         const ForwardTrace& tr, const Tensor& grad_y) {
    if (!grad_y.same_shape(tr.y))
        throw ShapeError("backward: grad_y shape " + grad_y.shape_string() +
                         " != output " + tr.y.shape_string());
    NetParams grads = zero_params(cfg);

    // Through the output sigmoid.
    Tensor g_outz(tr.out_z.shape());
    for (std::size_t i = 0; i < g_outz.size(); ++i)
        g_outz[i] = grad_y[i] * tr.y[i] * (1.0 - tr.y[i]);

    Tensor g_dec(tr.up_a[0].shape());
    ops::conv2d_backward(tr.up_a[0], params.out_w, g_outz, 1, 0, g_dec, grads.out_w,
                         grads.out_b);

    // Decoder, shallow to deep.
    std::array<Tensor, 4> g_fused;
    for (int k = 0; k <= 3; ++k) {
        Tensor g_z(tr.up_z[k].shape());
        ops::relu_backward(tr.up_z[k], g_dec, g_z);
        g_z.assert_finite("grad up" + std::to_string(k));
        Tensor g_cat(tr.up_cat[k].shape());
        ops::conv2d_backward(tr.up_cat[k], params.up[k].conv_w, g_z, 1, 1, g_cat,
                             grads.up[k].conv_w, grads.up[k].conv_b);
        // split the concat gradient
        Tensor g_up(tr.up_deconv[k].shape());
        std::copy(g_cat.data(), g_cat.data() + g_up.size(), g_up.data());
        g_fused[k] = Tensor(tr.fused[k].shape());
        std::copy(g_cat.data() + g_up.size(), g_cat.data() + g_cat.size(),
                  g_fused[k].data());
        const Tensor& below = k == 3 ? tr.enc_a2[3] : tr.up_a[k + 1];
        Tensor g_below(below.shape());
        ops::deconv2x2_backward(below, params.up[k].deconv_w, g_up, g_below,
                                grads.up[k].deconv_w, grads.up[k].deconv_b);
        g_dec = std::move(g_below);
    }
    // g_dec now holds the gradient at the encoder bottleneck (enc_a2[3]).

    // Fusion branches: split each fused gradient into skip and branch parts,
    // run the branch stacks backward, and collect the token-grid gradient.
    const int d4 = cfg.embed_dim() / 4;
    const int g = cfg.token_grid();
    std::array<Tensor, 4> g_skip;
    Tensor g_grid({cfg.embed_dim(), g, g});
    for (int k = 0; k < 4; ++k) {
        const Tensor& skip = tr.enc_a1[k];
        g_skip[k] = Tensor(skip.shape());
        std::copy(g_fused[k].data(), g_fused[k].data() + g_skip[k].size(),
                  g_skip[k].data());
        const auto plan = branch_plan(cfg, k);
        Tensor g_branch(tr.fuse_a[k].back().shape());
        std::copy(g_fused[k].data() + g_skip[k].size(),
                  g_fused[k].data() + g_fused[k].size(), g_branch.data());
        Tensor part({d4, g, g});
        std::copy(tr.token_grid.data() + static_cast<std::size_t>(k) * d4 * g * g,
                  tr.token_grid.data() + static_cast<std::size_t>(k + 1) * d4 * g * g,
                  part.data());
        for (int j = static_cast<int>(plan.size()) - 1; j >= 0; --j) {
            Tensor g_z(tr.fuse_z[k][j].shape());
            ops::relu_backward(tr.fuse_z[k][j], g_branch, g_z);
            const Tensor& in = j == 0 ? part : tr.fuse_a[k][j - 1];
            Tensor g_in(in.shape());
            switch (plan[j].kind) {
                case StepKind::Up:
                    ops::deconv2x2_backward(in, params.fuse[k].w[j], g_z, g_in,
                                            grads.fuse[k].w[j], grads.fuse[k].b[j]);
                    break;
                case StepKind::Down:
                    ops::conv2x2_down_backward(in, params.fuse[k].w[j], g_z, g_in,
                                               grads.fuse[k].w[j], grads.fuse[k].b[j]);
                    break;
                case StepKind::Same:
                    ops::conv2d_backward(in, params.fuse[k].w[j], g_z, 1, 1, g_in,
                                         grads.fuse[k].w[j], grads.fuse[k].b[j]);
                    break;
            }
            g_branch = std::move(g_in);
        }
        g_branch.assert_finite("grad fuse" + std::to_string(k));
        std::copy(g_branch.data(), g_branch.data() + g_branch.size(),
                  g_grid.data() + static_cast<std::size_t>(k) * d4 * g * g);
    }

    // Token grid back to token gradients.
    Tensor g_tok({cfg.tokens(), cfg.embed_dim()});
    grid_grad_to_tokens(g_grid, g_tok);

    // Transformer blocks in reverse.
    for (int i = static_cast<int>(params.blocks.size()) - 1; i >= 0; --i) {
        const TransformerBlock& blk = params.blocks[i];
        const auto& bt = tr.blocks[static_cast<std::size_t>(i)];
        auto& gblk = grads.blocks[static_cast<std::size_t>(i)];
        const Tensor& block_in =
            i == 0 ? tr.tokens0 : tr.blocks[static_cast<std::size_t>(i - 1)].resid2;

        // resid2 = resid1 + mlp_out
        Tensor g_mlp_out = g_tok; // alias copy
        Tensor g_resid1 = std::move(g_tok);

        Tensor g_mlp_h(bt.mlp_h.shape());
        ops::linear_backward(bt.mlp_h, blk.mlp2_w, g_mlp_out, g_mlp_h, gblk.mlp2_w,
                             gblk.mlp2_b);
        Tensor g_mlp_z(bt.mlp_z.shape());
        ops::gelu_backward(bt.mlp_z, g_mlp_h, g_mlp_z);
        Tensor g_ln2(bt.ln2_out.shape());
        ops::linear_backward(bt.ln2_out, blk.mlp1_w, g_mlp_z, g_ln2, gblk.mlp1_w,
                             gblk.mlp1_b);
        ops::layernorm_backward(bt.resid1, blk.ln2_g, bt.ln2_mean, bt.ln2_rstd, g_ln2,
                                g_resid1, gblk.ln2_g, gblk.ln2_b);

        // resid1 = block_in + attn_out
        Tensor g_attn_out = g_resid1;
        Tensor g_in = std::move(g_resid1);

        Tensor g_ctx(bt.ctx.shape());
        ops::linear_backward(bt.ctx, blk.proj_w, g_attn_out, g_ctx, gblk.proj_w,
                             gblk.proj_b);
        Tensor g_qkv(bt.qkv.shape());
        attention_backward(bt.qkv, bt.attn_probs, cfg.heads, g_ctx, g_qkv);
        Tensor g_ln1(bt.ln1_out.shape());
        ops::linear_backward(bt.ln1_out, blk.qkv_w, g_qkv, g_ln1, gblk.qkv_w,
                             gblk.qkv_b);
        ops::layernorm_backward(block_in, blk.ln1_g, bt.ln1_mean, bt.ln1_rstd, g_ln1,
                                g_in, gblk.ln1_g, gblk.ln1_b);
        g_in.assert_finite("grad block" + std::to_string(i));
        g_tok = std::move(g_in);
    }

    // tokens0 = tokens_pre + pos
    add_inplace(grads.pos, g_tok);
    Tensor g_patches(tr.patches.shape());
    ops::linear_backward(tr.patches, params.patch_w, g_tok, g_patches, grads.patch_w,
                         grads.patch_b);
    // patchify consumes the input image; no parameter gradient remains there.

    // Encoder stages in reverse; g_dec carries the bottleneck gradient and
    // g_skip[k] joins at each stage's first conv.
    for (int k = 3; k >= 0; --k) {
        Tensor g_z2(tr.enc_z2[k].shape());
        ops::relu_backward(tr.enc_z2[k], g_dec, g_z2);
        Tensor g_a1(tr.enc_a1[k].shape());
        ops::conv2d_backward(tr.enc_a1[k], params.enc[k].w2, g_z2, 2, 1, g_a1,
                             grads.enc[k].w2, grads.enc[k].b2);
        add_inplace(g_a1, g_skip[k]);
        Tensor g_z1(tr.enc_z1[k].shape());
        ops::relu_backward(tr.enc_z1[k], g_a1, g_z1);
        const Tensor& in = k == 0 ? tr.x : tr.enc_a2[k - 1];
        Tensor g_in(in.shape());
        ops::conv2d_backward(in, params.enc[k].w1, g_z1, 1, 1, g_in, grads.enc[k].w1,
                             grads.enc[k].b1);
        g_in.assert_finite("grad enc" + std::to_string(k));
        g_dec = std::move(g_in);
    }

    return grads;
}

ProbMap IdentityPredictor::predict(const LocalPatch& obs) const {
    ProbMap out(obs.side, obs.side);
    for (int r = 0; r < obs.side; ++r)
        for (int c = 0; c < obs.side; ++c)
            out(r, c) = cell_value(obs.cells(r, c));
    return out;
}

ProbMap OraclePredictor::predict(const LocalPatch& obs) const {
    if (obs.side <= 0 || obs.side % 2 != 0 ||
        obs.center.row != obs.origin.row + obs.side / 2 ||
        obs.center.col != obs.origin.col + obs.side / 2)
        throw DomainError("OraclePredictor: patch origin metadata missing or inconsistent");
    ProbMap out(obs.side, obs.side);
    for (int r = 0; r < obs.side; ++r) {
        for (int c = 0; c < obs.side; ++c) {
            const Cell g{obs.origin.row + r, obs.origin.col + c};
            if (!truth_.in_bounds(g)) {
                out(r, c) = 0.5;
            } else {
                out(r, c) = truth_.at(g) == CellState::Obstacle ? 1.0 : 0.0;
            }
        }
    }
    return out;
}

NetPredictor::NetPredictor(NetConfig cfg, NetParams params)
    : cfg_(cfg), params_(std::move(params)) {
    validate_params(cfg_, params_);
}

ProbMap NetPredictor::predict(const LocalPatch& obs) const {
    const Tensor x = encode_input(obs, cfg_.side);
    const Tensor y = forward(cfg_, params_, x);
    ProbMap out(cfg_.side, cfg_.side);
    for (int r = 0; r < cfg_.side; ++r)
        for (int c = 0; c < cfg_.side; ++c)
            out(r, c) = y[static_cast<std::size_t>(r) * cfg_.side + c];
    return out;
}

} // namespace sensemap
