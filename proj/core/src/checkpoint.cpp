#include "sensemap/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace sensemap {

namespace {

constexpr char kMagic[] = "SENSEMAP-CKPT-1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

nlohmann::json config_to_json(const NetConfig& cfg) {
    return nlohmann::json{{"side", cfg.side},   {"base", cfg.base},
                          {"patch", cfg.patch}, {"depth", cfg.depth},
                          {"heads", cfg.heads}, {"mlp_ratio", cfg.mlp_ratio}};
}

NetConfig config_from_json(const nlohmann::json& j) {
    NetConfig cfg;
    cfg.side = j.at("side").get<int>();
    cfg.base = j.at("base").get<int>();
    cfg.patch = j.at("patch").get<int>();
    cfg.depth = j.at("depth").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.mlp_ratio = j.at("mlp_ratio").get<int>();
    return cfg;
}

static_assert(sizeof(double) == 8);

} // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["config"] = config_to_json(ckpt.config);
    header["meta"] = ckpt.meta;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, t] : ckpt.tensors)
        tensors.push_back({{"name", name}, {"shape", t.shape()}});
    header["tensors"] = tensors;
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_checkpoint: cannot open " + path);
    out.write(kMagic, static_cast<std::streamsize>(kMagicLen));
    const std::uint64_t hlen = header_str.size();
    char lenbuf[8];
    for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<char>((hlen >> (8 * i)) & 0xff);
    out.write(lenbuf, 8);
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        // Raw doubles; this targets little-endian hosts, which the magic's
        // version would bump if that ever changes.
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw IoError("save_checkpoint: write failure on " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open " + path);

    char magic[kMagicLen];
    in.read(magic, static_cast<std::streamsize>(kMagicLen));
    if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0)
        throw FormatError("load_checkpoint: " + path + " is not a checkpoint file");

    char lenbuf[8];
    in.read(lenbuf, 8);
    if (!in) throw FormatError("load_checkpoint: truncated header length");
    std::uint64_t hlen = 0;
    for (int i = 0; i < 8; ++i)
        hlen |= static_cast<std::uint64_t>(static_cast<unsigned char>(lenbuf[i])) << (8 * i);
    if (hlen > (1u << 26)) throw FormatError("load_checkpoint: absurd header size");

    std::string header_str(hlen, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw FormatError("load_checkpoint: truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_checkpoint: bad header JSON: ") + e.what());
    }

    Checkpoint ckpt;
    ckpt.config = config_from_json(header.at("config"));
    if (header.contains("meta"))
        ckpt.meta = header.at("meta").get<std::map<std::string, std::string>>();
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in)
            throw FormatError("load_checkpoint: truncated tensor data for " + name);
        ckpt.tensors.push_back({name, std::move(t)});
    }
    return ckpt;
}

Checkpoint make_checkpoint(const NetConfig& cfg, const NetParams& params) {
    validate_params(cfg, params);
    Checkpoint ckpt;
    ckpt.config = cfg;
    params.for_each([&](const std::string& name, const Tensor& t) {
        ckpt.tensors.push_back({name, t});
    });
    return ckpt;
}

Checkpoint make_train_checkpoint(const NetConfig& cfg, const NetParams& params,
                                 const AdamState& opt, int next_epoch) {
    Checkpoint ckpt = make_checkpoint(cfg, params);
    opt.m.for_each([&](const std::string& name, const Tensor& t) {
        ckpt.tensors.push_back({"adam.m." + name, t});
    });
    opt.v.for_each([&](const std::string& name, const Tensor& t) {
        ckpt.tensors.push_back({"adam.v." + name, t});
    });
    ckpt.meta["adam.step"] = std::to_string(opt.step);
    ckpt.meta["next_epoch"] = std::to_string(next_epoch);
    return ckpt;
}

namespace {

const Tensor* find_tensor(const Checkpoint& ckpt, const std::string& name) {
    for (const auto& [n, t] : ckpt.tensors)
        if (n == name) return &t;
    return nullptr;
}

void fill_params(const Checkpoint& ckpt, const std::string& prefix, NetParams& out) {
    std::string missing;
    out.for_each([&](const std::string& name, Tensor& t) {
        if (!missing.empty()) return;
        const Tensor* src = find_tensor(ckpt, prefix + name);
        if (!src || src->shape() != t.shape()) {
            missing = prefix + name;
            return;
        }
        t = *src;
    });
    if (!missing.empty())
        throw FormatError("checkpoint: tensor " + missing + " missing or mis-shaped");
}

} // namespace

NetParams params_from_checkpoint(const Checkpoint& ckpt) {
    NetParams params = zero_params(ckpt.config);
    fill_params(ckpt, "", params);
    return params;
}

AdamState adam_from_checkpoint(const Checkpoint& ckpt) {
    AdamState state = AdamState::zeros(ckpt.config);
    fill_params(ckpt, "adam.m.", state.m);
    fill_params(ckpt, "adam.v.", state.v);
    const auto it = ckpt.meta.find("adam.step");
    if (it == ckpt.meta.end())
        throw FormatError("checkpoint: missing adam.step");
    state.step = std::stoll(it->second);
    return state;
}

} // namespace sensemap
