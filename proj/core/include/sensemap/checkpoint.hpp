#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sensemap/nnet.hpp"
#include "sensemap/training.hpp"

namespace sensemap {

/// Self-describing parameter container: a versioned magic string, a JSON
/// header listing the NetConfig plus (name, shape) of every tensor, then the
/// tensors' raw little-endian 64-bit floats in listed order.
struct Checkpoint {
    NetConfig config;
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::map<std::string, std::string> meta; // free-form provenance strings
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Network-only checkpoint (tensor names are the parameter schema names).
Checkpoint make_checkpoint(const NetConfig& cfg, const NetParams& params);

/// Checkpoint carrying optimizer state for resumable training; Adam moments
/// are stored as "adam.m.<name>" / "adam.v.<name>" and the step counter in
/// meta["adam.step"].
Checkpoint make_train_checkpoint(const NetConfig& cfg, const NetParams& params,
                                 const AdamState& opt, int next_epoch);

/// Rebuild parameters from a checkpoint; throws FormatError when a schema
/// tensor is missing or mis-shaped.
NetParams params_from_checkpoint(const Checkpoint& ckpt);

/// Rebuild optimizer state; requires the adam.* tensors to be present.
AdamState adam_from_checkpoint(const Checkpoint& ckpt);

} // namespace sensemap
