#pragma once

#include <string>

#include <json.hpp>

#include "ctrl/tensor.hpp"

namespace ctrl {

// Checkpoint file: 8-byte magic, little-endian u64 manifest length, JSON
// manifest, then a flat little-endian f64 blob. The manifest maps each
// parameter name to shape, dtype and byte offset into the blob; `meta`
// carries caller-defined run information. Round trips are bit-exact.

void save_checkpoint(const std::string& path, const ParamStore& params, const nlohmann::json& meta);

// Meta section only; cheap way to recover the run configuration.
nlohmann::json load_checkpoint_meta(const std::string& path);

// Loads values into already-registered parameters. Every registered name
// must appear in the file with a matching shape and vice versa.
void load_checkpoint(const std::string& path, ParamStore& params);

}  // namespace ctrl
