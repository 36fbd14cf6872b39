#pragma once

#include <string>

#include "adprog/optim.hpp"

namespace adprog::num {

// Model checkpoint: a short text manifest followed by a packed little-endian
// float32 payload. Parameters are stored in registration order; optimizer
// state is deliberately excluded. Values quantize to float32 on save, so
// save -> load -> save reproduces the file byte for byte.
//
//   ADPROG_CKPT v1
//   config <single-line JSON>
//   tensors <count>
//   <name> <rank> <dim...> <element-offset>   (one line per tensor)
//   payload <total-float-count>
//   <binary float32 data, little endian>
void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& config_json);

// Loads a checkpoint into a fresh store. The manifest's config line is
// returned through config_json_out when non-null.
ParamStore load_checkpoint(const std::string& path, std::string* config_json_out = nullptr);

}  // namespace adprog::num
