#pragma once

#include <string>

#include "bfcdn/network.hpp"

namespace bfcdn {

// Binary checkpoint: "BFCDN1\n" header, then per parameter
//   u32 LE name length, UTF-8 name, u32 LE rank, u32 LE dims, f32 LE values,
// followed by a "CONFIG\n" sentinel and the network config as key=value text.
void save_checkpoint(const std::string& path, const Model& model);

Model load_checkpoint(const std::string& path);

}  // namespace bfcdn
