#pragma once

#include <string>

#include "cycleasr/params.hpp"

namespace cycleasr {

// Binary parameter container. Layout (all integers little-endian):
//   magic "CASR", u32 version, u64 parameter count, then per parameter in
//   registry order: u32 name length, name bytes, u32 ndim, ndim x i64 dims,
//   values as f64.
// save(load(save(x))) is byte-identical because ordering, names, and value
// encoding are all fixed.
void save_checkpoint(const ParamRegistry& params, const std::string& path);

// Fills the registry's existing tensors in place (identities survive, so an
// optimizer holding them keeps working). The file must contain exactly the
// registered names with matching shapes.
void load_checkpoint(ParamRegistry& params, const std::string& path);

}  // namespace cycleasr
