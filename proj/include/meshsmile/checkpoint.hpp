#pragma once

#include <string>

#include "meshsmile/layers.hpp"

namespace meshsmile {

// Weight container: magic "MSWT", version u16, record count u32, then per
// record a length-prefixed name, a rank-prefixed shape, and the f32 values,
// all little-endian. Values narrow to f32 on disk.
void save_checkpoint(ParamStore& store, const std::string& path);

// Fills an already-constructed store by name. The file must carry exactly the
// store's parameter set with matching shapes.
void load_checkpoint(ParamStore& store, const std::string& path);

}  // namespace meshsmile
