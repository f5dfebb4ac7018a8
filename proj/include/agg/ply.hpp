#pragma once

#include "agg/gaussian.hpp"

#include <filesystem>

namespace agg {

/// Binary little-endian PLY. Vertex properties x,y,z,red,green,blue,opacity are
/// written as doubles so a round trip is bit-exact; the shared scale and rotation
/// travel in `comment agg_scale <s>` and `comment agg_rotation <w> <x> <y> <z>`.
void export_ply(const GaussianSet& set, const std::filesystem::path& path);

/// Reads files written by export_ply. float/double/uchar property types are
/// accepted; unknown vertex properties are skipped. A missing scale comment
/// falls back to canonical_scale(N, 0.03).
GaussianSet import_ply(const std::filesystem::path& path);

}  // namespace agg
