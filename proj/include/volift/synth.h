#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "volift/volume.h"

namespace volift {

// Seeded 8-bit cube resembling an EM stack: smoothed noise background with a
// few dark membrane-like filaments and mild sensor noise.
Volume3D synth_cube(Shape shape, std::uint64_t seed);

// Independent uniform 8-bit voxels.
Volume3D random_cube(Shape shape, std::uint64_t seed);

// Writes cube_000.v3d ... into dir and returns the paths.
std::vector<std::string> write_synth_dataset(const std::string& dir, std::size_t count, Shape shape,
                                             std::uint64_t seed);

} // namespace volift
