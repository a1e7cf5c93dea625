#pragma once

#include <cstdint>
#include <vector>

#include "repairlab/image.hpp"
#include "repairlab/sim/track.hpp"
#include "repairlab/sim/vehicle.hpp"

namespace repairlab::sim {

/// Forward-facing pinhole camera over flat ground: sky band above the horizon, checkered
/// grass, gray road with white edge lines and a dashed yellow center line. Output is
/// quantized to 8-bit levels so PNG round trips are lossless.
Image render_observation(const Track& track, const VehicleState& state, const SimConfig& config);

/// Per-pixel road mask (road surface or edge line at the pixel center), row-major H*W.
std::vector<std::uint8_t> render_road_mask(const Track& track, const VehicleState& state,
                                           const SimConfig& config);

}  // namespace repairlab::sim
