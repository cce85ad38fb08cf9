#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "volift/coder.h"
#include "volift/lifting.h"
#include "volift/params.h"
#include "volift/volume.h"

namespace volift {

enum class CodecMode { Lossy, Lossless };

struct CodecConfig {
    CodecMode mode = CodecMode::Lossy;
    int levels = 2;
    std::optional<double> qs; // overrides the model's trained step in lossy mode
};

// q = round_half_away(y / qs)
Volume3D quantize(const Volume3D& band, double qs);
// y = q * qs
Volume3D dequantize(const Volume3D& q, double qs);

// Working domain of the transform. Lossy: v / 255 - 1/2. Lossless: v - 128,
// which keeps every voxel an integer.
Volume3D to_working_domain(const Volume3D& u8, CodecMode mode);
// Inverse of the lossy mapping: clamp to [0, 1] and round to 8 bits.
Volume3D lossy_to_u8(const Volume3D& working);

// Transform settings per mode: float lifting at unit scale for lossy data,
// integer lifting at scale 255 for raw 8-bit data.
LiftConfig lift_config_for(CodecMode mode, int levels = 2);

std::vector<std::uint8_t> encode(const Volume3D& v, const ParamStore& model, const CodecConfig& cfg);
Volume3D decode(std::span<const std::uint8_t> bytes, const ParamStore& model);

// Lossy reconstruction before post-processing, for analysis.
Volume3D decode_without_postprocessing(std::span<const std::uint8_t> bytes, const ParamStore& model);

double bits_per_voxel(std::size_t stream_bytes, const Shape& original);

} // namespace volift
