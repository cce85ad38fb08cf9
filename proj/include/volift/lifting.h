#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "volift/nn3d.h"
#include "volift/volume.h"

namespace volift {

// A predict or update operator of the lifting chain. apply() may record what
// adjoint() needs; adjoint() returns the input gradient and accumulates any
// parameter gradients.
class LiftOperator {
public:
    virtual ~LiftOperator() = default;
    virtual Volume3D apply(const Volume3D& in, NetCache* cache) const = 0;
    virtual Volume3D adjoint(const NetCache& cache, const Volume3D& grad_out) = 0;
};

// x -> scale * net(x / scale). The lossless path runs on raw 8-bit integers
// with scale 255 so that the network sees the same value range as in the
// normalized lossy path.
class ScaledNetOperator : public LiftOperator {
public:
    ScaledNetOperator(LiftNet& net, double scale) : net_(&net), mutable_net_(&net), scale_(scale) {}
    ScaledNetOperator(const LiftNet& net, double scale) : net_(&net), scale_(scale) {}

    Volume3D apply(const Volume3D& in, NetCache* cache) const override;
    Volume3D adjoint(const NetCache& cache, const Volume3D& grad_out) override;

private:
    const LiftNet* net_;
    LiftNet* mutable_net_ = nullptr;
    double scale_;
};

enum class LiftMode { Float, Integer };

struct LiftConfig {
    int steps = 2;  // (predict, update) pairs per axis pass
    int levels = 2; // pyramid depth, 1..4
    LiftMode mode = LiftMode::Float;
    double value_scale = 1.0;
};

// Round half away from zero.
inline double round_half_away(double x) { return std::round(x); }

std::pair<Volume3D, Volume3D> split_axis(const Volume3D& v, int axis);
Volume3D merge_axis(const Volume3D& even, const Volume3D& odd, int axis);

// One recorded "target += sign * op(source)" update of the (low, high) pair.
struct LiftStep {
    bool predict;      // op is P (target high, source low) or U (target low, source high)
    double sign;
    NetCache cache;
};

struct LiftRecord {
    int axis = 0;
    std::vector<LiftStep> steps;
};

// Starting from (low, high) = (even, odd): high -= P(low); low += U(high); repeated cfg.steps times.
std::pair<Volume3D, Volume3D> lift_axis_forward(const Volume3D& v, int axis, const LiftOperator& predict,
                                                const LiftOperator& update, const LiftConfig& cfg,
                                                LiftRecord* record = nullptr);
Volume3D lift_axis_inverse(const Volume3D& low, const Volume3D& high, int axis, const LiftOperator& predict,
                           const LiftOperator& update, const LiftConfig& cfg, LiftRecord* record = nullptr);

// Adjoints of the float-mode passes.
Volume3D lift_axis_forward_adjoint(const LiftRecord& record, const Volume3D& grad_low,
                                   const Volume3D& grad_high, LiftOperator& predict, LiftOperator& update);
std::pair<Volume3D, Volume3D> lift_axis_inverse_adjoint(const LiftRecord& record, const Volume3D& grad,
                                                        LiftOperator& predict, LiftOperator& update);

struct Subband {
    std::string label;
    int level = 1;
    Volume3D data;
};

// Bands ordered deepest level first: LLL, HLL, LHL, HHL, LLH, HLH, LHH, HHH of
// the deepest level, then the seven details of each shallower level in the
// same label order. Label letters are (vertical, horizontal, axial).
struct SubbandPyramid {
    int levels = 0;
    std::vector<Subband> bands;
    Shape original_shape{0, 0, 0};
    Shape padded_shape{0, 0, 0};

    std::size_t voxel_count() const;
    std::size_t band_count() const { return bands.size(); }
    // Same layout with zero-valued bands.
    SubbandPyramid zeros_like() const;
};

inline constexpr std::array<const char*, 8> kBandLabels = {"LLL", "HLL", "LHL", "HHL",
                                                          "LLH", "HLH", "LHH", "HHH"};

std::size_t band_count_for_levels(int levels);
// Position in SubbandPyramid::bands of (level, label index); label 0 only exists at the deepest level.
std::size_t band_position(int levels, int level, int label);

// Forward/inverse 3-D transform with optional recording for the adjoints.
class LiftingTransform {
public:
    LiftingTransform(LiftOperator& predict, LiftOperator& update, LiftConfig cfg);

    const LiftConfig& config() const { return cfg_; }
    void set_recording(bool on) { recording_ = on; }

    SubbandPyramid forward(const Volume3D& v);
    Volume3D inverse(const SubbandPyramid& p);

    // Adjoint of the last recorded forward: gradient w.r.t. its input.
    Volume3D forward_adjoint(const SubbandPyramid& grad);
    // Adjoint of the last recorded inverse: gradient w.r.t. its bands.
    SubbandPyramid inverse_adjoint(const Volume3D& grad);

private:
    struct LevelRecord {
        LiftRecord axial;
        std::array<LiftRecord, 2> horizontal;
        std::array<LiftRecord, 4> vertical;
    };

    std::array<Volume3D, 8> level_forward(const Volume3D& x, LevelRecord* rec);
    Volume3D level_inverse(const std::array<const Volume3D*, 8>& bands, LevelRecord* rec);
    Volume3D level_forward_adjoint(const LevelRecord& rec, const std::array<const Volume3D*, 8>& grads);
    std::array<Volume3D, 8> level_inverse_adjoint(const LevelRecord& rec, const Volume3D& grad);

    LiftOperator& predict_;
    LiftOperator& update_;
    LiftConfig cfg_;
    bool recording_ = false;
    std::vector<LevelRecord> forward_tape_;
    std::vector<LevelRecord> inverse_tape_;
    SubbandPyramid inverse_layout_;
    bool have_forward_ = false;
    bool have_inverse_ = false;
};

SubbandPyramid dwt3d_forward(const Volume3D& v, const LiftConfig& cfg, const LiftOperator& predict,
                             const LiftOperator& update);
Volume3D dwt3d_inverse(const SubbandPyramid& p, const LiftConfig& cfg, const LiftOperator& predict,
                       const LiftOperator& update);

} // namespace volift
