#include "volift/lifting.h"

#include <functional>

#include "volift/errors.h"

namespace volift {

Volume3D ScaledNetOperator::apply(const Volume3D& in, NetCache* cache) const
{
    if (scale_ == 1.0)
        return net_->forward(in, cache);
    Volume3D x = in;
    for (double& v : x.data())
        v /= scale_;
    Volume3D y = net_->forward(x, cache);
    for (double& v : y.data())
        v *= scale_;
    return y;
}

Volume3D ScaledNetOperator::adjoint(const NetCache& cache, const Volume3D& grad_out)
{
    if (mutable_net_ == nullptr)
        throw StateError("adjoint requested through a read-only network");
    if (scale_ == 1.0)
        return mutable_net_->backward(cache, grad_out);
    // d/dx [s f(x/s)] = f'(x/s); parameter gradients pick up the factor s.
    Volume3D g = grad_out;
    for (double& v : g.data())
        v *= scale_;
    Volume3D gx = mutable_net_->backward(cache, g);
    for (double& v : gx.data())
        v /= scale_;
    return gx;
}

namespace {

std::array<std::size_t, 3> strides(const Shape& s) { return {s.h * s.w, s.w, 1}; }

void check_axis(int axis)
{
    if (axis < 0 || axis > 2)
        throw ArgumentError("axis must be 0, 1 or 2");
}

void add_scaled(Volume3D& target, const Volume3D& delta, double sign, LiftMode mode)
{
    auto t = target.data();
    auto d = delta.data();
    if (mode == LiftMode::Integer)
        for (std::size_t i = 0; i < t.size(); ++i)
            t[i] += sign * round_half_away(d[i]);
    else
        for (std::size_t i = 0; i < t.size(); ++i)
            t[i] += sign * d[i];
}

void accumulate(Volume3D& target, const Volume3D& delta, double sign)
{
    auto t = target.data();
    auto d = delta.data();
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] += sign * d[i];
}

struct StepPlan {
    bool predict;
    double sign;
};

std::vector<StepPlan> forward_plan(int steps)
{
    std::vector<StepPlan> plan;
    for (int s = 0; s < steps; ++s) {
        plan.push_back({true, -1.0});
        plan.push_back({false, +1.0});
    }
    return plan;
}

std::vector<StepPlan> inverse_plan(int steps)
{
    std::vector<StepPlan> plan;
    for (int s = 0; s < steps; ++s) {
        plan.push_back({false, -1.0});
        plan.push_back({true, +1.0});
    }
    return plan;
}

void run_plan(Volume3D& low, Volume3D& high, const std::vector<StepPlan>& plan, const LiftOperator& predict,
              const LiftOperator& update, LiftMode mode, LiftRecord* record)
{
    for (const StepPlan& step : plan) {
        const Volume3D& source = step.predict ? low : high;
        Volume3D& target = step.predict ? high : low;
        const LiftOperator& op = step.predict ? predict : update;
        if (record != nullptr) {
            LiftStep rec{step.predict, step.sign, {}};
            const Volume3D out = op.apply(source, &rec.cache);
            add_scaled(target, out, step.sign, mode);
            record->steps.push_back(std::move(rec));
        } else {
            add_scaled(target, op.apply(source, nullptr), step.sign, mode);
        }
    }
}

// Walks recorded steps backwards: grad(source) += op^T(sign * grad(target)),
// which also gives the operator parameters their signed share.
void run_adjoint(Volume3D& grad_low, Volume3D& grad_high, const LiftRecord& record, LiftOperator& predict,
                 LiftOperator& update)
{
    for (auto it = record.steps.rbegin(); it != record.steps.rend(); ++it) {
        Volume3D& g_source = it->predict ? grad_low : grad_high;
        const Volume3D& g_target = it->predict ? grad_high : grad_low;
        LiftOperator& op = it->predict ? predict : update;
        Volume3D g = g_target;
        for (double& v : g.data())
            v *= it->sign;
        accumulate(g_source, op.adjoint(it->cache, g), 1.0);
    }
}

void check_integer_input(const Volume3D& v, const LiftConfig& cfg)
{
    if (cfg.mode == LiftMode::Integer && !is_integer_valued(v))
        throw ArgumentError("integer lifting requires an integer-valued volume");
}

} // namespace

std::pair<Volume3D, Volume3D> split_axis(const Volume3D& v, int axis)
{
    check_axis(axis);
    const Shape& s = v.shape();
    if (s[axis] % 2 != 0)
        throw ArgumentError("split_axis: length " + std::to_string(s[axis]) + " along axis " +
                            std::to_string(axis) + " is odd");
    Shape half = s;
    half[axis] = s[axis] / 2;
    Volume3D even(half, v.domain());
    Volume3D odd(half, v.domain());
    const auto st = strides(s);
    std::size_t i = 0;
    for (std::size_t d = 0; d < half.d; ++d)
        for (std::size_t h = 0; h < half.h; ++h)
            for (std::size_t w = 0; w < half.w; ++w, ++i) {
                std::array<std::size_t, 3> c{d, h, w};
                c[axis] *= 2;
                const std::size_t src = c[0] * st[0] + c[1] * st[1] + c[2] * st[2];
                even[i] = v[src];
                odd[i] = v[src + st[axis]];
            }
    return {std::move(even), std::move(odd)};
}

Volume3D merge_axis(const Volume3D& even, const Volume3D& odd, int axis)
{
    check_axis(axis);
    if (!(even.shape() == odd.shape()))
        throw ArgumentError("merge_axis: shapes " + even.shape().str() + " and " + odd.shape().str() +
                            " differ");
    const Shape& half = even.shape();
    Shape s = half;
    s[axis] = half[axis] * 2;
    Volume3D out(s, even.domain());
    const auto st = strides(s);
    std::size_t i = 0;
    for (std::size_t d = 0; d < half.d; ++d)
        for (std::size_t h = 0; h < half.h; ++h)
            for (std::size_t w = 0; w < half.w; ++w, ++i) {
                std::array<std::size_t, 3> c{d, h, w};
                c[axis] *= 2;
                const std::size_t dst = c[0] * st[0] + c[1] * st[1] + c[2] * st[2];
                out[dst] = even[i];
                out[dst + st[axis]] = odd[i];
            }
    return out;
}

std::pair<Volume3D, Volume3D> lift_axis_forward(const Volume3D& v, int axis, const LiftOperator& predict,
                                                const LiftOperator& update, const LiftConfig& cfg,
                                                LiftRecord* record)
{
    check_integer_input(v, cfg);
    auto [low, high] = split_axis(v, axis);
    low.set_domain(ValueDomain::Coefficient);
    high.set_domain(ValueDomain::Coefficient);
    if (record != nullptr) {
        record->axis = axis;
        record->steps.clear();
    }
    run_plan(low, high, forward_plan(cfg.steps), predict, update, cfg.mode, record);
    return {std::move(low), std::move(high)};
}

Volume3D lift_axis_inverse(const Volume3D& low, const Volume3D& high, int axis, const LiftOperator& predict,
                           const LiftOperator& update, const LiftConfig& cfg, LiftRecord* record)
{
    check_axis(axis);
    if (!(low.shape() == high.shape()))
        throw ArgumentError("lift_axis_inverse: band shapes " + low.shape().str() + " and " +
                            high.shape().str() + " differ");
    Volume3D l = low;
    Volume3D h = high;
    if (record != nullptr) {
        record->axis = axis;
        record->steps.clear();
    }
    run_plan(l, h, inverse_plan(cfg.steps), predict, update, cfg.mode, record);
    return merge_axis(l, h, axis);
}

Volume3D lift_axis_forward_adjoint(const LiftRecord& record, const Volume3D& grad_low,
                                   const Volume3D& grad_high, LiftOperator& predict, LiftOperator& update)
{
    Volume3D gl = grad_low;
    Volume3D gh = grad_high;
    run_adjoint(gl, gh, record, predict, update);
    return merge_axis(gl, gh, record.axis);
}

std::pair<Volume3D, Volume3D> lift_axis_inverse_adjoint(const LiftRecord& record, const Volume3D& grad,
                                                        LiftOperator& predict, LiftOperator& update)
{
    auto [gl, gh] = split_axis(grad, record.axis);
    run_adjoint(gl, gh, record, predict, update);
    return {std::move(gl), std::move(gh)};
}

std::size_t SubbandPyramid::voxel_count() const
{
    std::size_t n = 0;
    for (const auto& b : bands)
        n += b.data.size();
    return n;
}

SubbandPyramid SubbandPyramid::zeros_like() const
{
    SubbandPyramid z = *this;
    for (auto& b : z.bands)
        b.data = Volume3D(b.data.shape());
    return z;
}

std::size_t band_count_for_levels(int levels) { return static_cast<std::size_t>(7 * levels + 1); }

std::size_t band_position(int levels, int level, int label)
{
    if (level < 1 || level > levels || label < 0 || label > 7 || (label == 0 && level != levels))
        throw ArgumentError("no band " + std::to_string(label) + " at level " + std::to_string(level));
    if (level == levels)
        return static_cast<std::size_t>(label);
    return static_cast<std::size_t>(8 + (levels - 1 - level) * 7 + (label - 1));
}

namespace {

// Band index within a level is v + 2*h + 4*a for the vertical, horizontal and
// axial high-pass bits.
constexpr std::array<std::size_t, 4> kVerticalBase = {0, 2, 4, 6};

std::array<Volume3D, 8> level_forward_impl(const Volume3D& x, const LiftOperator& p, const LiftOperator& u,
                                           const LiftConfig& cfg, LiftRecord* axial,
                                           LiftRecord* horizontal, LiftRecord* vertical)
{
    auto [low, high] = lift_axis_forward(x, kAxial, p, u, cfg, axial);
    auto [ll, hl] = lift_axis_forward(low, kHorizontal, p, u, cfg, horizontal ? &horizontal[0] : nullptr);
    auto [lh, hh] = lift_axis_forward(high, kHorizontal, p, u, cfg, horizontal ? &horizontal[1] : nullptr);
    const std::array<const Volume3D*, 4> quads = {&ll, &hl, &lh, &hh};
    std::array<Volume3D, 8> bands;
    for (std::size_t j = 0; j < 4; ++j) {
        auto [lo, hi] = lift_axis_forward(*quads[j], kVertical, p, u, cfg, vertical ? &vertical[j] : nullptr);
        bands[kVerticalBase[j]] = std::move(lo);
        bands[kVerticalBase[j] + 1] = std::move(hi);
    }
    return bands;
}

Volume3D level_inverse_impl(const std::array<const Volume3D*, 8>& bands, const LiftOperator& p,
                            const LiftOperator& u, const LiftConfig& cfg, LiftRecord* axial,
                            LiftRecord* horizontal, LiftRecord* vertical)
{
    std::array<Volume3D, 4> quads;
    for (std::size_t j = 0; j < 4; ++j)
        quads[j] = lift_axis_inverse(*bands[kVerticalBase[j]], *bands[kVerticalBase[j] + 1], kVertical, p, u,
                                     cfg, vertical ? &vertical[j] : nullptr);
    const Volume3D low =
        lift_axis_inverse(quads[0], quads[1], kHorizontal, p, u, cfg, horizontal ? &horizontal[0] : nullptr);
    const Volume3D high =
        lift_axis_inverse(quads[2], quads[3], kHorizontal, p, u, cfg, horizontal ? &horizontal[1] : nullptr);
    return lift_axis_inverse(low, high, kAxial, p, u, cfg, axial);
}

void check_levels(const LiftConfig& cfg)
{
    if (cfg.levels < 1 || cfg.levels > 4)
        throw ArgumentError("decomposition depth must be in 1..4, got " + std::to_string(cfg.levels));
    if (cfg.steps < 1)
        throw ArgumentError("lifting needs at least one predict/update pair");
}

void check_divisible(const Shape& s, int levels)
{
    const std::size_t m = std::size_t{1} << levels;
    if (s.d % m != 0 || s.h % m != 0 || s.w % m != 0)
        throw ArgumentError("shape " + s.str() + " is not divisible by " + std::to_string(m));
}

Shape level_shape(const Shape& padded, int level)
{
    return {padded.d >> level, padded.h >> level, padded.w >> level};
}

void check_pyramid(const SubbandPyramid& p, const LiftConfig& cfg)
{
    if (p.levels != cfg.levels || p.bands.size() != band_count_for_levels(cfg.levels))
        throw ArgumentError("pyramid has " + std::to_string(p.bands.size()) + " bands, expected " +
                            std::to_string(band_count_for_levels(cfg.levels)));
    check_divisible(p.padded_shape, cfg.levels);
    for (int level = 1; level <= cfg.levels; ++level)
        for (int label = (level == cfg.levels ? 0 : 1); label < 8; ++label)
            if (!(p.bands[band_position(cfg.levels, level, label)].data.shape() ==
                  level_shape(p.padded_shape, level)))
                throw ArgumentError("band " + std::string(kBandLabels[label]) + " at level " +
                                    std::to_string(level) + " has inconsistent shape");
}

SubbandPyramid make_pyramid(const Volume3D& v, const LiftConfig& cfg, const LiftOperator& p,
                            const LiftOperator& u,
                            const std::function<std::array<LiftRecord*, 3>(int)>& records)
{
    check_levels(cfg);
    check_divisible(v.shape(), cfg.levels);
    SubbandPyramid out;
    out.levels = cfg.levels;
    out.original_shape = v.shape();
    out.padded_shape = v.shape();
    out.bands.resize(band_count_for_levels(cfg.levels));
    Volume3D current = v;
    for (int level = 1; level <= cfg.levels; ++level) {
        const auto rec = records(level);
        auto bands = level_forward_impl(current, p, u, cfg, rec[0], rec[1], rec[2]);
        for (int label = 1; label < 8; ++label)
            out.bands[band_position(cfg.levels, level, label)] = {kBandLabels[label], level,
                                                                  std::move(bands[label])};
        current = std::move(bands[0]);
    }
    out.bands[0] = {kBandLabels[0], cfg.levels, std::move(current)};
    return out;
}

Volume3D reconstruct(const SubbandPyramid& pyr, const LiftConfig& cfg, const LiftOperator& p,
                     const LiftOperator& u, const std::function<std::array<LiftRecord*, 3>(int)>& records)
{
    check_levels(cfg);
    check_pyramid(pyr, cfg);
    Volume3D current = pyr.bands[0].data;
    for (int level = cfg.levels; level >= 1; --level) {
        std::array<const Volume3D*, 8> bands{};
        bands[0] = &current;
        for (int label = 1; label < 8; ++label)
            bands[label] = &pyr.bands[band_position(cfg.levels, level, label)].data;
        const auto rec = records(level);
        current = level_inverse_impl(bands, p, u, cfg, rec[0], rec[1], rec[2]);
    }
    return current;
}

} // namespace

SubbandPyramid dwt3d_forward(const Volume3D& v, const LiftConfig& cfg, const LiftOperator& predict,
                             const LiftOperator& update)
{
    return make_pyramid(v, cfg, predict, update, [](int) { return std::array<LiftRecord*, 3>{}; });
}

Volume3D dwt3d_inverse(const SubbandPyramid& p, const LiftConfig& cfg, const LiftOperator& predict,
                       const LiftOperator& update)
{
    return reconstruct(p, cfg, predict, update, [](int) { return std::array<LiftRecord*, 3>{}; });
}

LiftingTransform::LiftingTransform(LiftOperator& predict, LiftOperator& update, LiftConfig cfg)
    : predict_(predict), update_(update), cfg_(cfg)
{
    check_levels(cfg_);
}

SubbandPyramid LiftingTransform::forward(const Volume3D& v)
{
    have_forward_ = false;
    if (!recording_)
        return dwt3d_forward(v, cfg_, predict_, update_);
    forward_tape_.assign(static_cast<std::size_t>(cfg_.levels), {});
    auto out = make_pyramid(v, cfg_, predict_, update_, [this](int level) {
        auto& r = forward_tape_[static_cast<std::size_t>(level - 1)];
        return std::array<LiftRecord*, 3>{&r.axial, r.horizontal.data(), r.vertical.data()};
    });
    have_forward_ = true;
    return out;
}

Volume3D LiftingTransform::inverse(const SubbandPyramid& p)
{
    have_inverse_ = false;
    if (!recording_)
        return dwt3d_inverse(p, cfg_, predict_, update_);
    inverse_tape_.assign(static_cast<std::size_t>(cfg_.levels), {});
    auto out = reconstruct(p, cfg_, predict_, update_, [this](int level) {
        auto& r = inverse_tape_[static_cast<std::size_t>(level - 1)];
        return std::array<LiftRecord*, 3>{&r.axial, r.horizontal.data(), r.vertical.data()};
    });
    inverse_layout_ = p.zeros_like();
    have_inverse_ = true;
    return out;
}

Volume3D LiftingTransform::level_forward_adjoint(const LevelRecord& rec,
                                                 const std::array<const Volume3D*, 8>& grads)
{
    std::array<Volume3D, 4> quads;
    for (std::size_t j = 0; j < 4; ++j)
        quads[j] = lift_axis_forward_adjoint(rec.vertical[j], *grads[kVerticalBase[j]],
                                             *grads[kVerticalBase[j] + 1], predict_, update_);
    const Volume3D gl = lift_axis_forward_adjoint(rec.horizontal[0], quads[0], quads[1], predict_, update_);
    const Volume3D gh = lift_axis_forward_adjoint(rec.horizontal[1], quads[2], quads[3], predict_, update_);
    return lift_axis_forward_adjoint(rec.axial, gl, gh, predict_, update_);
}

std::array<Volume3D, 8> LiftingTransform::level_inverse_adjoint(const LevelRecord& rec, const Volume3D& grad)
{
    auto [gl, gh] = lift_axis_inverse_adjoint(rec.axial, grad, predict_, update_);
    auto [q0, q1] = lift_axis_inverse_adjoint(rec.horizontal[0], gl, predict_, update_);
    auto [q2, q3] = lift_axis_inverse_adjoint(rec.horizontal[1], gh, predict_, update_);
    const std::array<const Volume3D*, 4> quads = {&q0, &q1, &q2, &q3};
    std::array<Volume3D, 8> out;
    for (std::size_t j = 0; j < 4; ++j) {
        auto [lo, hi] = lift_axis_inverse_adjoint(rec.vertical[j], *quads[j], predict_, update_);
        out[kVerticalBase[j]] = std::move(lo);
        out[kVerticalBase[j] + 1] = std::move(hi);
    }
    return out;
}

Volume3D LiftingTransform::forward_adjoint(const SubbandPyramid& grad)
{
    if (!have_forward_)
        throw StateError("forward_adjoint needs a recorded forward pass");
    if (cfg_.mode != LiftMode::Float)
        throw StateError("adjoint is only defined for float-mode lifting");
    check_pyramid(grad, cfg_);
    Volume3D g = grad.bands[0].data;
    for (int level = cfg_.levels; level >= 1; --level) {
        std::array<const Volume3D*, 8> bands{};
        bands[0] = &g;
        for (int label = 1; label < 8; ++label)
            bands[label] = &grad.bands[band_position(cfg_.levels, level, label)].data;
        g = level_forward_adjoint(forward_tape_[static_cast<std::size_t>(level - 1)], bands);
    }
    return g;
}

SubbandPyramid LiftingTransform::inverse_adjoint(const Volume3D& grad)
{
    if (!have_inverse_)
        throw StateError("inverse_adjoint needs a recorded inverse pass");
    if (cfg_.mode != LiftMode::Float)
        throw StateError("adjoint is only defined for float-mode lifting");
    SubbandPyramid out = inverse_layout_;
    Volume3D g = grad;
    for (int level = 1; level <= cfg_.levels; ++level) {
        auto bands = level_inverse_adjoint(inverse_tape_[static_cast<std::size_t>(level - 1)], g);
        for (int label = 1; label < 8; ++label)
            out.bands[band_position(cfg_.levels, level, label)].data = std::move(bands[label]);
        g = std::move(bands[0]);
    }
    out.bands[0].data = std::move(g);
    return out;
}

} // namespace volift
