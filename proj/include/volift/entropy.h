#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "volift/rng.h"

namespace volift {

struct SubbandPyramid;

// Smallest probability any coded symbol may receive.
inline constexpr double kPmfFloor = 1.0 / 65536.0;

// One learned monotone CDF per subband class. Each class composes four scalar
// maps 1 -> 3 -> 3 -> 3 -> 1: z = softplus(H) x + b, followed (except for the
// last map) by x' = z + tanh(a) * tanh(z); a sigmoid turns the result into a
// probability. Positive matrices and |tanh(a)| < 1 keep every map strictly
// increasing.
class EntropyModel {
public:
    static constexpr int kMaps = 4;
    static constexpr int kWidth = 3;
    static constexpr std::size_t kParamsPerClass = 43;

    explicit EntropyModel(std::size_t classes = 15);

    std::size_t classes() const { return classes_; }

    // Symmetric logistic init with scale 10: zero biases and gates.
    void reset();
    // Arbitrary parameters (gates and biases included); property tests.
    void randomize(Rng& rng);

    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }
    std::span<double> gradients() { return grads_; }
    std::span<const double> gradients() const { return grads_; }
    void zero_grad();

    double logit(std::size_t cls, double x) const;
    double cdf(std::size_t cls, double x) const;
    // c(q + 1/2) - c(q - 1/2) without flooring.
    double mass(std::size_t cls, double q) const;
    // mass floored at 2^-16.
    double pmf(std::size_t cls, long long q) const;

    // Floored bits -log2 max(p(y), 2^-16) of a continuous symbol value. The
    // gradient ignores the floor (it is that of -log2 p). With weight != 0 the
    // parameter gradient (times weight) is accumulated and, when dy is not null,
    // d bits / dy (times weight) is written to it.
    double bits(std::size_t cls, double y, double weight = 0.0, double* dy = nullptr);

private:
    struct Trace;
    double logit_traced(std::size_t cls, double x, Trace* trace) const;
    void logit_backward(std::size_t cls, const Trace& trace, double g, double* dx);
    void check_class(std::size_t cls) const;

    std::size_t classes_;
    std::vector<double> params_;
    std::vector<double> grads_;
};

// Total floored bits of an integer-valued pyramid; class = band position.
double rate_bits(const EntropyModel& model, const SubbandPyramid& quantized);

// Cumulative frequency table over [s_min, s_max] plus one escape symbol.
// Frequencies are integers summing to exactly 2^16; every symbol has >= 1.
struct CdfTable {
    static constexpr std::uint32_t kTotalBits = 16;
    static constexpr std::uint32_t kTotal = 1u << kTotalBits;

    std::int32_t s_min = 0;
    std::int32_t s_max = 0;
    std::vector<std::uint32_t> cum; // size (s_max - s_min + 1) + 2; escape is the last interval

    std::size_t symbol_count() const { return cum.size() - 2; }
    std::uint32_t escape_index() const { return static_cast<std::uint32_t>(cum.size() - 2); }
    std::uint32_t freq(std::uint32_t index) const { return cum[index + 1] - cum[index]; }
    double probability(std::uint32_t index) const { return static_cast<double>(freq(index)) / kTotal; }
    bool contains(long long s) const { return s >= s_min && s <= s_max; }

    // Quantizes arbitrary nonnegative weights over [s_min, s_min + n) to a table.
    static CdfTable from_weights(std::int32_t s_min, std::span<const double> weights);
};

CdfTable build_cdf_table(const EntropyModel& model, std::size_t cls, std::int32_t s_min, std::int32_t s_max);

} // namespace volift

namespace volift {

// Rate term of the training objective: caches the relaxed (continuous)
// coefficients on forward so backward can return d(scale * bits)/d(coefficients)
// and accumulate the entropy-model parameter gradients.
class RateTerm {
public:
    explicit RateTerm(EntropyModel& model) : model_(model) {}

    double forward(const SubbandPyramid& relaxed);
    SubbandPyramid backward(double grad_scale);

private:
    EntropyModel& model_;
    std::vector<std::vector<double>> cached_;
    const SubbandPyramid* layout_ = nullptr;
    bool have_forward_ = false;
};

} // namespace volift
