#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "volift/params.h"

namespace volift {

struct GradCheckConfig {
    std::uint64_t seed = 7;
    std::size_t cube = 8;     // edge of the test volumes, multiple of 4
    std::size_t samples = 50; // coordinates compared per check
    double h = 1e-5;          // central-difference step
    bool corrupt_tanh = false;
};

struct GradCheckEntry {
    std::string component; // nn3d, lifting, entropy, rd_loss
    std::string check;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::size_t samples = 0;
    bool passed() const { return max_rel_error < tolerance; }
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;

    bool passed() const;
    // Worst error per component, in dependency order.
    std::vector<std::pair<std::string, double>> component_errors() const;
    std::vector<std::string> failed_components() const;
    // Lowest failing component in dependency order; empty when all pass.
    std::string first_failure() const;
    std::string format() const;
};

// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

// Finite-difference comparison of every analytic gradient. Network weights
// are the model's plus seeded uniform perturbations, so zero-initialized
// layers are exercised too.
GradCheckReport grad_check(const ParamStore& model, const GradCheckConfig& cfg);

} // namespace volift
