#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "volift/entropy.h"
#include "volift/nn3d.h"

namespace volift {

struct ParamGroup {
    std::string name;
    std::span<double> values;
    std::span<double> grads;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;
};

// Every trainable scalar of the codec: the shared predict and update networks,
// the post-processing network, the entropy model and log(QS).
class ParamStore {
public:
    // Zero-final-layer networks (lazy wavelet, identity post-processing),
    // symmetric entropy model, QS = 1/32.
    static ParamStore initial(std::uint64_t seed);

    LiftNet predict;
    LiftNet update;
    PostNet post;
    EntropyModel entropy{15};
    double log_qs = 0.0;
    double log_qs_grad = 0.0;
    AdamState adam;
    // Set when a backward pass has written gradients; cleared by the optimizer.
    bool has_gradients = false;

    double qs() const;

    // Canonical order: predict, update, post (layer by layer, kernel then
    // bias), entropy, log_qs.
    std::vector<ParamGroup> groups();
    std::size_t parameter_count() const;
    std::vector<double> flatten() const;
    void unflatten(std::span<const double> values);
    void zero_grad();
};

inline constexpr double kInitialQs = 1.0 / 32.0;

// "IW3M" + version u8 + count u64 + f64 scalars + SHA-256 of the preceding bytes.
std::vector<std::uint8_t> params_serialize(const ParamStore& store);
ParamStore params_deserialize(std::span<const std::uint8_t> bytes);
void params_save(const ParamStore& store, const std::string& path);
ParamStore params_load(const std::string& path);

// SHA-256 trailer of the serialized model; the first 8 bytes bind bitstreams.
std::array<std::uint8_t, 32> model_digest(const ParamStore& store);
std::array<std::uint8_t, 8> model_hash(const ParamStore& store);

// Adam moments and step counter: "IW3A" + version + step + count + m + v + SHA-256.
void adam_save(const ParamStore& store, const std::string& path);
void adam_load(ParamStore& store, const std::string& path);

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> bytes);

} // namespace volift
