#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "volift/codec.h"
#include "volift/params.h"
#include "volift/rng.h"
#include "volift/volume.h"

namespace volift {

// How rounding is replaced during training.
//   Noise: y / QS + u with u ~ U(-1/2, 1/2).
//   Round: round half away from zero (evaluation; straight-through gradient).
enum class RelaxMode { Noise, Round };

Volume3D quant_relax(const Volume3D& y, double qs, Rng& rng, RelaxMode mode = RelaxMode::Noise);

struct RdOptions {
    CodecMode mode = CodecMode::Lossy;
    double lambda = 4096.0;
    // Relaxation of the distortion path. The rate path always uses noise.
    RelaxMode distortion_relax = RelaxMode::Round;
    // Noise for batch item i is drawn from Rng(mix_seed(noise_seed, i)).
    std::uint64_t noise_seed = 0;
    bool compute_gradients = true;
};

struct RdTerms {
    double loss = 0.0;
    double rate = 0.0;       // bits per voxel, batch mean
    double distortion = 0.0; // MSE in the working domain, batch mean (0 in lossless mode)
};

// Objective rate + lambda * distortion over a batch of working-domain volumes
// (see to_working_domain); lossless mode is rate only. With compute_gradients
// the gradients of every parameter group are accumulated into the store and
// has_gradients is set.
RdTerms rd_loss(const std::vector<Volume3D>& batch, ParamStore& store, const RdOptions& opts);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over all parameter groups; gradients are zeroed after.
void adam_step(ParamStore& store, double lr, const AdamConfig& cfg = {});

struct TrainConfig {
    CodecMode mode = CodecMode::Lossy;
    double lambda = 4096.0;
    double lr = 1e-4;
    std::size_t batch = 4;
    std::size_t cube = 16;
    std::size_t steps = 200;
    std::uint64_t seed = 1;
    std::size_t checkpoint_every = 0; // 0: only the final model
    std::string out_dir;              // checkpoints and final model; empty: nothing written
    std::string log_path;             // CSV metrics log; empty: not written
    std::optional<Shape> raw_shape;   // shape of headerless .raw inputs
    bool freeze_transform = false;    // keep the predict and update networks fixed
};

// Rejects degenerate settings with ArgumentError.
void validate(const TrainConfig& cfg);

struct TrainLogRow {
    std::size_t step = 0;
    double loss = 0.0;
    double rate_bpp = 0.0;
    double mse = 0.0;
    double qs = 0.0;
};

std::string train_log_header();
std::string format_log_row(const TrainLogRow& row);

// Every .v3d (and, with a shape, .raw) file of dir in name order.
std::vector<Volume3D> load_dataset(const std::string& dir, const std::optional<Shape>& raw_shape);

// Random crop of edge cube drawn with rng from one of the volumes.
Volume3D sample_crop(const std::vector<Volume3D>& volumes, std::size_t cube, Rng& rng);

// Runs cfg.steps optimizer steps on store. Deterministic given cfg.seed.
std::vector<TrainLogRow> train(const std::vector<Volume3D>& volumes, ParamStore& store, const TrainConfig& cfg);

// Loads the dataset, trains, writes the log, checkpoints ("step_NNNNNN.iwm"
// plus ".adam" sidecar) and "model.iwm" / "model.adam" into out_dir.
std::vector<TrainLogRow> train_loop(const std::string& dataset_dir, ParamStore& store, const TrainConfig& cfg);

// Objective over whole volumes (edge-padded to a multiple of 4) without
// gradients, with a fixed noise seed.
RdTerms evaluate(const std::vector<Volume3D>& u8_volumes, ParamStore& store, CodecMode mode, double lambda,
                 std::uint64_t noise_seed);

// Mean lossless bits per voxel of actual encoded streams.
double lossless_bpp(const std::vector<Volume3D>& u8_volumes, const ParamStore& store);

} // namespace volift
