#include "volift/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "volift/errors.h"
#include "volift/lifting.h"

namespace volift {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kCropStream = 0x63726f70;

void check_finite(double v, const char* term)
{
    if (!std::isfinite(v))
        throw DivergenceError(term);
}

double mean_squared(const Volume3D& a, const Volume3D& b)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

std::string checkpoint_stem(const fs::path& dir, std::size_t step)
{
    char name[32];
    std::snprintf(name, sizeof name, "step_%06zu", step);
    return (dir / name).string();
}

void save_checkpoint(const ParamStore& store, const std::string& stem)
{
    params_save(store, stem + ".iwm");
    adam_save(store, stem + ".adam");
}

} // namespace

Volume3D quant_relax(const Volume3D& y, double qs, Rng& rng, RelaxMode mode)
{
    if (!(qs > 0.0))
        throw ArgumentError("quantization step must be positive");
    Volume3D out(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i)
        out[i] = mode == RelaxMode::Noise ? y[i] / qs + rng.uniform(-0.5, 0.5) : round_half_away(y[i] / qs);
    return out;
}

RdTerms rd_loss(const std::vector<Volume3D>& batch, ParamStore& store, const RdOptions& opts)
{
    if (batch.empty())
        throw ArgumentError("rd_loss needs at least one volume");
    const bool lossy = opts.mode == CodecMode::Lossy;
    if (lossy && !(opts.lambda > 0.0))
        throw ArgumentError("lambda must be positive in lossy mode");

    LiftConfig cfg = lift_config_for(opts.mode, 2);
    cfg.mode = LiftMode::Float;
    ScaledNetOperator p(store.predict, cfg.value_scale);
    ScaledNetOperator u(store.update, cfg.value_scale);
    LiftingTransform transform(p, u, cfg);
    transform.set_recording(opts.compute_gradients);
    RateTerm rate_term(store.entropy);

    const double qs = lossy ? store.qs() : 1.0;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    RdTerms terms;
    for (std::size_t item = 0; item < batch.size(); ++item) {
        const Volume3D& x = batch[item];
        const double n = static_cast<double>(x.size());
        Rng rng(mix_seed(opts.noise_seed, item));

        const SubbandPyramid y = transform.forward(x);
        SubbandPyramid relaxed = y;
        for (auto& b : relaxed.bands)
            b.data = quant_relax(b.data, qs, rng, RelaxMode::Noise);
        const double rate = rate_term.forward(relaxed) / n;
        check_finite(rate, "rate");

        double mse = 0.0;
        SubbandPyramid symbols;
        NetCache post_cache;
        Volume3D x_hat;
        if (lossy) {
            symbols = relaxed;
            if (opts.distortion_relax == RelaxMode::Round)
                for (std::size_t b = 0; b < y.bands.size(); ++b)
                    symbols.bands[b].data = quant_relax(y.bands[b].data, qs, rng, RelaxMode::Round);
            SubbandPyramid y_hat = symbols;
            for (auto& b : y_hat.bands)
                for (double& v : b.data.data())
                    v *= qs;
            const Volume3D x_tilde = transform.inverse(y_hat);
            x_hat = store.post.forward(x_tilde, opts.compute_gradients ? &post_cache : nullptr);
            mse = mean_squared(x_hat, x);
            check_finite(mse, "distortion");
        }
        terms.rate += rate * inv_batch;
        terms.distortion += mse * inv_batch;

        if (!opts.compute_gradients)
            continue;

        const SubbandPyramid g_rate = rate_term.backward(inv_batch / n);
        SubbandPyramid g_sym;
        if (lossy) {
            Volume3D g_out(x.shape());
            const double k = 2.0 * opts.lambda * inv_batch / n;
            for (std::size_t i = 0; i < x.size(); ++i)
                g_out[i] = k * (x_hat[i] - x[i]);
            g_sym = transform.inverse_adjoint(store.post.backward(post_cache, g_out));
        }

        // relaxed = y / QS + u; y_hat = QS * symbols with d symbols / dy = 1 / QS.
        SubbandPyramid g_y = y.zeros_like();
        double g_log_qs = 0.0;
        for (std::size_t b = 0; b < y.bands.size(); ++b) {
            const auto yv = y.bands[b].data.data();
            const auto gr = g_rate.bands[b].data.data();
            auto gy = g_y.bands[b].data.data();
            for (std::size_t i = 0; i < yv.size(); ++i) {
                gy[i] = gr[i] / qs;
                if (lossy) {
                    const double gs = g_sym.bands[b].data[i];
                    gy[i] += gs;
                    g_log_qs += -gr[i] * yv[i] / qs + gs * (qs * symbols.bands[b].data[i] - yv[i]);
                }
            }
        }
        transform.forward_adjoint(g_y);
        store.log_qs_grad += g_log_qs;
    }
    terms.loss = terms.rate + (lossy ? opts.lambda * terms.distortion : 0.0);
    check_finite(terms.loss, "loss");
    if (opts.compute_gradients)
        store.has_gradients = true;
    return terms;
}

void adam_step(ParamStore& store, double lr, const AdamConfig& cfg)
{
    if (!store.has_gradients)
        throw StateError("optimizer step without gradients; run a backward pass first");
    const std::size_t count = store.parameter_count();
    AdamState& st = store.adam;
    if (st.m.size() != count || st.v.size() != count) {
        st.m.assign(count, 0.0);
        st.v.assign(count, 0.0);
        st.step = 0;
    }
    ++st.step;
    const double t = static_cast<double>(st.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    std::size_t k = 0;
    for (auto& group : store.groups()) {
        for (std::size_t i = 0; i < group.values.size(); ++i, ++k) {
            const double g = group.grads[i];
            check_finite(g, "gradient");
            st.m[k] = cfg.beta1 * st.m[k] + (1.0 - cfg.beta1) * g;
            st.v[k] = cfg.beta2 * st.v[k] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = st.m[k] / c1;
            const double v_hat = st.v[k] / c2;
            group.values[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
    store.zero_grad();
}

void validate(const TrainConfig& cfg)
{
    if (cfg.steps == 0)
        throw ArgumentError("steps must be at least 1");
    if (cfg.batch == 0)
        throw ArgumentError("batch must be at least 1");
    if (cfg.cube < 4 || cfg.cube % 4 != 0)
        throw ArgumentError("cube size must be a positive multiple of 4");
    if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr))
        throw ArgumentError("learning rate must be positive");
    if (cfg.mode == CodecMode::Lossy && (!(cfg.lambda > 0.0) || !std::isfinite(cfg.lambda)))
        throw ArgumentError("lambda must be positive in lossy mode");
}

std::string train_log_header() { return "step,loss,rate_bpp,mse,qs"; }

std::string format_log_row(const TrainLogRow& row)
{
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g", row.step, row.loss, row.rate_bpp, row.mse, row.qs);
    return buf;
}

std::vector<Volume3D> load_dataset(const std::string& dir, const std::optional<Shape>& raw_shape)
{
    std::error_code ec;
    if (!fs::is_directory(dir, ec))
        throw IoError("dataset directory not found: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".v3d" || ext == ".raw"))
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Volume3D> out;
    for (const auto& f : files) {
        if (f.extension() == ".raw" && !raw_shape)
            throw ArgumentError("dataset contains raw file " + f.string() + " but no shape was given");
        out.push_back(load_volume(f.string(), raw_shape ? &*raw_shape : nullptr));
    }
    if (out.empty())
        throw ArgumentError("dataset directory has no .v3d or .raw volumes: " + dir);
    return out;
}

Volume3D sample_crop(const std::vector<Volume3D>& volumes, std::size_t cube, Rng& rng)
{
    const Volume3D& v = volumes[rng.below(volumes.size())];
    std::array<std::size_t, 3> origin{};
    for (int a = 0; a < 3; ++a)
        origin[static_cast<std::size_t>(a)] = rng.below(v.shape()[a] - cube + 1);
    Volume3D c = extract(v, origin, {cube, cube, cube});
    c.set_domain(ValueDomain::U8Raw);
    return c;
}

std::vector<TrainLogRow> train(const std::vector<Volume3D>& volumes, ParamStore& store, const TrainConfig& cfg)
{
    validate(cfg);
    if (volumes.empty())
        throw ArgumentError("training needs at least one volume");
    for (const auto& v : volumes) {
        const Shape s = v.shape();
        if (s.d < cfg.cube || s.h < cfg.cube || s.w < cfg.cube)
            throw ArgumentError("volume " + s.str() + " is smaller than the training cube " +
                                std::to_string(cfg.cube));
        if (!is_u8_valued(v))
            throw DomainError("training volumes must hold 8-bit values");
    }

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path, std::ios::trunc);
        if (!log)
            throw IoError("cannot write log file: " + cfg.log_path);
        log << train_log_header() << '\n';
    }
    if (!cfg.out_dir.empty())
        fs::create_directories(cfg.out_dir);

    std::vector<TrainLogRow> rows;
    store.zero_grad();
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        Rng crop_rng(mix_seed(cfg.seed, step, kCropStream));
        std::vector<Volume3D> batch;
        for (std::size_t b = 0; b < cfg.batch; ++b)
            batch.push_back(to_working_domain(sample_crop(volumes, cfg.cube, crop_rng), cfg.mode));

        RdOptions opts;
        opts.mode = cfg.mode;
        opts.lambda = cfg.lambda;
        opts.noise_seed = mix_seed(cfg.seed, step);
        const RdTerms t = rd_loss(batch, store, opts);
        const TrainLogRow row{step, t.loss, t.rate, t.distortion, cfg.mode == CodecMode::Lossy ? store.qs() : 1.0};
        rows.push_back(row);
        if (cfg.freeze_transform) {
            store.predict.zero_grad();
            store.update.zero_grad();
        }
        if (log) {
            log << format_log_row(row) << '\n';
            log.flush();
        }
        adam_step(store, cfg.lr);

        if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0)
            save_checkpoint(store, checkpoint_stem(cfg.out_dir, step));
    }
    if (!cfg.out_dir.empty())
        save_checkpoint(store, (fs::path(cfg.out_dir) / "model").string());
    return rows;
}

std::vector<TrainLogRow> train_loop(const std::string& dataset_dir, ParamStore& store, const TrainConfig& cfg)
{
    validate(cfg);
    return train(load_dataset(dataset_dir, cfg.raw_shape), store, cfg);
}

RdTerms evaluate(const std::vector<Volume3D>& u8_volumes, ParamStore& store, CodecMode mode, double lambda,
                 std::uint64_t noise_seed)
{
    std::vector<Volume3D> batch;
    for (const auto& v : u8_volumes)
        batch.push_back(pad_to_multiple(to_working_domain(v, mode), 4));
    RdOptions opts;
    opts.mode = mode;
    opts.lambda = lambda;
    opts.noise_seed = noise_seed;
    opts.compute_gradients = false;
    return rd_loss(batch, store, opts);
}

double lossless_bpp(const std::vector<Volume3D>& u8_volumes, const ParamStore& store)
{
    if (u8_volumes.empty())
        throw ArgumentError("no volumes to encode");
    CodecConfig cfg;
    cfg.mode = CodecMode::Lossless;
    double total = 0.0;
    for (const auto& v : u8_volumes)
        total += bits_per_voxel(encode(v, store, cfg).size(), v.shape());
    return total / static_cast<double>(u8_volumes.size());
}

} // namespace volift
