#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "volift/bytes.h"
#include "volift/codec.h"
#include "volift/errors.h"
#include "volift/gradcheck.h"
#include "volift/metrics.h"
#include "volift/params.h"
#include "volift/synth.h"
#include "volift/trainer.h"

namespace fs = std::filesystem;
using namespace volift;

namespace {

enum ExitCode : int { kOk = 0, kFailure = 1, kBadArgs = 2, kCorrupt = 3, kIo = 4 };

void kv(const std::string& key, const std::string& value) { std::cout << key << '=' << value << '\n'; }

void kv(const std::string& key, double value)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", value);
    kv(key, std::string(buf));
}

void kv_int(const std::string& key, std::uint64_t value) { kv(key, std::to_string(value)); }

std::string quality_text(double psnr_db)
{
    if (std::isinf(psnr_db))
        return std::to_string(static_cast<int>(kPsnrIdentical));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", psnr_db);
    return buf;
}

Shape parse_shape(const std::string& text)
{
    Shape s;
    std::size_t d = 0, h = 0, w = 0;
    char c1 = 0, c2 = 0;
    std::istringstream in(text);
    if (!(in >> d >> c1 >> h >> c2 >> w) || c1 != ',' || c2 != ',' || d == 0 || h == 0 || w == 0 ||
        in.peek() != std::char_traits<char>::eof())
        throw ArgumentError("shape must be D,H,W with positive integers, got '" + text + "'");
    s.d = d;
    s.h = h;
    s.w = w;
    return s;
}

Volume3D load_input(const std::string& path, const std::string& shape_text)
{
    if (shape_text.empty())
        return load_volume(path, nullptr);
    const Shape s = parse_shape(shape_text);
    return load_volume(path, &s);
}

ParamStore load_model_or_initial(const std::string& path, std::uint64_t seed)
{
    return path.empty() ? ParamStore::initial(seed) : params_load(path);
}

double elapsed_ms(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

std::vector<RdPoint> read_rd_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read " + path);
    std::string line;
    if (!std::getline(in, line))
        throw ArgumentError(path + ": empty CSV");
    std::vector<std::string> cols;
    {
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ','))
            cols.push_back(c);
    }
    auto find = [&](const std::string& name) {
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (cols[i] == name)
                return i;
        throw ArgumentError(path + ": missing column '" + name + "'");
    };
    const std::size_t ib = find("bpp");
    const std::size_t iq = find("psnr");
    std::vector<RdPoint> pts;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ','))
            f.push_back(c);
        if (f.size() <= std::max(ib, iq))
            throw ArgumentError(path + ": short row '" + line + "'");
        try {
            pts.push_back({std::stod(f[ib]), std::stod(f[iq])});
        } catch (const std::exception&) {
            throw ArgumentError(path + ": non-numeric row '" + line + "'");
        }
    }
    return pts;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"volift: learned 3-D lifting wavelet codec for 8-bit volumes"};
    app.require_subcommand(1, 1);

    // synth
    auto* synth = app.add_subcommand("synth", "Write seeded synthetic 8-bit cubes (.v3d)");
    std::string synth_out;
    std::size_t synth_count = 8;
    std::string synth_size = "32,32,32";
    std::uint64_t synth_seed = 1;
    bool synth_random = false;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--count", synth_count, "Number of cubes")->check(CLI::PositiveNumber);
    synth->add_option("--size", synth_size, "Cube shape D,H,W");
    synth->add_option("--seed", synth_seed, "Seed");
    synth->add_flag("--random", synth_random, "Uniform random voxels instead of EM-like structure");

    // init
    auto* init = app.add_subcommand("init", "Write the initial (lazy wavelet) model");
    std::string init_out;
    std::uint64_t init_seed = 1;
    init->add_option("--out", init_out, "Model file")->required();
    init->add_option("--seed", init_seed, "Seed for the hidden-layer initialization");

    // train
    auto* train_cmd = app.add_subcommand("train", "Rate-distortion training on a directory of cubes");
    std::string tr_data, tr_out, tr_model, tr_shape, tr_log;
    TrainConfig tcfg;
    bool tr_lossless = false;
    train_cmd->add_option("--data", tr_data, "Dataset directory of .v3d / .raw volumes")->required();
    train_cmd->add_option("--out", tr_out, "Output directory for checkpoints and model.iwm")->required();
    train_cmd->add_option("--model", tr_model, "Starting model (default: initial model)");
    train_cmd->add_option("--log", tr_log, "CSV log path (default: <out>/train_log.csv)");
    train_cmd->add_flag("--lossless", tr_lossless, "Rate-only training of the lossless transform");
    train_cmd->add_option("--lambda", tcfg.lambda, "Distortion weight")->capture_default_str();
    train_cmd->add_option("--lr", tcfg.lr, "Adam learning rate")->capture_default_str();
    train_cmd->add_option("--steps", tcfg.steps, "Optimizer steps")->capture_default_str();
    train_cmd->add_option("--batch", tcfg.batch, "Cubes per step")->capture_default_str();
    train_cmd->add_option("--cube", tcfg.cube, "Training crop edge, multiple of 4")->capture_default_str();
    train_cmd->add_option("--seed", tcfg.seed, "Seed")->capture_default_str();
    train_cmd->add_option("--checkpoint-every", tcfg.checkpoint_every, "Checkpoint period in steps (0: final only)");
    train_cmd->add_option("--shape", tr_shape, "Shape D,H,W of .raw inputs");
    train_cmd->add_flag("--freeze-transform", tcfg.freeze_transform, "Train only the entropy model, QS and post-filter");

    // encode
    auto* enc_cmd = app.add_subcommand("encode", "Compress an 8-bit volume to .iw3");
    std::string enc_in, enc_out, enc_model, enc_shape;
    bool enc_lossless = false;
    double enc_qs = 0.0;
    enc_cmd->add_option("--in", enc_in, "Input volume (.v3d or raw)")->required();
    enc_cmd->add_option("--out", enc_out, "Output bitstream")->required();
    enc_cmd->add_option("--model", enc_model, "Model file")->required();
    enc_cmd->add_option("--shape", enc_shape, "Shape D,H,W of a raw input");
    enc_cmd->add_flag("--lossless", enc_lossless, "Bit-exact integer mode");
    auto* enc_qs_opt = enc_cmd->add_option("--qs", enc_qs, "Quantization step override (lossy)");

    // decode
    auto* dec_cmd = app.add_subcommand("decode", "Decompress a .iw3 bitstream");
    std::string dec_in, dec_out, dec_model, dec_check, dec_shape;
    dec_cmd->add_option("--in", dec_in, "Input bitstream")->required();
    dec_cmd->add_option("--out", dec_out, "Output volume (.v3d or raw)")->required();
    dec_cmd->add_option("--model", dec_model, "Model file")->required();
    dec_cmd->add_option("--check", dec_check, "Original volume to compare against");
    dec_cmd->add_option("--shape", dec_shape, "Shape D,H,W of a raw --check volume");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Quality metrics, QS sweeps and BD-PSNR");
    std::string ev_a, ev_b, ev_shape, ev_in, ev_csv, ev_bd_anchor, ev_bd_test;
    std::vector<std::string> ev_models;
    std::vector<double> ev_qs;
    eval_cmd->add_option("--a", ev_a, "Reference volume");
    eval_cmd->add_option("--b", ev_b, "Reconstructed volume");
    eval_cmd->add_option("--shape", ev_shape, "Shape D,H,W of raw volumes");
    eval_cmd->add_option("--sweep-in", ev_in, "Volume to sweep");
    eval_cmd->add_option("--model", ev_models, "Model file(s) for the sweep");
    eval_cmd->add_option("--qs", ev_qs, "Quantization steps for the sweep")->delimiter(',');
    eval_cmd->add_option("--csv", ev_csv, "Write sweep points as CSV (qs,bpp,psnr,ssim)");
    eval_cmd->add_option("--bd-anchor", ev_bd_anchor, "Anchor RD curve CSV");
    eval_cmd->add_option("--bd-test", ev_bd_test, "Test RD curve CSV");

    // roundtrip
    auto* rt_cmd = app.add_subcommand("roundtrip", "Encode, decode and compare in one step");
    std::string rt_in, rt_model, rt_shape, rt_size = "16,16,16";
    bool rt_lossless = false;
    double rt_qs = 0.0, rt_min_psnr = 30.0;
    std::uint64_t rt_seed = 1;
    rt_cmd->add_option("--in", rt_in, "Input volume (default: seeded random cube)");
    rt_cmd->add_option("--model", rt_model, "Model file (default: initial model)");
    rt_cmd->add_option("--shape", rt_shape, "Shape D,H,W of a raw input");
    rt_cmd->add_option("--size", rt_size, "Random cube shape D,H,W");
    rt_cmd->add_option("--seed", rt_seed, "Seed for the random cube and initial model");
    rt_cmd->add_flag("--lossless", rt_lossless, "Bit-exact integer mode");
    auto* rt_qs_opt = rt_cmd->add_option("--qs", rt_qs, "Quantization step override (lossy)");
    rt_cmd->add_option("--min-psnr", rt_min_psnr, "Lossy pass threshold in dB")->capture_default_str();

    // gradcheck
    auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
    std::string gc_model;
    GradCheckConfig gcfg;
    gc_cmd->add_option("--model", gc_model, "Model file (default: initial model)");
    gc_cmd->add_option("--seed", gcfg.seed, "Seed")->capture_default_str();
    gc_cmd->add_option("--cube", gcfg.cube, "Test cube edge")->capture_default_str();
    gc_cmd->add_option("--samples", gcfg.samples, "Coordinates per check")->capture_default_str();
    gc_cmd->add_flag("--inject-tanh-fault", gcfg.corrupt_tanh, "Use a wrong tanh derivative (negative control)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.front()->help());
        return kBadArgs;
    }

    try {
        if (*synth) {
            const Shape s = parse_shape(synth_size);
            fs::create_directories(synth_out);
            if (synth_random) {
                for (std::size_t i = 0; i < synth_count; ++i) {
                    char name[32];
                    std::snprintf(name, sizeof name, "cube_%03zu.v3d", i);
                    save_v3d(random_cube(s, mix_seed(synth_seed, i)), (fs::path(synth_out) / name).string());
                }
            } else {
                write_synth_dataset(synth_out, synth_count, s, synth_seed);
            }
            kv_int("count", synth_count);
            kv("dir", synth_out);
            return kOk;
        }

        if (*init) {
            const ParamStore store = ParamStore::initial(init_seed);
            params_save(store, init_out);
            kv("model", init_out);
            kv("hash", hex(model_hash(store)));
            return kOk;
        }

        if (*train_cmd) {
            tcfg.mode = tr_lossless ? CodecMode::Lossless : CodecMode::Lossy;
            tcfg.out_dir = tr_out;
            tcfg.log_path = tr_log.empty() ? (fs::path(tr_out) / "train_log.csv").string() : tr_log;
            if (!tr_shape.empty())
                tcfg.raw_shape = parse_shape(tr_shape);
            validate(tcfg);
            ParamStore store = load_model_or_initial(tr_model, tcfg.seed);
            const auto start = std::chrono::steady_clock::now();
            fs::create_directories(tr_out);
            const auto rows = train_loop(tr_data, store, tcfg);
            kv_int("steps", rows.size());
            kv("first_loss", rows.front().loss);
            kv("final_loss", rows.back().loss);
            kv("final_rate_bpp", rows.back().rate_bpp);
            kv("final_mse", rows.back().mse);
            kv("qs", store.qs());
            kv("model", (fs::path(tr_out) / "model.iwm").string());
            kv("log", tcfg.log_path);
            kv("time_ms", elapsed_ms(start));
            return kOk;
        }

        if (*enc_cmd) {
            const Volume3D v = load_input(enc_in, enc_shape);
            const ParamStore model = params_load(enc_model);
            CodecConfig cfg;
            cfg.mode = enc_lossless ? CodecMode::Lossless : CodecMode::Lossy;
            if (enc_qs_opt->count() > 0)
                cfg.qs = enc_qs;
            const auto start = std::chrono::steady_clock::now();
            const auto bytes = encode(v, model, cfg);
            const double ms = elapsed_ms(start);
            write_file(enc_out, bytes);
            kv("mode", enc_lossless ? "lossless" : "lossy");
            kv_int("bytes", bytes.size());
            kv("bpp", bits_per_voxel(bytes.size(), v.shape()));
            kv("time_ms", ms);
            return kOk;
        }

        if (*dec_cmd) {
            const auto bytes = read_file(dec_in);
            const ParamStore model = params_load(dec_model);
            const auto start = std::chrono::steady_clock::now();
            const Volume3D v = decode(bytes, model);
            const double ms = elapsed_ms(start);
            save_volume(v, dec_out);
            kv("shape", v.shape().str());
            kv("bpp", bits_per_voxel(bytes.size(), v.shape()));
            kv("time_ms", ms);
            if (!dec_check.empty()) {
                const Volume3D ref = load_input(dec_check, dec_shape);
                if (ref.shape() != v.shape())
                    throw ArgumentError("--check volume has shape " + ref.shape().str() + ", decoded " +
                                        v.shape().str());
                const bool exact = ref == v;
                if (read_header(bytes).lossless) {
                    kv("exact", exact ? "true" : "false");
                    if (!exact)
                        return kFailure;
                } else {
                    kv("psnr", quality_text(psnr(ref, v)));
                }
            }
            return kOk;
        }

        if (*eval_cmd) {
            const bool pair = !ev_a.empty() || !ev_b.empty();
            const bool sweep = !ev_in.empty();
            const bool bd = !ev_bd_anchor.empty() || !ev_bd_test.empty();
            if (static_cast<int>(pair) + static_cast<int>(sweep) + static_cast<int>(bd) != 1)
                throw ArgumentError("eval needs exactly one of: --a/--b, --sweep-in, --bd-anchor/--bd-test");
            if (pair) {
                if (ev_a.empty() || ev_b.empty())
                    throw ArgumentError("eval needs both --a and --b");
                const Volume3D a = load_input(ev_a, ev_shape);
                const Volume3D b = load_input(ev_b, ev_shape);
                if (a.shape() != b.shape())
                    throw ArgumentError("shape mismatch: " + a.shape().str() + " vs " + b.shape().str());
                kv("mse", mse(a, b));
                kv("psnr", quality_text(psnr(a, b)));
                kv("ssim", ssim(a, b));
                return kOk;
            }
            if (bd) {
                if (ev_bd_anchor.empty() || ev_bd_test.empty())
                    throw ArgumentError("eval needs both --bd-anchor and --bd-test");
                const auto anchor = read_rd_csv(ev_bd_anchor);
                const auto test = read_rd_csv(ev_bd_test);
                kv("bd_psnr", bd_quality(anchor, test));
                return kOk;
            }
            if (ev_models.empty())
                throw ArgumentError("sweep needs at least one --model");
            if (ev_models.size() > 1 && !ev_qs.empty() && ev_qs.size() != ev_models.size())
                throw ArgumentError("with several models give one --qs per model or none");
            const Volume3D v = load_input(ev_in, ev_shape);
            std::vector<std::pair<std::string, std::optional<double>>> points;
            if (ev_models.size() == 1 && !ev_qs.empty()) {
                for (double q : ev_qs)
                    points.emplace_back(ev_models.front(), q);
            } else {
                for (std::size_t i = 0; i < ev_models.size(); ++i)
                    points.emplace_back(ev_models[i], ev_qs.empty() ? std::nullopt : std::optional<double>(ev_qs[i]));
            }
            std::ofstream csv;
            if (!ev_csv.empty()) {
                csv.open(ev_csv, std::ios::trunc);
                if (!csv)
                    throw IoError("cannot write " + ev_csv);
                csv << "qs,bpp,psnr,ssim\n";
            }
            for (std::size_t i = 0; i < points.size(); ++i) {
                const ParamStore model = params_load(points[i].first);
                CodecConfig cfg;
                cfg.qs = points[i].second;
                const double qs = cfg.qs.value_or(model.qs());
                const auto bytes = encode(v, model, cfg);
                const Volume3D r = decode(bytes, model);
                const double bpp = bits_per_voxel(bytes.size(), v.shape());
                const std::string p = quality_text(psnr(v, r));
                const double s = ssim(v, r);
                char line[200];
                std::snprintf(line, sizeof line, "point=%zu qs=%.9g bpp=%.6f psnr=%s ssim=%.6f", i, qs, bpp, p.c_str(), s);
                std::cout << line << '\n';
                if (csv) {
                    std::snprintf(line, sizeof line, "%.9g,%.6f,%s,%.6f\n", qs, bpp, p.c_str(), s);
                    csv << line;
                }
            }
            return kOk;
        }

        if (*rt_cmd) {
            const Volume3D v = rt_in.empty() ? random_cube(parse_shape(rt_size), rt_seed) : load_input(rt_in, rt_shape);
            const ParamStore model = load_model_or_initial(rt_model, rt_seed);
            CodecConfig cfg;
            cfg.mode = rt_lossless ? CodecMode::Lossless : CodecMode::Lossy;
            if (rt_qs_opt->count() > 0)
                cfg.qs = rt_qs;
            const auto bytes = encode(v, model, cfg);
            const Volume3D r = decode(bytes, model);
            kv("bytes", std::to_string(bytes.size()));
            kv("bpp", bits_per_voxel(bytes.size(), v.shape()));
            if (rt_lossless) {
                const bool exact = r == v;
                kv("exact", exact ? "true" : "false");
                return exact ? kOk : kFailure;
            }
            const double p = psnr(v, r);
            kv("psnr", quality_text(p));
            return p >= rt_min_psnr ? kOk : kFailure;
        }

        if (*gc_cmd) {
            const ParamStore model = load_model_or_initial(gc_model, gcfg.seed);
            const GradCheckReport report = grad_check(model, gcfg);
            std::cout << report.format();
            return report.passed() ? kOk : kFailure;
        }
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kBadArgs;
    } catch (const CorruptStreamError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kCorrupt;
    } catch (const CorruptModelError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kCorrupt;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kFailure;
}
