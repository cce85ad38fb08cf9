#include "volift/gradcheck.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>

#include "volift/errors.h"
#include "volift/lifting.h"
#include "volift/synth.h"
#include "volift/trainer.h"

namespace volift {

namespace {

constexpr std::array<const char*, 4> kComponents = {"nn3d", "lifting", "entropy", "rd_loss"};
constexpr double kLayerTol = 1e-5;
constexpr double kChainTol = 1e-4;

// Compares analytic[k] with central differences of loss() over sampled
// coordinates of a parameter or input span.
struct Probe {
    std::span<double> values;
    std::span<const double> analytic;
};

double compare(const std::vector<Probe>& probes, const std::function<double()>& loss, std::size_t samples,
               double h, Rng& rng, std::size_t* used)
{
    std::size_t total = 0;
    for (const auto& p : probes)
        total += p.values.size();
    std::vector<double> a, n;
    const std::size_t count = std::min(samples, total);
    for (std::size_t s = 0; s < count; ++s) {
        std::size_t k = count == total ? s : rng.below(total);
        std::size_t pi = 0;
        while (k >= probes[pi].values.size())
            k -= probes[pi++].values.size();
        double& v = probes[pi].values[k];
        const double saved = v;
        v = saved + h;
        const double up = loss();
        v = saved - h;
        const double down = loss();
        v = saved;
        a.push_back(probes[pi].analytic[k]);
        n.push_back((up - down) / (2.0 * h));
    }
    double scale = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i)
        scale = std::max({scale, std::abs(n[i]), std::abs(a[i])});
    const double floor = std::max(1e-3 * scale, 1e-12);
    double worst = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i)
        worst = std::max(worst, relative_error(a[i], n[i], floor));
    *used = n.size();
    return worst;
}

void perturb(ConvNet& net, Rng& rng, double scale = 1.0)
{
    for (auto& layer : net.layers()) {
        const double bound = scale / std::sqrt(static_cast<double>(layer.in_channels() * Conv3DLayer::kTaps));
        for (double& w : layer.kernel())
            w += rng.uniform(-bound, bound);
        for (double& b : layer.bias())
            b += rng.uniform(-bound, bound);
    }
}

Volume3D random_volume(Shape s, Rng& rng, double amplitude)
{
    Volume3D v(s);
    for (double& x : v.data())
        x = amplitude * rng.normal();
    return v;
}

std::vector<double> random_weights(std::size_t n, Rng& rng)
{
    std::vector<double> w(n);
    for (double& x : w)
        x = rng.normal();
    return w;
}

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

std::vector<Probe> conv_probes(ConvNet& net)
{
    std::vector<Probe> p;
    for (auto& l : net.layers()) {
        p.push_back({l.kernel(), l.kernel_grad()});
        p.push_back({l.bias(), l.bias_grad()});
    }
    return p;
}

void check_conv_layer(GradCheckReport& report, const GradCheckConfig& cfg, Rng& rng)
{
    const Shape s{cfg.cube, cfg.cube, cfg.cube};
    Conv3DLayer layer(3, 4);
    layer.init_uniform(rng);
    FeatureMap in(3, s);
    for (double& x : in.data)
        x = rng.normal();
    const auto w = random_weights(4 * s.voxels(), rng);
    auto loss = [&] { return dot(layer.forward(in).data, w); };

    FeatureMap g_out(4, s);
    g_out.data = w;
    layer.zero_grad();
    const FeatureMap g_in = layer.backward(in, g_out);

    std::size_t used = 0;
    double e = compare({{in.data, g_in.data}}, loss, cfg.samples, cfg.h, rng, &used);
    report.entries.push_back({"nn3d", "conv.input", e, kLayerTol, used});
    e = compare({{layer.kernel(), layer.kernel_grad()}}, loss, cfg.samples, cfg.h, rng, &used);
    report.entries.push_back({"nn3d", "conv.kernel", e, kLayerTol, used});
    e = compare({{layer.bias(), layer.bias_grad()}}, loss, cfg.samples, cfg.h, rng, &used);
    report.entries.push_back({"nn3d", "conv.bias", e, kLayerTol, used});
}

void check_net(GradCheckReport& report, const GradCheckConfig& cfg, Rng& rng, ConvNet net, const std::string& name)
{
    const Shape s{cfg.cube, cfg.cube, cfg.cube};
    perturb(net, rng);
    net.corrupt_tanh_backward(cfg.corrupt_tanh);
    Volume3D x = random_volume(s, rng, 0.5);
    const auto w = random_weights(s.voxels(), rng);
    auto loss = [&] { return dot(net.forward(x, nullptr).data(), w); };

    NetCache cache;
    net.forward(x, &cache);
    net.zero_grad();
    const Volume3D gx = net.backward(cache, Volume3D(s, w));

    std::size_t used = 0;
    double e = compare({{x.data(), gx.data()}}, loss, cfg.samples, cfg.h, rng, &used);
    report.entries.push_back({"nn3d", name + ".input", e, kLayerTol, used});
    e = compare(conv_probes(net), loss, cfg.samples, cfg.h, rng, &used);
    report.entries.push_back({"nn3d", name + ".params", e, kLayerTol, used});
}

std::vector<Probe> pyramid_probes(SubbandPyramid& p, const SubbandPyramid& g)
{
    std::vector<Probe> out;
    for (std::size_t b = 0; b < p.bands.size(); ++b)
        out.push_back({p.bands[b].data.data(), g.bands[b].data.data()});
    return out;
}

double pyramid_dot(const SubbandPyramid& p, const std::vector<std::vector<double>>& w)
{
    double s = 0.0;
    for (std::size_t b = 0; b < p.bands.size(); ++b)
        s += dot(p.bands[b].data.data(), w[b]);
    return s;
}

void check_lifting(GradCheckReport& report, const GradCheckConfig& cfg, Rng& rng, const ParamStore& model,
                   double scale, const std::string& tag)
{
    const Shape s{cfg.cube, cfg.cube, cfg.cube};
    LiftNet pn = model.predict;
    LiftNet un = model.update;
    perturb(pn, rng);
    perturb(un, rng);
    pn.corrupt_tanh_backward(cfg.corrupt_tanh);
    un.corrupt_tanh_backward(cfg.corrupt_tanh);
    ScaledNetOperator p(pn, scale);
    ScaledNetOperator u(un, scale);
    LiftConfig lc;
    lc.value_scale = scale;
    LiftingTransform t(p, u, lc);
    t.set_recording(true);

    // Forward transform: gradients w.r.t. the input volume and the networks.
    Volume3D x = random_volume(s, rng, 0.5 * scale);
    SubbandPyramid y = t.forward(x);
    std::vector<std::vector<double>> w;
    SubbandPyramid gy = y.zeros_like();
    for (std::size_t b = 0; b < y.bands.size(); ++b) {
        w.push_back(random_weights(y.bands[b].data.size(), rng));
        std::copy(w[b].begin(), w[b].end(), gy.bands[b].data.data().begin());
    }
    pn.zero_grad();
    un.zero_grad();
    const Volume3D gx = t.forward_adjoint(gy);
    auto fwd_loss = [&] { return pyramid_dot(dwt3d_forward(x, lc, p, u), w); };

    std::size_t used = 0;
    double e = compare({{x.data(), gx.data()}}, fwd_loss, cfg.samples, cfg.h, rng, &used);
    report.entries.push_back({"lifting", tag + "forward.input", e, kChainTol, used});
    auto probes = conv_probes(pn);
    for (auto& q : conv_probes(un))
        probes.push_back(q);
    e = compare(probes, fwd_loss, cfg.samples, cfg.h, rng, &used);
    report.entries.push_back({"lifting", tag + "forward.params", e, kChainTol, used});

    // Inverse transform: gradients w.r.t. the bands and the networks.
    SubbandPyramid bands = y;
    const auto wx = random_weights(s.voxels(), rng);
    t.inverse(bands);
    pn.zero_grad();
    un.zero_grad();
    const SubbandPyramid gb = t.inverse_adjoint(Volume3D(s, wx));
    auto inv_loss = [&] { return dot(dwt3d_inverse(bands, lc, p, u).data(), wx); };
    e = compare(pyramid_probes(bands, gb), inv_loss, cfg.samples, cfg.h, rng, &used);
    report.entries.push_back({"lifting", tag + "inverse.bands", e, kChainTol, used});
    e = compare(probes, inv_loss, cfg.samples, cfg.h, rng, &used);
    report.entries.push_back({"lifting", tag + "inverse.params", e, kChainTol, used});
}

void check_entropy(GradCheckReport& report, const GradCheckConfig& cfg, Rng& rng)
{
    EntropyModel m;
    m.randomize(rng);
    std::vector<std::size_t> cls;
    std::vector<double> ys, cs;
    while (ys.size() < 64) {
        const std::size_t c = rng.below(m.classes());
        const double y = rng.uniform(-6.0, 6.0);
        if (m.mass(c, y) < 1e-3)
            continue;
        cls.push_back(c);
        ys.push_back(y);
        cs.push_back(rng.normal());
    }
    auto loss = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < ys.size(); ++i)
            s += cs[i] * m.bits(cls[i], ys[i]);
        return s;
    };
    m.zero_grad();
    std::vector<double> gy(ys.size());
    for (std::size_t i = 0; i < ys.size(); ++i)
        m.bits(cls[i], ys[i], cs[i], &gy[i]);

    std::size_t used = 0;
    double e = compare({{ys, gy}}, loss, cfg.samples, cfg.h, rng, &used);
    report.entries.push_back({"entropy", "bits.symbol", e, kLayerTol, used});
    e = compare({{m.parameters(), m.gradients()}}, loss, cfg.samples, cfg.h, rng, &used);
    report.entries.push_back({"entropy", "bits.params", e, kLayerTol, used});
}

// True when every relaxed coefficient y / QS + u, |u| <= 1/2, keeps a
// probability mass well above the floor, so the rate is smooth around it.
bool clear_of_floor(ParamStore& store, const std::vector<Volume3D>& batch, CodecMode mode)
{
    LiftConfig cfg = lift_config_for(mode, 2);
    cfg.mode = LiftMode::Float;
    const ScaledNetOperator p(store.predict, cfg.value_scale);
    const ScaledNetOperator u(store.update, cfg.value_scale);
    const double qs = mode == CodecMode::Lossy ? store.qs() : 1.0;
    for (const auto& x : batch) {
        const SubbandPyramid pyr = dwt3d_forward(x, cfg, p, u);
        for (std::size_t b = 0; b < pyr.bands.size(); ++b)
            for (double y : pyr.bands[b].data.data())
                for (double shift : {-0.5, 0.0, 0.5})
                    if (store.entropy.mass(b, y / qs + shift) < 8.0 * kPmfFloor)
                        return false;
    }
    return true;
}

void check_rd_loss(GradCheckReport& report, const GradCheckConfig& cfg, Rng& rng, const ParamStore& model,
                   CodecMode mode, const std::string& tag)
{
    const Shape s{cfg.cube, cfg.cube, cfg.cube};
    std::vector<Volume3D> batch;
    for (std::uint64_t i = 0; i < 2; ++i) {
        // Reduced contrast keeps the coefficients away from the probability
        // floor, where the rate is not differentiable.
        Volume3D v = synth_cube(s, mix_seed(cfg.seed, 0x7264, i));
        for (double& x : v.data())
            x = std::round(128.0 + (x - 128.0) / 8.0);
        batch.push_back(to_working_domain(v, mode));
    }

    ParamStore store = model;
    double scale = 1.0;
    for (int attempt = 0; attempt < 20; ++attempt, scale *= 0.7) {
        store = model;
        perturb(store.predict, rng, scale);
        perturb(store.update, rng, scale);
        perturb(store.post, rng, scale);
        if (clear_of_floor(store, batch, mode))
            break;
    }
    for (ConvNet* net : {static_cast<ConvNet*>(&store.predict), static_cast<ConvNet*>(&store.update),
                         static_cast<ConvNet*>(&store.post)})
        net->corrupt_tanh_backward(cfg.corrupt_tanh);

    RdOptions opts;
    opts.mode = mode;
    opts.lambda = 4096.0;
    opts.distortion_relax = RelaxMode::Noise;
    opts.noise_seed = mix_seed(cfg.seed, 0x6e6f);

    store.zero_grad();
    rd_loss(batch, store, opts);
    RdOptions plain = opts;
    plain.compute_gradients = false;
    auto loss = [&] { return rd_loss(batch, store, plain).loss; };

    std::vector<Probe> probes;
    for (auto& g : store.groups())
        if (mode == CodecMode::Lossy || g.name.rfind("post", 0) != 0)
            probes.push_back({g.values, g.grads});
    if (mode == CodecMode::Lossless)
        probes.pop_back();

    std::size_t used = 0;
    const double e = compare(probes, loss, cfg.samples, cfg.h, rng, &used);
    report.entries.push_back({"rd_loss", tag + "params", e, kChainTol, used});
    if (mode == CodecMode::Lossy) {
        const std::vector<Probe> qs = {{std::span<double>(&store.log_qs, 1), std::span<const double>(&store.log_qs_grad, 1)}};
        const double eq = compare(qs, loss, 1, cfg.h, rng, &used);
        report.entries.push_back({"rd_loss", tag + "log_qs", eq, kChainTol, used});
    }
}

} // namespace

double relative_error(double analytic, double numeric, double floor)
{
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return denom == 0.0 ? 0.0 : std::abs(analytic - numeric) / denom;
}

bool GradCheckReport::passed() const
{
    return std::all_of(entries.begin(), entries.end(), [](const GradCheckEntry& e) { return e.passed(); });
}

std::vector<std::pair<std::string, double>> GradCheckReport::component_errors() const
{
    std::vector<std::pair<std::string, double>> out;
    for (const char* c : kComponents) {
        double worst = 0.0;
        bool seen = false;
        for (const auto& e : entries)
            if (e.component == c) {
                worst = std::max(worst, e.max_rel_error);
                seen = true;
            }
        if (seen)
            out.emplace_back(c, worst);
    }
    return out;
}

std::vector<std::string> GradCheckReport::failed_components() const
{
    std::vector<std::string> out;
    for (const char* c : kComponents)
        if (std::any_of(entries.begin(), entries.end(),
                        [c](const GradCheckEntry& e) { return e.component == c && !e.passed(); }))
            out.emplace_back(c);
    return out;
}

std::string GradCheckReport::first_failure() const
{
    const auto failed = failed_components();
    return failed.empty() ? std::string() : failed.front();
}

std::string GradCheckReport::format() const
{
    std::string out;
    char line[200];
    for (const auto& e : entries) {
        std::snprintf(line, sizeof line, "%s.%s max_rel_error=%.3e tol=%.0e samples=%zu status=%s\n",
                      e.component.c_str(), e.check.c_str(), e.max_rel_error, e.tolerance, e.samples,
                      e.passed() ? "pass" : "FAIL");
        out += line;
    }
    for (const auto& [c, err] : component_errors()) {
        std::snprintf(line, sizeof line, "component=%s max_rel_error=%.3e\n", c.c_str(), err);
        out += line;
    }
    out += passed() ? "gradcheck=pass\n" : "gradcheck=fail first_failure=" + first_failure() + "\n";
    return out;
}

GradCheckReport grad_check(const ParamStore& model, const GradCheckConfig& cfg)
{
    if (cfg.cube < 4 || cfg.cube % 4 != 0)
        throw ArgumentError("gradient check cube size must be a positive multiple of 4");
    if (cfg.samples == 0 || !(cfg.h > 0.0))
        throw ArgumentError("gradient check needs samples > 0 and h > 0");
    GradCheckReport report;
    Rng rng(cfg.seed);
    check_conv_layer(report, cfg, rng);
    check_net(report, cfg, rng, model.predict, "predict");
    check_net(report, cfg, rng, model.post, "post");
    check_lifting(report, cfg, rng, model, 1.0, "");
    check_lifting(report, cfg, rng, model, 255.0, "scaled.");
    check_entropy(report, cfg, rng);
    check_rd_loss(report, cfg, rng, model, CodecMode::Lossy, "lossy.");
    check_rd_loss(report, cfg, rng, model, CodecMode::Lossless, "lossless.");
    return report;
}

} // namespace volift
