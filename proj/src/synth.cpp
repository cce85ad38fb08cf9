#include "volift/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "volift/rng.h"

namespace volift {

namespace {

// Box blur of radius r along one axis with clamped borders.
void box_blur(std::vector<double>& v, const Shape& s, int axis, int r)
{
    const std::size_t n = s[axis];
    const std::size_t stride = axis == 0 ? s.h * s.w : axis == 1 ? s.w : 1;
    std::vector<double> line(n);
    for (std::size_t base = 0; base < v.size(); ++base) {
        // Visit each line once, from its first element.
        const std::size_t coord = (base / stride) % n;
        if (coord != 0)
            continue;
        for (std::size_t i = 0; i < n; ++i)
            line[i] = v[base + i * stride];
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int k = -r; k <= r; ++k) {
                const long j = std::clamp<long>(static_cast<long>(i) + k, 0, static_cast<long>(n) - 1);
                acc += line[static_cast<std::size_t>(j)];
            }
            v[base + i * stride] = acc / (2 * r + 1);
        }
    }
}

} // namespace

Volume3D synth_cube(Shape shape, std::uint64_t seed)
{
    Rng rng(seed);
    const std::size_t n = shape.voxels();
    std::vector<double> field(n);
    for (double& f : field)
        f = rng.normal();
    for (int pass = 0; pass < 3; ++pass)
        for (int axis = 0; axis < 3; ++axis)
            box_blur(field, shape, axis, 2);

    double mean = 0.0;
    for (double f : field)
        mean += f;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double f : field)
        var += (f - mean) * (f - mean);
    const double sd = std::sqrt(var / static_cast<double>(n)) + 1e-12;
    for (double& f : field)
        f = 140.0 + 28.0 * (f - mean) / sd;

    // Filaments: segments with a Gaussian cross-section.
    const int filaments = 2 + static_cast<int>(rng.below(4));
    for (int f = 0; f < filaments; ++f) {
        double a[3], b[3];
        for (int i = 0; i < 3; ++i) {
            a[i] = rng.uniform(0.0, static_cast<double>(shape[i]));
            b[i] = rng.uniform(0.0, static_cast<double>(shape[i]));
        }
        const double sigma = rng.uniform(0.8, 1.8);
        const double depth = rng.uniform(40.0, 80.0);
        double ab[3] = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
        const double len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2] + 1e-12;
        std::size_t i = 0;
        for (std::size_t d = 0; d < shape.d; ++d)
            for (std::size_t h = 0; h < shape.h; ++h)
                for (std::size_t w = 0; w < shape.w; ++w, ++i) {
                    const double p[3] = {static_cast<double>(d), static_cast<double>(h), static_cast<double>(w)};
                    double t = ((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1] + (p[2] - a[2]) * ab[2]) / len2;
                    t = std::clamp(t, 0.0, 1.0);
                    double dist2 = 0.0;
                    for (int k = 0; k < 3; ++k) {
                        const double c = p[k] - (a[k] + t * ab[k]);
                        dist2 += c * c;
                    }
                    field[i] -= depth * std::exp(-dist2 / (2.0 * sigma * sigma));
                }
    }

    for (double& f : field)
        f = std::clamp(std::round(f + 1.5 * rng.normal()), 0.0, 255.0);
    return Volume3D(shape, std::move(field), ValueDomain::U8Raw);
}

Volume3D random_cube(Shape shape, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<double> v(shape.voxels());
    for (double& x : v)
        x = static_cast<double>(rng.below(256));
    return Volume3D(shape, std::move(v), ValueDomain::U8Raw);
}

std::vector<std::string> write_synth_dataset(const std::string& dir, std::size_t count, Shape shape,
                                             std::uint64_t seed)
{
    std::filesystem::create_directories(dir);
    std::vector<std::string> paths;
    for (std::size_t i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "cube_%03zu.v3d", i);
        const std::string path = (std::filesystem::path(dir) / name).string();
        save_v3d(synth_cube(shape, mix_seed(seed, i)), path);
        paths.push_back(path);
    }
    return paths;
}

} // namespace volift
