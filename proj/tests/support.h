#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "volift/rng.h"
#include "volift/volume.h"

namespace test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir()
    {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("volift_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline volift::Volume3D random_u8(volift::Shape s, std::uint64_t seed)
{
    volift::Rng rng(seed);
    std::vector<double> v(s.voxels());
    for (double& x : v)
        x = static_cast<double>(rng.below(256));
    return volift::Volume3D(s, std::move(v), volift::ValueDomain::U8Raw);
}

inline volift::Volume3D random_real(volift::Shape s, volift::Rng& rng, double amplitude = 1.0)
{
    volift::Volume3D v(s);
    for (double& x : v.data())
        x = rng.uniform(-amplitude, amplitude);
    return v;
}

inline double max_abs_diff(const volift::Volume3D& a, const volift::Volume3D& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace test
