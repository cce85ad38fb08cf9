#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace volift {

// Axis order is (axial D, vertical H, horizontal W); W varies fastest in memory.
enum Axis : int { kAxial = 0, kVertical = 1, kHorizontal = 2 };

struct Shape {
    std::size_t d = 1;
    std::size_t h = 1;
    std::size_t w = 1;

    std::size_t voxels() const { return d * h * w; }
    std::size_t operator[](int axis) const { return axis == 0 ? d : axis == 1 ? h : w; }
    std::size_t& operator[](int axis) { return axis == 0 ? d : axis == 1 ? h : w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

enum class ValueDomain { U8Raw, Normalized, Coefficient };

// Dense 3-D scalar grid. A U8Raw volume only ever holds integers in [0, 255];
// that is checked on construction and by save_raw.
class Volume3D {
public:
    Volume3D() = default;
    explicit Volume3D(Shape shape, ValueDomain domain = ValueDomain::Coefficient);
    Volume3D(Shape shape, std::vector<double> data, ValueDomain domain = ValueDomain::Coefficient);

    const Shape& shape() const { return shape_; }
    ValueDomain domain() const { return domain_; }
    void set_domain(ValueDomain domain) { domain_ = domain; }
    std::size_t size() const { return data_.size(); }

    std::size_t index(std::size_t d, std::size_t h, std::size_t w) const
    {
        return (d * shape_.h + h) * shape_.w + w;
    }
    double& operator()(std::size_t d, std::size_t h, std::size_t w) { return data_[index(d, h, w)]; }
    double operator()(std::size_t d, std::size_t h, std::size_t w) const { return data_[index(d, h, w)]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double>& values() { return data_; }

    bool operator==(const Volume3D& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    Shape shape_{0, 0, 0};
    std::vector<double> data_;
    ValueDomain domain_ = ValueDomain::Coefficient;
};

// True when every voxel is an integer in [0, 255].
bool is_u8_valued(const Volume3D& v);
bool is_integer_valued(const Volume3D& v);

// Headerless u8 files, W fastest, D slowest.
Volume3D load_raw(const std::string& path, Shape shape);
void save_raw(const Volume3D& v, const std::string& path);

// ".v3d": "V3D1" + D, H, W as u32 LE + raw u8 payload.
Volume3D load_v3d(const std::string& path);
void save_v3d(const Volume3D& v, const std::string& path);

// Picks the format from the extension; raw files need an explicit shape.
Volume3D load_volume(const std::string& path, const Shape* raw_shape);
void save_volume(const Volume3D& v, const std::string& path);

// Rounds every dimension up to a multiple of m, filling with edge replication.
Volume3D pad_to_multiple(const Volume3D& v, std::size_t m);

// Leading sub-block of the given shape.
Volume3D crop(const Volume3D& v, Shape shape);

// Sub-block starting at origin.
Volume3D extract(const Volume3D& v, std::array<std::size_t, 3> origin, Shape shape);

} // namespace volift
