#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace datacook {

class Rng;

// Dense n-dimensional array of doubles, flat row-major storage.
// Shape dims are all >= 1 and product(shape) == data.size() at all times.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<size_t> shape, double fill = 0.0);
    static Tensor from_data(std::vector<size_t> shape, std::vector<double> data);

    const std::vector<size_t>& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    // Elementwise ops, shape-checked where a second operand is involved.
    void add(const Tensor& other);
    void sub(const Tensor& other);
    void scale(double s);
    void axpy(double alpha, const Tensor& x); // this += alpha * x
    void clamp(double lo, double hi);
    void fill(double v);

    double max_abs_diff(const Tensor& other) const;

private:
    std::vector<size_t> shape_;
    std::vector<double> data_;
};

// i.i.d. N(0, sigma^2) samples; sigma must be >= 0.
Tensor gaussian_tensor(Rng& rng, const std::vector<size_t>& shape, double sigma);

// Binary container, little-endian:
//   magic "DCT1" | u8 version=1 | u8 ndim | ndim x u32 dims | numel x f64
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

// Whole-file variants; load requires the file to contain exactly one tensor.
void tensor_save(const std::string& path, const Tensor& t);
Tensor tensor_load(const std::string& path);

} // namespace datacook
