#include "datacook/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "datacook/errors.hpp"
#include "datacook/rng.hpp"

namespace datacook {

namespace {

constexpr char kMagic[4] = {'D', 'C', 'T', '1'};
constexpr uint8_t kVersion = 1;
// Guards the element-count product against absurd headers.
constexpr uint64_t kMaxElements = 1ull << 32;

size_t checked_numel(const std::vector<size_t>& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
    uint64_t n = 1;
    for (size_t d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be >= 1");
        if (d > kMaxElements || n > kMaxElements / d)
            throw ShapeError("tensor dimension product overflows");
        n *= d;
    }
    return static_cast<size_t>(n);
}

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_f64(std::ostream& os, double v) {
    uint64_t u = std::bit_cast<uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void read_exact(std::istream& is, void* dst, size_t n, const char* what) {
    is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n)
        throw FormatError(std::string("truncated tensor container while reading ") + what);
}

uint32_t read_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    read_exact(is, b, 4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& is, const char* what) {
    unsigned char b[8];
    read_exact(is, b, 8, what);
    uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(u);
}

} // namespace

Tensor::Tensor(std::vector<size_t> shape, double fill) {
    size_t n = checked_numel(shape);
    shape_ = std::move(shape);
    data_.assign(n, fill);
}

Tensor Tensor::from_data(std::vector<size_t> shape, std::vector<double> data) {
    size_t n = checked_numel(shape);
    if (n != data.size()) throw ShapeError("data length does not match shape product");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::add(const Tensor& other) {
    if (!same_shape(other)) throw ShapeError("add: shape mismatch");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

void Tensor::sub(const Tensor& other) {
    if (!same_shape(other)) throw ShapeError("sub: shape mismatch");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
}

void Tensor::scale(double s) {
    for (double& v : data_) v *= s;
}

void Tensor::axpy(double alpha, const Tensor& x) {
    if (!same_shape(x)) throw ShapeError("axpy: shape mismatch");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * x.data_[i];
}

void Tensor::clamp(double lo, double hi) {
    for (double& v : data_) v = std::min(hi, std::max(lo, v));
}

void Tensor::fill(double v) {
    std::fill(data_.begin(), data_.end(), v);
}

double Tensor::max_abs_diff(const Tensor& other) const {
    if (!same_shape(other)) throw ShapeError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (size_t i = 0; i < data_.size(); ++i)
        m = std::max(m, std::fabs(data_[i] - other.data_[i]));
    return m;
}

Tensor gaussian_tensor(Rng& rng, const std::vector<size_t>& shape, double sigma) {
    if (sigma < 0.0) throw ParameterError("gaussian_tensor: sigma must be >= 0");
    Tensor t(shape);
    if (sigma == 0.0) return t;
    for (size_t i = 0; i < t.numel(); ++i) t[i] = sigma * rng.normal();
    return t;
}

void write_tensor(std::ostream& os, const Tensor& t) {
    if (t.rank() > 255) throw ShapeError("tensor rank exceeds container limit");
    for (size_t d : t.shape())
        if (d > std::numeric_limits<uint32_t>::max())
            throw ShapeError("tensor dimension exceeds u32");
    os.write(kMagic, 4);
    os.put(static_cast<char>(kVersion));
    os.put(static_cast<char>(t.rank()));
    for (size_t d : t.shape()) write_u32(os, static_cast<uint32_t>(d));
    for (size_t i = 0; i < t.numel(); ++i) write_f64(os, t[i]);
}

Tensor read_tensor(std::istream& is) {
    char magic[4];
    read_exact(is, magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("bad tensor magic (expected DCT1)");
    unsigned char version = 0, ndim = 0;
    read_exact(is, &version, 1, "version");
    if (version != kVersion) throw FormatError("unsupported tensor container version");
    read_exact(is, &ndim, 1, "ndim");
    if (ndim == 0) throw FormatError("tensor container with zero dimensions");
    std::vector<size_t> shape(ndim);
    for (auto& d : shape) d = read_u32(is, "dims");
    uint64_t n = 1;
    for (size_t d : shape) {
        if (d == 0) throw FormatError("tensor container with zero-size dimension");
        if (n > kMaxElements / d) throw FormatError("tensor dimension product overflows");
        n *= d;
    }
    std::vector<double> data(static_cast<size_t>(n));
    for (auto& v : data) v = read_f64(is, "payload");
    return Tensor::from_data(std::move(shape), std::move(data));
}

void tensor_save(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open for writing: " + path);
    write_tensor(os, t);
    if (!os) throw Error("write failed: " + path);
}

Tensor tensor_load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open for reading: " + path);
    Tensor t = read_tensor(is);
    is.peek();
    if (!is.eof()) throw FormatError("trailing bytes after tensor payload");
    return t;
}

} // namespace datacook
