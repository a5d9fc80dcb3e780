#include "datacook/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "datacook/errors.hpp"
#include "datacook/rng.hpp"

namespace datacook {

const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::Raw: return "raw";
        case Provenance::Cooked: return "cooked";
        case Provenance::Noise: return "noise";
        case Provenance::Perturbation: return "perturbation";
    }
    return "unknown";
}

std::vector<size_t> Dataset::sample_shape() const {
    if (images.rank() < 2) throw ShapeError("dataset images must be [N, ...sample]");
    return {images.shape().begin() + 1, images.shape().end()};
}

size_t Dataset::sample_numel() const {
    size_t n = 1;
    for (size_t d : sample_shape()) n *= d;
    return n;
}

Tensor Dataset::sample(size_t i) const {
    if (i >= size()) throw ParameterError("dataset sample index out of range");
    const size_t stride = sample_numel();
    std::vector<double> v(images.data() + i * stride, images.data() + (i + 1) * stride);
    return Tensor::from_data(sample_shape(), std::move(v));
}

void Dataset::set_sample(size_t i, const Tensor& x) {
    if (i >= size()) throw ParameterError("dataset sample index out of range");
    if (x.shape() != sample_shape())
        throw ShapeError("set_sample: shape does not match dataset samples");
    std::memcpy(images.data() + i * sample_numel(), x.data(),
                sample_numel() * sizeof(double));
}

void Dataset::validate() const {
    if (labels.empty()) throw ParameterError("dataset is empty");
    if (images.rank() < 2) throw ShapeError("dataset images must be [N, ...sample]");
    if (images.shape()[0] != labels.size())
        throw ShapeError("dataset image count != label count");
    if (num_classes < 2) throw ParameterError("dataset needs num_classes >= 2");
    for (int l : labels)
        if (l < 0 || l >= num_classes)
            throw ParameterError("dataset label out of range [0, num_classes)");
    if (!images.all_finite()) throw NumericError("dataset images contain non-finite values");
    // Perturbation datasets hold re-centered differences, so their range is
    // wider than the [0,1] pixel range of every other provenance.
    const double lo = provenance == Provenance::Perturbation ? -0.5 : 0.0;
    const double hi = provenance == Provenance::Perturbation ? 1.5 : 1.0;
    for (size_t i = 0; i < images.numel(); ++i)
        if (images[i] < lo || images[i] > hi)
            throw ParameterError("dataset pixel outside [" + std::to_string(lo) + "," +
                                 std::to_string(hi) + "]");
}

uint64_t Dataset::content_fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t d : images.shape()) h = fnv1a(&d, sizeof d, h);
    h = fnv1a(images.data(), images.numel() * sizeof(double), h);
    for (int l : labels) {
        uint64_t v = static_cast<uint64_t>(l);
        h = fnv1a(&v, sizeof v, h);
    }
    uint64_t k = static_cast<uint64_t>(num_classes);
    return fnv1a(&k, sizeof k, h);
}

// ---- DCD1 container ----
// magic "DCD1" | u8 version | u8 provenance | u64 config fingerprint |
// u32 N | u8 ndim | ndim×u32 dims | u32 num_classes | N×u16 labels |
// N×prod(dims)×f64 images   (all little-endian)

namespace {

constexpr char kMagic[4] = {'D', 'C', 'D', '1'};
constexpr uint8_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t take_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4)
        throw FormatError(std::string("truncated dataset while reading ") + what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t take_u64(std::istream& is, const char* what) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (is.gcount() != 8)
        throw FormatError(std::string("truncated dataset while reading ") + what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

int take_u8(std::istream& is, const char* what) {
    int c = is.get();
    if (c == EOF)
        throw FormatError(std::string("truncated dataset while reading ") + what);
    return c;
}

} // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
    ds.validate();
    if (ds.num_classes > 65535)
        throw ParameterError("dataset container stores labels as u16");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open for writing: " + path);
    os.write(kMagic, 4);
    os.put(static_cast<char>(kVersion));
    os.put(static_cast<char>(ds.provenance));
    put_u64(os, ds.config_fingerprint);
    const auto sshape = ds.sample_shape();
    put_u32(os, static_cast<uint32_t>(ds.size()));
    os.put(static_cast<char>(sshape.size()));
    for (size_t d : sshape) put_u32(os, static_cast<uint32_t>(d));
    put_u32(os, static_cast<uint32_t>(ds.num_classes));
    for (int l : ds.labels) {
        unsigned char b[2] = {static_cast<unsigned char>(l & 0xff),
                              static_cast<unsigned char>((l >> 8) & 0xff)};
        os.write(reinterpret_cast<const char*>(b), 2);
    }
    for (size_t i = 0; i < ds.images.numel(); ++i) {
        uint64_t bits;
        double v = ds.images[i];
        std::memcpy(&bits, &v, 8);
        put_u64(os, bits);
    }
    if (!os) throw Error("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open for reading: " + path);
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("bad dataset magic (expected DCD1)");
    if (take_u8(is, "version") != kVersion)
        throw FormatError("unsupported dataset version");
    int prov = take_u8(is, "provenance");
    if (prov > 3) throw FormatError("unknown dataset provenance code");
    Dataset ds;
    ds.provenance = static_cast<Provenance>(prov);
    ds.config_fingerprint = take_u64(is, "config fingerprint");
    const uint32_t n = take_u32(is, "sample count");
    if (n == 0) throw FormatError("dataset declares zero samples");
    const int ndim = take_u8(is, "ndim");
    if (ndim == 0) throw FormatError("dataset declares zero-rank samples");
    std::vector<size_t> shape{static_cast<size_t>(n)};
    size_t per_sample = 1;
    for (int i = 0; i < ndim; ++i) {
        uint32_t d = take_u32(is, "dimension");
        if (d == 0) throw FormatError("dataset declares a zero dimension");
        shape.push_back(d);
        if (per_sample > std::numeric_limits<size_t>::max() / d)
            throw FormatError("dataset dimensions overflow");
        per_sample *= d;
    }
    const uint32_t num_classes = take_u32(is, "num_classes");
    if (num_classes < 2) throw FormatError("dataset declares num_classes < 2");
    ds.num_classes = static_cast<int>(num_classes);
    ds.labels.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        unsigned char b[2];
        is.read(reinterpret_cast<char*>(b), 2);
        if (is.gcount() != 2) throw FormatError("truncated dataset while reading labels");
        int l = b[0] | (b[1] << 8);
        if (l >= ds.num_classes)
            throw FormatError("dataset label " + std::to_string(l) +
                              " >= num_classes " + std::to_string(ds.num_classes));
        ds.labels[i] = l;
    }
    ds.images = Tensor(shape);
    for (size_t i = 0; i < ds.images.numel(); ++i) {
        uint64_t bits = take_u64(is, "image payload");
        double v;
        std::memcpy(&v, &bits, 8);
        ds.images[i] = v;
    }
    is.peek();
    if (!is.eof()) throw FormatError("trailing bytes after dataset payload");
    ds.validate();
    return ds;
}

double ssim_batch_min(const Dataset& a, const Dataset& b, const SsimConfig& cfg) {
    if (a.size() != b.size())
        throw ParameterError("ssim_batch_min: datasets differ in length");
    return ssim_batch_min(a.images, b.images, cfg);
}

// ---- synthetic corpus ----

void SynthRecipe::validate() const {
    if (classes < 2)
        throw ParameterError("synthetic recipe needs >= 2 classes (cross-entropy "
                             "training is undefined on one class)");
    if (per_class_train < 1 || per_class_test < 1)
        throw ParameterError("synthetic recipe needs >= 1 sample per class per split");
    if (side < 8) throw ParameterError("synthetic recipe needs side >= 8");
    if (separation <= 0.0 || separation > 1.0)
        throw ParameterError("synthetic recipe separation must be in (0, 1]");
    if (blob_sigma <= 0.0 || center_jitter < 0.0 || pixel_noise < 0.0 ||
        amplitude <= 0.0 || amplitude > 1.0)
        throw ParameterError("synthetic recipe has out-of-range blob parameters");
}

uint64_t SynthRecipe::fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix_i = [&h](int64_t v) { h = fnv1a(&v, sizeof v, h); };
    auto mix_d = [&h](double v) { h = fnv1a(&v, sizeof v, h); };
    mix_i(classes);
    mix_i(per_class_train);
    mix_i(per_class_test);
    mix_i(side);
    mix_d(separation);
    mix_d(blob_sigma);
    mix_d(center_jitter);
    mix_d(pixel_noise);
    mix_d(amplitude);
    return h;
}

namespace {

Dataset synth_split(const SynthRecipe& r, Rng& rng, int per_class, Split split) {
    const size_t n = static_cast<size_t>(r.classes) * per_class;
    const size_t s = static_cast<size_t>(r.side);
    Dataset ds;
    ds.images = Tensor({n, s, s});
    ds.labels.resize(n);
    ds.num_classes = r.classes;
    ds.split = split;
    ds.provenance = Provenance::Raw;

    const double mid = (r.side - 1) / 2.0;
    const double radius = r.separation * mid * 0.75;
    const double two_s2 = 2.0 * r.blob_sigma * r.blob_sigma;
    for (size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % r.classes);
        ds.labels[i] = cls;
        // class centers evenly spaced on a circle; the phase offset keeps
        // them off the pixel axes
        const double ang = 2.0 * M_PI * cls / r.classes + 0.39;
        const double cy = mid + radius * std::sin(ang) + r.center_jitter * rng.normal();
        const double cx = mid + radius * std::cos(ang) + r.center_jitter * rng.normal();
        // Each blob core is randomly bright or dark against a mid-gray
        // background, so no single linear template carries the full class
        // signal and a classifier has to learn the polarity-invariant
        // geometry. A faint always-bright halo around the core marks the site
        // regardless of polarity; that weak linear cue lets training get off
        // the ground reliably while most of the accuracy still comes from the
        // slower polarity-invariant pathway.
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double halo_r = 1.6 * r.blob_sigma;
        const double halo_amp = 0.3 * r.amplitude;
        double* img = ds.images.data() + i * s * s;
        for (size_t y = 0; y < s; ++y) {
            for (size_t x = 0; x < s; ++x) {
                const double dy = y - cy, dx = x - cx;
                const double rho = std::sqrt(dy * dy + dx * dx);
                double v = 0.5 + sign * r.amplitude * std::exp(-(rho * rho) / two_s2);
                const double ring = (rho - halo_r) / 0.7;
                v += halo_amp * std::exp(-0.5 * ring * ring);
                v += r.pixel_noise * rng.normal();
                img[y * s + x] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return ds;
}

double one_nn_accuracy(const Dataset& train, const Dataset& test) {
    const size_t dim = train.sample_numel();
    const double* tr = train.images.data();
    const double* te = test.images.data();
    std::vector<unsigned char> hit(test.size(), 0);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(test.size()); ++i) {
        const double* q = te + static_cast<size_t>(i) * dim;
        double best = std::numeric_limits<double>::infinity();
        size_t best_j = 0;
        for (size_t j = 0; j < train.size(); ++j) {
            const double* p = tr + j * dim;
            double d = 0.0;
            for (size_t k = 0; k < dim; ++k) {
                const double diff = q[k] - p[k];
                d += diff * diff;
                if (d >= best) break;
            }
            if (d < best) {
                best = d;
                best_j = j;
            }
        }
        hit[i] = train.labels[best_j] == test.labels[static_cast<size_t>(i)] ? 1 : 0;
    }
    size_t ok = 0;
    for (unsigned char h : hit) ok += h;
    return static_cast<double>(ok) / static_cast<double>(test.size());
}

} // namespace

SynthResult synth_dataset(const SynthRecipe& recipe, uint64_t seed) {
    recipe.validate();
    SynthResult res;
    {
        Rng rng(derive_seed(seed, 1));
        res.train = synth_split(recipe, rng, recipe.per_class_train, Split::Train);
    }
    {
        Rng rng(derive_seed(seed, 2));
        res.test = synth_split(recipe, rng, recipe.per_class_test, Split::Test);
    }
    uint64_t fp = recipe.fingerprint();
    fp = fnv1a(&seed, sizeof seed, fp);
    res.train.config_fingerprint = fp;
    res.test.config_fingerprint = fp;
    res.train.validate();
    res.test.validate();
    res.nn_accuracy = one_nn_accuracy(res.train, res.test);
    res.warning = res.nn_accuracy < 0.9;
    return res;
}

} // namespace datacook
