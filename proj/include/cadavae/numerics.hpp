#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cadavae/errors.hpp"

namespace cadavae {

// ---------------------------------------------------------------------------
// Matrix2D
// ---------------------------------------------------------------------------

/// Dense row-major matrix of doubles.
class Matrix2D {
public:
    Matrix2D() = default;
    Matrix2D(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix2D(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw DimensionError("Matrix2D: data length " + std::to_string(data_.size()) +
                                 " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Matrix2D&, const Matrix2D&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;

inline MatMap map(Matrix2D& m) {
    return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
inline ConstMatMap map(const Matrix2D& m) {
    return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

inline std::string shape(const Matrix2D& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace detail

/// Copies the given rows of `m` into a new matrix, in order.
inline Matrix2D gather_rows(const Matrix2D& m, std::span<const std::size_t> rows) {
    Matrix2D out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = m.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

/// Columns [first, first + count) of `m`.
inline Matrix2D column_block(const Matrix2D& m, std::size_t first, std::size_t count) {
    if (first + count > m.cols())
        throw DimensionError("column_block: range exceeds " + detail::shape(m));
    Matrix2D out(m.rows(), count);
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < count; ++c) out(r, c) = m(r, first + c);
    return out;
}

// ---------------------------------------------------------------------------
// SeededRng
// ---------------------------------------------------------------------------

/// Counter-based generator: the n-th draw is a pure function of (seed, n).
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

    std::uint64_t seed() const noexcept { return seed_; }
    /// Number of 64-bit words consumed so far.
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept { return mix(key_ + (counter_++) * 0x9e3779b97f4a7c15ULL); }

    /// Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [0, n). Requires n > 0.
    std::uint64_t below(std::uint64_t n) noexcept {
        // Lemire's multiply-shift; the residual bias is below 2^-64 * n.
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Standard normal via Box-Muller; consumes two words per draw.
    double normal() noexcept {
        const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Independent generator keyed by (this seed, tag). Does not advance this stream.
    SeededRng substream(std::uint64_t tag) const noexcept {
        return SeededRng(mix(seed_ + 0x3c6ef372fe94f82bULL) ^ mix(tag + 0xbb67ae8584caa73bULL));
    }

    template <class T>
    void shuffle(std::vector<T>& v) noexcept {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    static std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

inline Matrix2D gaussian_sample(SeededRng& rng, std::size_t rows, std::size_t cols) {
    Matrix2D out(rows, cols);
    for (double& v : out.values()) v = rng.normal();
    return out;
}

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

enum class Activation : std::uint8_t { ReLU };

struct AffineLayer {
    Matrix2D weight;  // out x in
    std::vector<double> bias;

    std::size_t in_dim() const noexcept { return weight.cols(); }
    std::size_t out_dim() const noexcept { return weight.rows(); }

    static AffineLayer zeros(std::size_t out, std::size_t in) {
        return {Matrix2D(out, in), std::vector<double>(out, 0.0)};
    }

    /// Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)); zero bias.
    static AffineLayer glorot(std::size_t out, std::size_t in, SeededRng& rng) {
        AffineLayer layer = zeros(out, in);
        const double a = std::sqrt(6.0 / static_cast<double>(in + out));
        for (double& w : layer.weight.values()) w = (2.0 * rng.uniform() - 1.0) * a;
        return layer;
    }

    friend bool operator==(const AffineLayer&, const AffineLayer&) = default;
};

/// Fully connected net: ReLU on every hidden layer, linear output.
struct MlpParams {
    std::vector<AffineLayer> layers;
    Activation hidden_activation = Activation::ReLU;

    std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
    std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

    /// dims = {in, hidden..., out}.
    static MlpParams glorot(std::span<const std::size_t> dims, SeededRng& rng) {
        if (dims.size() < 2) throw DimensionError("MlpParams: need at least input and output dims");
        MlpParams p;
        for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
            if (dims[i] == 0 || dims[i + 1] == 0) throw DimensionError("MlpParams: zero-sized layer");
            p.layers.push_back(AffineLayer::glorot(dims[i + 1], dims[i], rng));
        }
        return p;
    }

    /// Same topology, all parameters zero. Used as a gradient accumulator.
    MlpParams zeros_like() const {
        MlpParams g;
        g.hidden_activation = hidden_activation;
        for (const auto& l : layers) g.layers.push_back(AffineLayer::zeros(l.out_dim(), l.in_dim()));
        return g;
    }

    void validate() const {
        if (layers.empty()) throw DimensionError("MlpParams: no layers");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].bias.size() != layers[i].out_dim())
                throw DimensionError("MlpParams: layer " + std::to_string(i) + " bias length mismatch");
            if (i > 0 && layers[i].in_dim() != layers[i - 1].out_dim())
                throw DimensionError("MlpParams: layer " + std::to_string(i) + " does not chain");
        }
    }

    friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Activations recorded by mlp_forward. inputs[k] is the input to layer k.
struct MlpCache {
    std::vector<Matrix2D> inputs;
};

struct MlpOutput {
    Matrix2D output;
    MlpCache cache;
};

inline MlpOutput mlp_forward(const MlpParams& params, const Matrix2D& x) {
    if (params.layers.empty()) throw DimensionError("mlp_forward: empty network");
    if (x.cols() != params.in_dim())
        throw DimensionError("mlp_forward: input " + detail::shape(x) + " but network expects " +
                             std::to_string(params.in_dim()) + " columns");
    MlpOutput out;
    out.cache.inputs.reserve(params.layers.size());
    Matrix2D current = x;
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        const AffineLayer& layer = params.layers[k];
        Matrix2D y(current.rows(), layer.out_dim());
        auto ym = detail::map(y);
        ym.noalias() = detail::map(current) * detail::map(layer.weight).transpose();
        for (std::size_t r = 0; r < y.rows(); ++r) {
            auto row = y.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias[c];
        }
        if (k + 1 < params.layers.size())
            for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
        out.cache.inputs.push_back(std::move(current));
        current = std::move(y);
    }
    out.output = std::move(current);
    return out;
}

/// Backpropagates `grad_out` (d loss / d output) through the cached forward pass.
/// Parameter gradients are added into `grads` (same topology as `params`);
/// the gradient with respect to the network input is returned.
/// ReLU'(0) is taken as 0.
inline Matrix2D mlp_backward_accumulate(const MlpParams& params, const MlpCache& cache,
                                        const Matrix2D& grad_out, MlpParams& grads) {
    const std::size_t n_layers = params.layers.size();
    if (cache.inputs.size() != n_layers || n_layers == 0)
        throw StateError("mlp_backward: cache does not come from a forward pass of this network");
    for (std::size_t k = 0; k < n_layers; ++k)
        if (cache.inputs[k].cols() != params.layers[k].in_dim() ||
            cache.inputs[k].rows() != cache.inputs[0].rows())
            throw StateError("mlp_backward: stale cache at layer " + std::to_string(k));
    if (grad_out.rows() != cache.inputs[0].rows() || grad_out.cols() != params.out_dim())
        throw DimensionError("mlp_backward: grad_out " + detail::shape(grad_out) + " does not match output");
    if (grads.layers.size() != n_layers) throw DimensionError("mlp_backward: gradient topology mismatch");

    Matrix2D delta = grad_out;
    for (std::size_t k = n_layers; k-- > 0;) {
        const AffineLayer& layer = params.layers[k];
        AffineLayer& g = grads.layers[k];
        const Matrix2D& input = cache.inputs[k];
        detail::map(g.weight).noalias() += detail::map(delta).transpose() * detail::map(input);
        for (std::size_t r = 0; r < delta.rows(); ++r) {
            auto row = delta.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) g.bias[c] += row[c];
        }
        Matrix2D grad_in(delta.rows(), layer.in_dim());
        detail::map(grad_in).noalias() = detail::map(delta) * detail::map(layer.weight);
        if (k > 0) {
            // input[k] = relu(pre[k-1]); input > 0 exactly where pre > 0.
            auto gi = grad_in.values();
            auto in = input.values();
            for (std::size_t i = 0; i < gi.size(); ++i)
                if (!(in[i] > 0.0)) gi[i] = 0.0;
        }
        delta = std::move(grad_in);
    }
    return delta;
}

struct MlpGradients {
    MlpParams params;
    Matrix2D input;
};

inline MlpGradients mlp_backward(const MlpParams& params, const MlpCache& cache, const Matrix2D& grad_out) {
    MlpGradients g{params.zeros_like(), {}};
    g.input = mlp_backward_accumulate(params, cache, grad_out, g.params);
    return g;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

/// Named mutable view of one parameter tensor.
struct ParamView {
    std::string name;
    std::span<double> values;
};

/// Named read-only view of one gradient tensor.
struct GradView {
    std::string name;
    std::span<const double> values;
};

inline void append_views(MlpParams& p, const std::string& prefix, std::vector<ParamView>& out) {
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        out.push_back({prefix + ".layer" + std::to_string(k) + ".weight", p.layers[k].weight.values()});
        out.push_back({prefix + ".layer" + std::to_string(k) + ".bias", p.layers[k].bias});
    }
}

inline void append_views(const MlpParams& p, const std::string& prefix, std::vector<GradView>& out) {
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        out.push_back({prefix + ".layer" + std::to_string(k) + ".weight", p.layers[k].weight.values()});
        out.push_back({prefix + ".layer" + std::to_string(k) + ".bias", p.layers[k].bias});
    }
}

struct AdamState {
    std::size_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double learning_rate = 1e-3;

    explicit AdamState(double lr = 1e-3) : learning_rate(lr) {}
};

/// One bias-corrected Adam update. Moments are allocated on the first call.
/// Every gradient is checked before any parameter is touched.
inline void adam_step(std::span<const ParamView> params, std::span<const GradView> grads, AdamState& state) {
    if (params.size() != grads.size()) throw DimensionError("adam_step: parameter/gradient count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].values.size() != grads[i].values.size())
            throw DimensionError("adam_step: shape mismatch for " + params[i].name);
        for (double g : grads[i].values)
            if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in " + params[i].name);
    }
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.values.size(), 0.0);
            state.v.emplace_back(p.values.size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw StateError("adam_step: optimizer state built for other parameters");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (state.m[i].size() != params[i].values.size())
            throw StateError("adam_step: optimizer state shape mismatch for " + params[i].name);

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].values;
        auto g = grads[i].values;
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
            p[k] -= state.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + state.epsilon);
        }
    }
}

}  // namespace cadavae
