#include <gtest/gtest.h>

#include <random>

#include "cadavae/numerics.hpp"
#include "oracles.hpp"

using namespace cadavae;

namespace {

double sum_outputs(const MlpParams& p, const Matrix2D& x) {
    const Matrix2D y = mlp_forward(p, x).output;
    double s = 0.0;
    for (double v : y.values()) s += v;
    return s;
}

// Loss = sum(W_out .* y) for a fixed random weighting of the outputs.
double weighted_loss(const MlpParams& p, const Matrix2D& x, const Matrix2D& w) {
    const Matrix2D y = mlp_forward(p, x).output;
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * w.values()[i];
    return s;
}

}  // namespace

TEST(Mlp, ZeroWeightsReturnBias) {
    MlpParams p;
    p.layers.push_back(AffineLayer::zeros(3, 4));
    p.layers[0].bias = {0.5, -1.0, 2.0};
    std::mt19937_64 gen(1);
    const Matrix2D x = oracle::random_matrix(5, 4, gen);
    const Matrix2D y = mlp_forward(p, x).output;
    for (std::size_t r = 0; r < 5; ++r) {
        EXPECT_EQ(y(r, 0), 0.5);
        EXPECT_EQ(y(r, 1), -1.0);
        EXPECT_EQ(y(r, 2), 2.0);
    }
}

TEST(Mlp, IdentityLayer) {
    MlpParams p;
    p.layers.push_back(AffineLayer::zeros(3, 3));
    for (std::size_t i = 0; i < 3; ++i) p.layers[0].weight(i, i) = 1.0;
    std::mt19937_64 gen(2);
    const Matrix2D x = oracle::random_matrix(4, 3, gen);
    EXPECT_EQ(mlp_forward(p, x).output, x);
}

TEST(Mlp, ForwardMatchesScalarLoop) {
    std::mt19937_64 gen(3);
    const MlpParams p = oracle::random_mlp({3, 4, 2}, gen);
    const Matrix2D x = oracle::random_matrix(6, 3, gen);
    const Matrix2D got = mlp_forward(p, x).output;
    const Matrix2D want = oracle::mlp_forward(p, x);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.values()[i], want.values()[i], 1e-12);
}

TEST(Mlp, ForwardIsBitDeterministic) {
    SeededRng rng(4);
    const std::size_t dims[] = {64, 300, 128};
    const MlpParams p = MlpParams::glorot(dims, rng);
    const Matrix2D x = gaussian_sample(rng, 50, 64);
    EXPECT_EQ(mlp_forward(p, x).output, mlp_forward(p, x).output);
}

TEST(Mlp, ShapeMismatchThrows) {
    std::mt19937_64 gen(5);
    const MlpParams p = oracle::random_mlp({3, 4, 2}, gen);
    EXPECT_THROW(mlp_forward(p, Matrix2D(2, 5)), DimensionError);
    EXPECT_THROW(mlp_forward(MlpParams{}, Matrix2D(2, 5)), DimensionError);
}

TEST(Mlp, LinearBackwardAnalytic) {
    MlpParams p;
    p.layers.push_back(AffineLayer::zeros(2, 2));
    p.layers[0].weight(0, 0) = p.layers[0].weight(1, 1) = 1.0;
    const Matrix2D x(3, 2, {1.0, 2.0, -0.5, 4.0, 3.0, -1.0});
    auto fwd = mlp_forward(p, x);
    const auto g = mlp_backward(p, fwd.cache, Matrix2D(3, 2, 1.0));
    // dW[o][i] = sum_b x[b][i] for every output o.
    for (std::size_t o = 0; o < 2; ++o) {
        EXPECT_DOUBLE_EQ(g.params.layers[0].weight(o, 0), 3.5);
        EXPECT_DOUBLE_EQ(g.params.layers[0].weight(o, 1), 5.0);
        EXPECT_DOUBLE_EQ(g.params.layers[0].bias[o], 3.0);
    }
    for (double v : g.input.values()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
    std::mt19937_64 gen(6);
    std::uniform_int_distribution<std::size_t> dim(1, 8);
    std::uniform_int_distribution<std::size_t> depth(1, 3);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::size_t> dims{dim(gen)};
        for (std::size_t k = 0, n = depth(gen); k < n; ++k) dims.push_back(dim(gen));
        MlpParams p = oracle::random_mlp(dims, gen);
        Matrix2D x = oracle::random_matrix(dim(gen), dims.front(), gen);
        const Matrix2D w = oracle::random_matrix(x.rows(), dims.back(), gen);
        auto fwd = mlp_forward(p, x);
        const auto g = mlp_backward(p, fwd.cache, w);
        auto loss = [&] { return weighted_loss(p, x, w); };
        for (std::size_t k = 0; k < p.layers.size(); ++k) {
            const auto fd_w = oracle::central_diff(p.layers[k].weight.values(), loss);
            const auto fd_b = oracle::central_diff(p.layers[k].bias, loss);
            for (std::size_t i = 0; i < fd_w.size(); ++i)
                worst = std::max(worst, oracle::rel_err(g.params.layers[k].weight.values()[i], fd_w[i]));
            for (std::size_t i = 0; i < fd_b.size(); ++i)
                worst = std::max(worst, oracle::rel_err(g.params.layers[k].bias[i], fd_b[i]));
        }
        const auto fd_x = oracle::central_diff(x.values(), loss);
        for (std::size_t i = 0; i < fd_x.size(); ++i) worst = std::max(worst, oracle::rel_err(g.input.values()[i], fd_x[i]));
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(Mlp, ReluSubgradientAtZeroIsZero) {
    // Hidden unit pre-activation is exactly 0 for this input.
    MlpParams p;
    p.layers.push_back(AffineLayer::zeros(1, 1));
    p.layers.push_back(AffineLayer::zeros(1, 1));
    p.layers[0].weight(0, 0) = 2.0;
    p.layers[0].bias[0] = -2.0;
    p.layers[1].weight(0, 0) = 3.0;
    const Matrix2D x(1, 1, {1.0});
    auto fwd = mlp_forward(p, x);
    const auto g = mlp_backward(p, fwd.cache, Matrix2D(1, 1, 1.0));
    EXPECT_EQ(g.params.layers[0].weight(0, 0), 0.0);
    EXPECT_EQ(g.params.layers[0].bias[0], 0.0);
    EXPECT_EQ(g.input(0, 0), 0.0);
}

TEST(Mlp, StaleCacheIsStateError) {
    std::mt19937_64 gen(7);
    const MlpParams p = oracle::random_mlp({3, 4, 2}, gen);
    const MlpParams other = oracle::random_mlp({5, 4, 2}, gen);
    auto fwd = mlp_forward(other, oracle::random_matrix(2, 5, gen));
    EXPECT_THROW(mlp_backward(p, fwd.cache, Matrix2D(2, 2)), StateError);
    EXPECT_THROW(mlp_backward(p, MlpCache{}, Matrix2D(2, 2)), StateError);
}

TEST(Mlp, SumLossGradientViaHelper) {
    std::mt19937_64 gen(8);
    MlpParams p = oracle::random_mlp({2, 3, 2}, gen);
    const Matrix2D x = oracle::random_matrix(4, 2, gen);
    auto fwd = mlp_forward(p, x);
    const auto g = mlp_backward(p, fwd.cache, Matrix2D(4, 2, 1.0));
    const auto fd = oracle::central_diff(p.layers[0].bias, [&] { return sum_outputs(p, x); });
    for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_LT(oracle::rel_err(g.params.layers[0].bias[i], fd[i]), 1e-6);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    std::vector<double> w{1.0};
    const std::vector<double> g{2.0};
    AdamState s(1e-3);
    const ParamView pv[] = {{"w", w}};
    const GradView gv[] = {{"w", g}};
    adam_step(pv, gv, s);
    EXPECT_NEAR(w[0] - 1.0, -1e-3 * 2.0 / (2.0 + 1e-8), 1e-15);
    EXPECT_EQ(s.step, 1u);
}

TEST(Adam, ZeroGradientIsIdentity) {
    std::mt19937_64 gen(9);
    Matrix2D w = oracle::random_matrix(4, 5, gen);
    const Matrix2D before = w;
    const std::vector<double> zero(w.size(), 0.0);
    AdamState s(0.1);
    const ParamView pv[] = {{"w", w.values()}};
    const GradView gv[] = {{"w", zero}};
    for (int i = 0; i < 50; ++i) adam_step(pv, gv, s);
    EXPECT_EQ(w, before);
}

TEST(Adam, QuadraticMatchesScalarRecurrence) {
    // Independent scalar Adam on f(w) = (w - 3)^2.
    double ref = 0.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 100; ++t) {
        const double g = 2.0 * (ref - 3.0);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        ref -= 0.1 * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
    }
    std::vector<double> w{0.0};
    std::vector<double> g{0.0};
    AdamState s(0.1);
    const ParamView pv[] = {{"w", w}};
    const GradView gv[] = {{"w", g}};
    for (int t = 0; t < 100; ++t) {
        g[0] = 2.0 * (w[0] - 3.0);
        adam_step(pv, gv, s);
    }
    EXPECT_NEAR(w[0], ref, 1e-12);
    EXPECT_LT(std::abs(w[0] - 3.0), 3.0);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
    std::vector<double> a{1.0}, b{1.0};
    const std::vector<double> ga{0.5}, gb{std::nan("")};
    AdamState s;
    const ParamView pv[] = {{"enc.w", a}, {"dec.b", b}};
    const GradView gv[] = {{"enc.w", ga}, {"dec.b", gb}};
    try {
        adam_step(pv, gv, s);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("dec.b"), std::string::npos);
    }
    EXPECT_EQ(a[0], 1.0);  // nothing updated
}

TEST(Rng, SameSeedSameMatrix) {
    SeededRng a(42), b(42);
    EXPECT_EQ(gaussian_sample(a, 7, 9), gaussian_sample(b, 7, 9));
    EXPECT_EQ(a.counter(), b.counter());
}

TEST(Rng, DifferentSeedsDiffer) {
    SeededRng a(1), b(2);
    EXPECT_NE(gaussian_sample(a, 3, 3), gaussian_sample(b, 3, 3));
    SeededRng c(1);
    SeededRng d = c.substream(1);
    EXPECT_NE(gaussian_sample(c, 3, 3), gaussian_sample(d, 3, 3));
}

TEST(Rng, GaussianMoments) {
    SeededRng rng(123);
    const Matrix2D m = gaussian_sample(rng, 1000, 1000);
    double mean = 0.0;
    for (double v : m.values()) mean += v;
    mean /= static_cast<double>(m.size());
    double var = 0.0;
    for (double v : m.values()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(m.size());
    EXPECT_LT(std::abs(mean), 0.01);
    EXPECT_LT(std::abs(var - 1.0), 0.01);
}

TEST(Rng, SubstreamDoesNotAdvanceParent) {
    SeededRng a(9);
    (void)a.substream(3);
    EXPECT_EQ(a.counter(), 0u);
}
