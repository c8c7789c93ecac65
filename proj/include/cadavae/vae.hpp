#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cadavae/numerics.hpp"

namespace cadavae {

enum class Modality : std::uint8_t { ImageFeature = 0, Attribute = 1, Sentence = 2, WordVector = 3 };

inline std::string to_string(Modality m) {
    switch (m) {
        case Modality::ImageFeature: return "image";
        case Modality::Attribute: return "attribute";
        case Modality::Sentence: return "sentence";
        case Modality::WordVector: return "word2vec";
    }
    return "modality" + std::to_string(static_cast<int>(m));
}

inline bool is_known_modality(std::uint8_t id) { return id <= 3; }

/// Diagonal Gaussian stored as mean and log-variance.
struct DiagGaussian {
    std::vector<double> mu;
    std::vector<double> log_var;

    std::size_t dim() const noexcept { return mu.size(); }
    double sigma(std::size_t d) const { return std::exp(0.5 * log_var[d]); }
};

/// One DiagGaussian per row.
struct GaussianBatch {
    Matrix2D mu;
    Matrix2D log_var;

    std::size_t size() const noexcept { return mu.rows(); }
    std::size_t dim() const noexcept { return mu.cols(); }

    DiagGaussian at(std::size_t r) const {
        auto m = mu.row(r);
        auto lv = log_var.row(r);
        return {{m.begin(), m.end()}, {lv.begin(), lv.end()}};
    }
};

struct ModalityVAE {
    Modality modality = Modality::ImageFeature;
    MlpParams encoder;  // data_dim -> 2 * latent_dim
    MlpParams decoder;  // latent_dim -> data_dim

    std::size_t data_dim() const { return encoder.in_dim(); }
    std::size_t latent_dim() const { return decoder.in_dim(); }

    void validate() const {
        encoder.validate();
        decoder.validate();
        if (encoder.out_dim() != 2 * decoder.in_dim())
            throw DimensionError("ModalityVAE: encoder output must be twice the latent size");
        if (decoder.out_dim() != encoder.in_dim())
            throw DimensionError("ModalityVAE: decoder output must equal the data size");
    }

    friend bool operator==(const ModalityVAE&, const ModalityVAE&) = default;
};

/// Network sizes. Defaults are the one-hidden-layer architecture with a 64-d latent.
struct VaeConfig {
    std::size_t latent_dim = 64;
    std::vector<std::size_t> image_encoder_hidden{1560};
    std::vector<std::size_t> image_decoder_hidden{1660};
    std::vector<std::size_t> aux_encoder_hidden{1450};
    std::vector<std::size_t> aux_decoder_hidden{660};

    /// Large-scale setting: 128-d latent and two hidden layers everywhere.
    static VaeConfig imagenet() {
        VaeConfig c;
        c.latent_dim = 128;
        c.image_encoder_hidden = {1560, 1560};
        c.image_decoder_hidden = {1160, 1660};
        c.aux_encoder_hidden = {1450, 1450};
        c.aux_decoder_hidden = {460, 660};
        return c;
    }
};

inline ModalityVAE make_vae(Modality modality, std::size_t data_dim, const VaeConfig& cfg, SeededRng& rng) {
    if (data_dim == 0 || cfg.latent_dim == 0) throw DimensionError("make_vae: zero dimension");
    const bool image = modality == Modality::ImageFeature;
    const auto& enc_hidden = image ? cfg.image_encoder_hidden : cfg.aux_encoder_hidden;
    const auto& dec_hidden = image ? cfg.image_decoder_hidden : cfg.aux_decoder_hidden;

    std::vector<std::size_t> enc{data_dim};
    enc.insert(enc.end(), enc_hidden.begin(), enc_hidden.end());
    enc.push_back(2 * cfg.latent_dim);
    std::vector<std::size_t> dec{cfg.latent_dim};
    dec.insert(dec.end(), dec_hidden.begin(), dec_hidden.end());
    dec.push_back(data_dim);

    ModalityVAE vae;
    vae.modality = modality;
    vae.encoder = MlpParams::glorot(enc, rng);
    vae.decoder = MlpParams::glorot(dec, rng);
    return vae;
}

/// Splits an encoder output [mu | log_var] into a GaussianBatch.
inline GaussianBatch split_gaussian(const Matrix2D& enc_out) {
    if (enc_out.cols() % 2 != 0) throw DimensionError("split_gaussian: odd column count");
    const std::size_t d = enc_out.cols() / 2;
    return {column_block(enc_out, 0, d), column_block(enc_out, d, d)};
}

inline GaussianBatch encode(const ModalityVAE& vae, const Matrix2D& x) {
    if (x.cols() != vae.data_dim())
        throw DimensionError("encode: input has " + std::to_string(x.cols()) + " columns, " +
                             to_string(vae.modality) + " VAE expects " + std::to_string(vae.data_dim()));
    return split_gaussian(mlp_forward(vae.encoder, x).output);
}

inline Matrix2D decode(const ModalityVAE& vae, const Matrix2D& z) {
    if (z.cols() != vae.latent_dim()) throw DimensionError("decode: latent width mismatch");
    return mlp_forward(vae.decoder, z).output;
}

/// z = mu + exp(log_var / 2) * eps
inline std::vector<double> reparameterize(const DiagGaussian& g, std::span<const double> eps) {
    if (eps.size() != g.dim()) throw DimensionError("reparameterize: noise length mismatch");
    std::vector<double> z(g.dim());
    for (std::size_t d = 0; d < z.size(); ++d) z[d] = g.mu[d] + std::exp(0.5 * g.log_var[d]) * eps[d];
    return z;
}

inline Matrix2D reparameterize(const GaussianBatch& g, const Matrix2D& eps) {
    if (eps.rows() != g.size() || eps.cols() != g.dim())
        throw DimensionError("reparameterize: noise " + detail::shape(eps) + " vs latent " + detail::shape(g.mu));
    Matrix2D z(g.size(), g.dim());
    auto zv = z.values();
    auto mu = g.mu.values();
    auto lv = g.log_var.values();
    auto ev = eps.values();
    for (std::size_t i = 0; i < zv.size(); ++i) zv[i] = mu[i] + std::exp(0.5 * lv[i]) * ev[i];
    return z;
}

/// KL(N(mu, diag(exp(log_var))) || N(0, I)).
inline double kl_to_standard_normal(const DiagGaussian& g) {
    double kl = 0.0;
    for (std::size_t d = 0; d < g.dim(); ++d)
        kl += g.mu[d] * g.mu[d] + std::exp(g.log_var[d]) - 1.0 - g.log_var[d];
    return 0.5 * kl;
}

/// Sum over rows of the KL of each row.
inline double kl_sum(const GaussianBatch& g) {
    double kl = 0.0;
    auto mu = g.mu.values();
    auto lv = g.log_var.values();
    for (std::size_t i = 0; i < mu.size(); ++i) kl += mu[i] * mu[i] + std::exp(lv[i]) - 1.0 - lv[i];
    return 0.5 * kl;
}

inline double l1_sum(const Matrix2D& x, const Matrix2D& x_hat) {
    if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols())
        throw DimensionError("reconstruction_l1: " + detail::shape(x) + " vs " + detail::shape(x_hat));
    double s = 0.0;
    auto a = x.values();
    auto b = x_hat.values();
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s;
}

/// Mean over rows of the summed absolute error of each row.
inline double reconstruction_l1(const Matrix2D& x, const Matrix2D& x_hat) {
    const double s = l1_sum(x, x_hat);
    return x.rows() == 0 ? 0.0 : s / static_cast<double>(x.rows());
}

/// d/dx_hat of scale * sum |x - x_hat|; subgradient 0 at equality.
inline Matrix2D l1_grad(const Matrix2D& x, const Matrix2D& x_hat, double scale) {
    Matrix2D g(x.rows(), x.cols());
    auto gv = g.values();
    auto a = x.values();
    auto b = x_hat.values();
    for (std::size_t i = 0; i < gv.size(); ++i) {
        const double diff = b[i] - a[i];
        gv[i] = diff > 0.0 ? scale : (diff < 0.0 ? -scale : 0.0);
    }
    return g;
}

struct VaeGradients {
    MlpParams encoder;
    MlpParams decoder;

    static VaeGradients zeros_like(const ModalityVAE& vae) {
        return {vae.encoder.zeros_like(), vae.decoder.zeros_like()};
    }
};

struct VaeLoss {
    double total = 0.0;
    double reconstruction = 0.0;
    double kl = 0.0;  // mean over rows, unweighted
    VaeGradients grads;
};

/// L1 reconstruction of the reparametrized sample plus beta times mean KL,
/// with gradients for both networks. `eps` is the reparametrization noise.
inline VaeLoss vae_loss(const ModalityVAE& vae, const Matrix2D& x, double beta, const Matrix2D& eps) {
    if (beta < 0.0) throw ContractError("vae_loss: beta must be non-negative");
    if (x.rows() == 0) throw DimensionError("vae_loss: empty batch");
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    auto enc = mlp_forward(vae.encoder, x);
    GaussianBatch g = split_gaussian(enc.output);
    Matrix2D z = reparameterize(g, eps);
    auto dec = mlp_forward(vae.decoder, z);

    VaeLoss out;
    out.reconstruction = l1_sum(x, dec.output) * inv_n;
    out.kl = kl_sum(g) * inv_n;
    out.total = out.reconstruction + beta * out.kl;
    out.grads = VaeGradients::zeros_like(vae);

    Matrix2D dz = mlp_backward_accumulate(vae.decoder, dec.cache, l1_grad(x, dec.output, inv_n), out.grads.decoder);
    const std::size_t d = g.dim();
    Matrix2D d_enc(x.rows(), 2 * d);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            const double mu = g.mu(r, c);
            const double lv = g.log_var(r, c);
            const double s = std::exp(0.5 * lv);
            d_enc(r, c) = dz(r, c) + beta * inv_n * mu;
            d_enc(r, d + c) = dz(r, c) * eps(r, c) * 0.5 * s + beta * inv_n * 0.5 * (std::exp(lv) - 1.0);
        }
    }
    mlp_backward_accumulate(vae.encoder, enc.cache, d_enc, out.grads.encoder);
    return out;
}

inline VaeLoss vae_loss(const ModalityVAE& vae, const Matrix2D& x, double beta, SeededRng& rng) {
    return vae_loss(vae, x, beta, gaussian_sample(rng, x.rows(), vae.latent_dim()));
}

}  // namespace cadavae
