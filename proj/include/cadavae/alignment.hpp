#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cadavae/vae.hpp"

namespace cadavae {

struct LossWeights {
    double beta = 0.0;   // KL
    double gamma = 0.0;  // cross-reconstruction
    double delta = 0.0;  // distribution alignment

    void validate() const {
        if (!(beta >= 0.0 && gamma >= 0.0 && delta >= 0.0))
            throw ContractError("LossWeights: weights must be non-negative");
    }
};

struct VariantFlags {
    bool use_ca = true;
    bool use_da = true;

    static VariantFlags cada() { return {true, true}; }
    static VariantFlags ca() { return {true, false}; }
    static VariantFlags da() { return {false, true}; }
    static VariantFlags none() { return {false, false}; }

    friend bool operator==(const VariantFlags&, const VariantFlags&) = default;
};

/// Accepts "cada", "ca", "da" (and "vae" for neither); throws ContractError otherwise.
inline VariantFlags parse_variant(const std::string& name) {
    if (name == "cada") return VariantFlags::cada();
    if (name == "ca") return VariantFlags::ca();
    if (name == "da") return VariantFlags::da();
    if (name == "vae") return VariantFlags::none();
    throw ContractError("unknown variant '" + name + "' (expected cada, ca or da)");
}

inline std::string variant_name(VariantFlags f) {
    if (f.use_ca && f.use_da) return "cada";
    if (f.use_ca) return "ca";
    if (f.use_da) return "da";
    return "vae";
}

/// Linear warm-up: 0 until start_epoch, then rate per epoch, flat after end_epoch.
struct Schedule {
    std::size_t start_epoch = 0;
    std::size_t end_epoch = 0;
    double rate_per_epoch = 0.0;

    void validate() const {
        if (start_epoch > end_epoch) throw ContractError("Schedule: start_epoch > end_epoch");
        if (!(rate_per_epoch >= 0.0)) throw ContractError("Schedule: negative rate");
    }

    static Schedule beta() { return {0, 90, 0.0026}; }
    static Schedule gamma() { return {21, 75, 0.044}; }
    static Schedule delta() { return {6, 22, 0.54}; }
};

inline double schedule_value(const Schedule& s, std::size_t epoch) {
    if (epoch <= s.start_epoch) return 0.0;
    const std::size_t e = std::min(epoch, s.end_epoch);
    return s.rate_per_epoch * static_cast<double>(e - s.start_epoch);
}

// ---------------------------------------------------------------------------
// 2-Wasserstein distance between diagonal Gaussians
// ---------------------------------------------------------------------------

/// sqrt(||mu1 - mu2||^2 + sum_d (sigma1_d - sigma2_d)^2), sigma = exp(log_var / 2).
inline double wasserstein2_diag(const DiagGaussian& a, const DiagGaussian& b) {
    if (a.dim() != b.dim() || a.log_var.size() != a.dim() || b.log_var.size() != b.dim())
        throw DimensionError("wasserstein2_diag: latent dims differ");
    double s = 0.0;
    for (std::size_t d = 0; d < a.dim(); ++d) {
        const double dm = a.mu[d] - b.mu[d];
        const double ds = std::exp(0.5 * a.log_var[d]) - std::exp(0.5 * b.log_var[d]);
        s += dm * dm + ds * ds;
    }
    return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Multi-modal batches
// ---------------------------------------------------------------------------

/// The rows of a batch observed in one modality. `rows` are ascending batch row
/// indices; x.row(k) and labels[k] belong to batch row rows[k].
struct ModalBlock {
    std::vector<std::size_t> rows;
    std::vector<std::uint32_t> labels;
    Matrix2D x;
};

/// Block i is fed to VAE i. A modality may cover only part of the batch
/// (mixed side information); pairwise terms use rows present in both.
struct MultiModalBatch {
    std::size_t size = 0;
    std::vector<ModalBlock> blocks;

    /// Every modality covers every row.
    static MultiModalBatch aligned(std::vector<Matrix2D> xs, const std::vector<std::uint32_t>& labels) {
        MultiModalBatch b;
        b.size = labels.size();
        for (auto& x : xs) {
            if (x.rows() != labels.size()) throw DimensionError("MultiModalBatch: row count mismatch");
            ModalBlock blk;
            blk.rows.resize(labels.size());
            for (std::size_t i = 0; i < blk.rows.size(); ++i) blk.rows[i] = i;
            blk.labels = labels;
            blk.x = std::move(x);
            b.blocks.push_back(std::move(blk));
        }
        return b;
    }
};

namespace detail {

struct RowPair {
    std::size_t a;  // position in block a
    std::size_t b;  // position in block b
};

inline std::vector<RowPair> shared_rows(const ModalBlock& a, const ModalBlock& b) {
    std::vector<RowPair> out;
    std::size_t i = 0, j = 0;
    while (i < a.rows.size() && j < b.rows.size()) {
        if (a.rows[i] < b.rows[j]) {
            ++i;
        } else if (b.rows[j] < a.rows[i]) {
            ++j;
        } else {
            if (a.labels[i] != b.labels[j])
                throw ContractError("batch row " + std::to_string(a.rows[i]) + " pairs class " +
                                    std::to_string(a.labels[i]) + " with class " + std::to_string(b.labels[j]));
            out.push_back({i, j});
            ++i;
            ++j;
        }
    }
    return out;
}

inline void check_batch(const std::vector<ModalityVAE>& vaes, const MultiModalBatch& batch) {
    if (batch.blocks.size() != vaes.size())
        throw DimensionError("batch has " + std::to_string(batch.blocks.size()) + " modalities, model has " +
                             std::to_string(vaes.size()));
    if (batch.size == 0) throw DimensionError("empty batch");
    for (std::size_t i = 0; i < vaes.size(); ++i) {
        const auto& blk = batch.blocks[i];
        if (blk.rows.size() != blk.x.rows() || blk.labels.size() != blk.x.rows())
            throw DimensionError("modal block " + std::to_string(i) + " is inconsistent");
        if (!blk.rows.empty() && blk.x.cols() != vaes[i].data_dim())
            throw DimensionError("modal block " + std::to_string(i) + " has wrong feature width");
        for (std::size_t k = 0; k < blk.rows.size(); ++k)
            if (blk.rows[k] >= batch.size || (k > 0 && blk.rows[k] <= blk.rows[k - 1]))
                throw ContractError("modal block " + std::to_string(i) + " rows must be ascending batch indices");
    }
}

}  // namespace detail

/// Mean over the batch of the ordered-pair sum of W(g_i, g_j), i != j.
/// All batches must describe the same samples row for row.
inline double da_loss(std::span<const GaussianBatch> gaussians) {
    if (gaussians.empty()) return 0.0;
    const std::size_t n = gaussians.front().size();
    for (const auto& g : gaussians)
        if (g.size() != n || g.dim() != gaussians.front().dim()) throw DimensionError("da_loss: batch shape mismatch");
    if (n == 0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < gaussians.size(); ++i)
        for (std::size_t j = 0; j < gaussians.size(); ++j)
            if (i != j)
                for (std::size_t r = 0; r < n; ++r) total += wasserstein2_diag(gaussians[i].at(r), gaussians[j].at(r));
    return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Combined objective
// ---------------------------------------------------------------------------

struct CadaResult {
    double total = 0.0;
    double vae = 0.0;  // sum over modalities of reconstruction + beta * KL
    double ca = 0.0;   // unweighted; 0 when disabled
    double da = 0.0;   // unweighted; 0 when disabled
    std::vector<VaeGradients> grads;  // empty unless requested
};

/// Evaluates L_VAE + gamma * L_CA + delta * L_DA on one batch with the given
/// reparametrization noise (noise[i] is rows(block i) x latent_dim).
/// All reductions divide by the batch size.
inline CadaResult cada_objective(const std::vector<ModalityVAE>& vaes, const MultiModalBatch& batch,
                                 std::span<const Matrix2D> noise, const LossWeights& weights, VariantFlags flags,
                                 bool want_grads) {
    weights.validate();
    detail::check_batch(vaes, batch);
    if (noise.size() != vaes.size()) throw DimensionError("cada_objective: one noise matrix per modality required");
    const std::size_t m_count = vaes.size();
    const std::size_t latent = vaes.front().latent_dim();
    for (const auto& v : vaes)
        if (v.latent_dim() != latent) throw DimensionError("cada_objective: VAEs disagree on latent size");
    const double inv_n = 1.0 / static_cast<double>(batch.size);

    struct Encoded {
        MlpOutput enc;
        GaussianBatch g;
        Matrix2D sigma;
        Matrix2D z;
        Matrix2D d_mu;
        Matrix2D d_lv;
        Matrix2D d_z;
    };
    std::vector<Encoded> e(m_count);
    CadaResult res;
    if (want_grads)
        for (const auto& v : vaes) res.grads.push_back(VaeGradients::zeros_like(v));

    for (std::size_t i = 0; i < m_count; ++i) {
        const auto& blk = batch.blocks[i];
        if (blk.rows.empty()) continue;
        if (noise[i].rows() != blk.rows.size() || noise[i].cols() != latent)
            throw DimensionError("cada_objective: noise shape for modality " + std::to_string(i));
        auto& en = e[i];
        en.enc = mlp_forward(vaes[i].encoder, blk.x);
        en.g = split_gaussian(en.enc.output);
        en.sigma = Matrix2D(en.g.size(), latent);
        for (std::size_t k = 0; k < en.sigma.size(); ++k) en.sigma.values()[k] = std::exp(0.5 * en.g.log_var.values()[k]);
        en.z = reparameterize(en.g, noise[i]);
        en.d_mu = Matrix2D(en.g.size(), latent);
        en.d_lv = Matrix2D(en.g.size(), latent);
        en.d_z = Matrix2D(en.g.size(), latent);

        // Own reconstruction and KL.
        auto dec = mlp_forward(vaes[i].decoder, en.z);
        const double rec = l1_sum(blk.x, dec.output) * inv_n;
        const double kl = kl_sum(en.g) * inv_n;
        res.vae += rec + weights.beta * kl;
        if (want_grads) {
            Matrix2D dz = mlp_backward_accumulate(vaes[i].decoder, dec.cache, l1_grad(blk.x, dec.output, inv_n),
                                                  res.grads[i].decoder);
            detail::map(en.d_z) += detail::map(dz);
            if (weights.beta != 0.0) {
                for (std::size_t k = 0; k < en.d_mu.size(); ++k) {
                    en.d_mu.values()[k] += weights.beta * inv_n * en.g.mu.values()[k];
                    en.d_lv.values()[k] += weights.beta * inv_n * 0.5 * (std::exp(en.g.log_var.values()[k]) - 1.0);
                }
            }
        }
    }

    if (flags.use_ca) {
        for (std::size_t i = 0; i < m_count; ++i) {
            for (std::size_t j = 0; j < m_count; ++j) {
                if (i == j) continue;
                const auto pairs = detail::shared_rows(batch.blocks[i], batch.blocks[j]);
                if (pairs.empty()) continue;
                std::vector<std::size_t> src, dst;
                for (const auto& p : pairs) {
                    src.push_back(p.a);
                    dst.push_back(p.b);
                }
                Matrix2D z = gather_rows(e[i].z, src);
                Matrix2D target = gather_rows(batch.blocks[j].x, dst);
                auto dec = mlp_forward(vaes[j].decoder, z);
                res.ca += l1_sum(target, dec.output) * inv_n;
                if (want_grads && weights.gamma != 0.0) {
                    Matrix2D dz = mlp_backward_accumulate(vaes[j].decoder, dec.cache,
                                                          l1_grad(target, dec.output, weights.gamma * inv_n),
                                                          res.grads[j].decoder);
                    for (std::size_t k = 0; k < src.size(); ++k) {
                        auto out = e[i].d_z.row(src[k]);
                        auto in = dz.row(k);
                        for (std::size_t c = 0; c < latent; ++c) out[c] += in[c];
                    }
                }
            }
        }
    }

    if (flags.use_da) {
        for (std::size_t i = 0; i < m_count; ++i) {
            for (std::size_t j = 0; j < m_count; ++j) {
                if (i == j) continue;
                const auto pairs = detail::shared_rows(batch.blocks[i], batch.blocks[j]);
                for (const auto& p : pairs) {
                    auto mu_i = e[i].g.mu.row(p.a);
                    auto mu_j = e[j].g.mu.row(p.b);
                    auto s_i = e[i].sigma.row(p.a);
                    auto s_j = e[j].sigma.row(p.b);
                    double sq = 0.0;
                    for (std::size_t c = 0; c < latent; ++c) {
                        const double dm = mu_i[c] - mu_j[c];
                        const double ds = s_i[c] - s_j[c];
                        sq += dm * dm + ds * ds;
                    }
                    const double w = std::sqrt(sq);
                    res.da += w * inv_n;
                    // At w == 0 the distance is not differentiable; use the zero subgradient.
                    if (want_grads && weights.delta != 0.0 && w > 0.0) {
                        const double scale = weights.delta * inv_n / w;
                        auto dmu_i = e[i].d_mu.row(p.a);
                        auto dmu_j = e[j].d_mu.row(p.b);
                        auto dlv_i = e[i].d_lv.row(p.a);
                        auto dlv_j = e[j].d_lv.row(p.b);
                        for (std::size_t c = 0; c < latent; ++c) {
                            const double dm = scale * (mu_i[c] - mu_j[c]);
                            const double ds = scale * (s_i[c] - s_j[c]);
                            dmu_i[c] += dm;
                            dmu_j[c] -= dm;
                            dlv_i[c] += ds * 0.5 * s_i[c];
                            dlv_j[c] -= ds * 0.5 * s_j[c];
                        }
                    }
                }
            }
        }
    }

    res.total = res.vae + (flags.use_ca ? weights.gamma * res.ca : 0.0) + (flags.use_da ? weights.delta * res.da : 0.0);

    if (want_grads) {
        for (std::size_t i = 0; i < m_count; ++i) {
            auto& en = e[i];
            if (batch.blocks[i].rows.empty()) continue;
            Matrix2D d_enc(en.g.size(), 2 * latent);
            for (std::size_t r = 0; r < en.g.size(); ++r) {
                for (std::size_t c = 0; c < latent; ++c) {
                    const double dz = en.d_z(r, c);
                    d_enc(r, c) = en.d_mu(r, c) + dz;
                    d_enc(r, latent + c) = en.d_lv(r, c) + dz * noise[i](r, c) * 0.5 * en.sigma(r, c);
                }
            }
            mlp_backward_accumulate(vaes[i].encoder, en.enc.cache, d_enc, res.grads[i].encoder);
        }
    }
    return res;
}

inline std::vector<Matrix2D> draw_batch_noise(const std::vector<ModalityVAE>& vaes, const MultiModalBatch& batch,
                                              SeededRng& rng) {
    std::vector<Matrix2D> noise;
    for (std::size_t i = 0; i < batch.blocks.size(); ++i)
        noise.push_back(gaussian_sample(rng, batch.blocks[i].rows.size(), vaes.at(i).latent_dim()));
    return noise;
}

/// Cross-reconstruction loss alone: mean over the batch of
/// sum_i sum_{j != i} |x_j - D_j(z_i)|_1 with z_i reparametrized from E_i(x_i).
inline double ca_loss(const std::vector<ModalityVAE>& vaes, const MultiModalBatch& batch,
                      std::span<const Matrix2D> noise) {
    return cada_objective(vaes, batch, noise, {}, VariantFlags::ca(), false).ca;
}

inline double ca_loss(const std::vector<ModalityVAE>& vaes, const MultiModalBatch& batch, SeededRng& rng) {
    const auto noise = draw_batch_noise(vaes, batch, rng);
    return ca_loss(vaes, batch, noise);
}

inline CadaResult cada_loss(const std::vector<ModalityVAE>& vaes, const MultiModalBatch& batch,
                            const LossWeights& weights, VariantFlags flags, SeededRng& rng) {
    const auto noise = draw_batch_noise(vaes, batch, rng);
    return cada_objective(vaes, batch, noise, weights, flags, true);
}

}  // namespace cadavae
