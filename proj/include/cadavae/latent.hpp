#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <vector>

#include "cadavae/data.hpp"
#include "cadavae/vae.hpp"

namespace cadavae {

/// Latent vectors with labels; the classifier's train or test set.
struct LatentDataset {
    Matrix2D vectors;
    std::vector<std::uint32_t> labels;
    std::vector<Modality> provenance;

    std::size_t size() const noexcept { return labels.size(); }

    void append(const Matrix2D& z, std::uint32_t label, Modality source) {
        if (vectors.empty() && labels.empty()) vectors = Matrix2D(0, z.cols());
        if (z.cols() != vectors.cols()) throw DimensionError("LatentDataset: latent width mismatch");
        std::vector<double> data(vectors.values().begin(), vectors.values().end());
        data.insert(data.end(), z.values().begin(), z.values().end());
        vectors = Matrix2D(vectors.rows() + z.rows(), vectors.cols(), std::move(data));
        labels.insert(labels.end(), z.rows(), label);
        provenance.insert(provenance.end(), z.rows(), source);
    }

    /// `label,z_0,...,z_{d-1}` with %.6f values.
    void write_csv(std::ostream& os) const {
        os << "label";
        for (std::size_t c = 0; c < vectors.cols(); ++c) os << ",z_" << c;
        os << "\n";
        char buf[64];
        for (std::size_t r = 0; r < size(); ++r) {
            os << labels[r];
            for (double v : vectors.row(r)) {
                std::snprintf(buf, sizeof buf, ",%.6f", v);
                os << buf;
            }
            os << "\n";
        }
    }
};

struct SamplingPlan {
    std::size_t per_seen_class = 200;
    std::size_t per_unseen_class = 400;
    bool dynamic = false;
};

/// test_unseen rows moved into the classifier's training pool, per unseen class.
using FewShotSelection = std::map<std::uint32_t, std::vector<std::size_t>>;

inline const ModalityVAE& find_vae(const std::vector<ModalityVAE>& vaes, Modality m) {
    for (const auto& v : vaes)
        if (v.modality == m) return v;
    throw ContractError("no trained VAE for modality " + to_string(m));
}

namespace detail {

/// Picks `n` of `pool` (without replacement while it lasts, then cycles
/// through fresh permutations).
inline std::vector<std::size_t> resample(const std::vector<std::size_t>& pool, std::size_t n, SeededRng& rng) {
    std::vector<std::size_t> out;
    out.reserve(n);
    std::vector<std::size_t> perm = pool;
    while (out.size() < n) {
        rng.shuffle(perm);
        const std::size_t take = std::min(n - out.size(), perm.size());
        out.insert(out.end(), perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(take));
    }
    return out;
}

inline Matrix2D sample_latents(const ModalityVAE& vae, const Matrix2D& x, SeededRng& rng) {
    const GaussianBatch g = encode(vae, x);
    return reparameterize(g, gaussian_sample(rng, g.size(), g.dim()));
}

inline Matrix2D repeat_row(std::span<const double> row, std::size_t n) {
    Matrix2D out(n, row.size());
    for (std::size_t r = 0; r < n; ++r) std::copy(row.begin(), row.end(), out.row(r).begin());
    return out;
}

inline std::map<std::uint32_t, std::vector<std::size_t>> rows_by_class(const std::vector<std::uint32_t>& labels) {
    std::map<std::uint32_t, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < labels.size(); ++i) out[labels[i]].push_back(i);
    return out;
}

}  // namespace detail

/// Fixed classifier training set. Seen classes: reparametrized encodings of
/// their image features. Unseen classes: reparametrized encodings of their
/// assigned side information, fresh noise per row. Few-shot rows, when given,
/// are encoded like seen-class features (per_seen_class draws per class).
/// Each class draws from its own substream of `rng`, keyed by class id.
inline LatentDataset build_fixed(const std::vector<ModalityVAE>& vaes, const GzslDataset& d, const SamplingPlan& plan,
                                 const SeededRng& rng, const FewShotSelection& shots = {}) {
    if (plan.dynamic) throw ContractError("build_fixed: plan is dynamic");
    const ModalityVAE& img = find_vae(vaes, Modality::ImageFeature);
    LatentDataset out;
    out.vectors = Matrix2D(0, img.latent_dim());

    const auto seen_rows = detail::rows_by_class(d.labels(Split::TrainSeen));
    for (std::uint32_t id : d.seen_ids()) {
        if (plan.per_seen_class == 0) break;
        auto it = seen_rows.find(id);
        if (it == seen_rows.end()) throw ContractError("build_fixed: seen class " + std::to_string(id) + " has no training features");
        SeededRng crng = rng.substream(id);
        const auto picks = detail::resample(it->second, plan.per_seen_class, crng);
        out.append(detail::sample_latents(img, d.features(Split::TrainSeen, picks), crng), id, Modality::ImageFeature);
    }
    for (std::uint32_t id : d.unseen_ids()) {
        SeededRng crng = rng.substream(id);
        if (plan.per_unseen_class > 0) {
            const Modality m = d.assigned_modality(id);
            if (!d.has_embedding(m, id))
                throw ContractError("build_fixed: unseen class " + std::to_string(id) + " has no side information");
            const ModalityVAE& vae = find_vae(vaes, m);
            out.append(detail::sample_latents(vae, detail::repeat_row(d.embedding(m, id), plan.per_unseen_class), crng),
                       id, m);
        }
        auto s = shots.find(id);
        if (s != shots.end() && !s->second.empty() && plan.per_seen_class > 0) {
            SeededRng srng = crng.substream(0x5107);
            const auto picks = detail::resample(s->second, plan.per_seen_class, srng);
            out.append(detail::sample_latents(img, d.features(Split::TestUnseen, picks), srng), id,
                       Modality::ImageFeature);
        }
    }
    return out;
}

/// Deterministic encoding (mean only) of image features.
inline LatentDataset encode_eval_set(const std::vector<ModalityVAE>& vaes, const Matrix2D& features,
                                     const std::vector<std::uint32_t>& labels) {
    const ModalityVAE& img = find_vae(vaes, Modality::ImageFeature);
    if (features.rows() != labels.size()) throw DimensionError("encode_eval_set: label count mismatch");
    LatentDataset out;
    out.vectors = encode(img, features).mu;
    out.labels = labels;
    out.provenance.assign(labels.size(), Modality::ImageFeature);
    return out;
}

/// Encodes the listed rows of one split.
inline LatentDataset encode_eval_set(const std::vector<ModalityVAE>& vaes, const GzslDataset& d, Split split,
                                     const std::vector<std::size_t>& rows) {
    std::vector<std::uint32_t> labels;
    for (std::size_t r : rows) labels.push_back(d.labels(split).at(r));
    return encode_eval_set(vaes, d.features(split, rows), labels);
}

/// Endless source of class-balanced latent batches with fresh noise every
/// call. Within a batch every class of the label space appears
/// floor(n / C) or floor(n / C) + 1 times.
class DynamicLatentStream {
public:
    DynamicLatentStream(const std::vector<ModalityVAE>& vaes, const GzslDataset& d, SeededRng rng,
                        FewShotSelection shots = {})
        : vaes_(vaes), d_(d), rng_(rng), shots_(std::move(shots)) {
        seen_rows_ = detail::rows_by_class(d.labels(Split::TrainSeen));
        for (std::uint32_t id : d.seen_ids()) {
            if (!seen_rows_.count(id)) throw ContractError("dynamic stream: seen class " + std::to_string(id) + " has no features");
            classes_.push_back(id);
        }
        for (std::uint32_t id : d.unseen_ids()) {
            if (!d.has_embedding(d.assigned_modality(id), id))
                throw ContractError("dynamic stream: unseen class " + std::to_string(id) + " has no side information");
            classes_.push_back(id);
        }
        std::sort(classes_.begin(), classes_.end());
    }

    const std::vector<std::uint32_t>& label_space() const noexcept { return classes_; }
    std::size_t latent_dim() const { return find_vae(vaes_, Modality::ImageFeature).latent_dim(); }
    std::uint64_t rng_counter() const noexcept { return rng_.counter(); }

    LatentDataset next(std::size_t n) {
        std::vector<std::uint32_t> picks;
        for (std::size_t full = 0; full < n / classes_.size(); ++full)
            picks.insert(picks.end(), classes_.begin(), classes_.end());
        std::vector<std::uint32_t> rest = classes_;
        rng_.shuffle(rest);
        picks.insert(picks.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n % classes_.size()));
        rng_.shuffle(picks);

        LatentDataset out;
        out.vectors = Matrix2D(n, latent_dim());
        out.labels = picks;
        out.provenance.resize(n);
        // Group rows by source so each encoder runs once per batch.
        std::map<std::pair<int, int>, std::vector<std::size_t>> groups;  // (modality, split) -> batch rows
        std::vector<std::size_t> source_row(n, 0);
        for (std::size_t k = 0; k < n; ++k) {
            const std::uint32_t id = picks[k];
            if (d_.is_seen(id)) {
                const auto& pool = seen_rows_.at(id);
                source_row[k] = pool[rng_.below(pool.size())];
                groups[{0, static_cast<int>(Split::TrainSeen)}].push_back(k);
                out.provenance[k] = Modality::ImageFeature;
            } else {
                auto s = shots_.find(id);
                const bool use_shot = s != shots_.end() && !s->second.empty() && rng_.below(2) == 0;
                if (use_shot) {
                    source_row[k] = s->second[rng_.below(s->second.size())];
                    groups[{0, static_cast<int>(Split::TestUnseen)}].push_back(k);
                    out.provenance[k] = Modality::ImageFeature;
                } else {
                    const Modality m = d_.assigned_modality(id);
                    groups[{static_cast<int>(m), -1}].push_back(k);
                    out.provenance[k] = m;
                }
            }
        }
        for (const auto& [key, rows] : groups) {
            Matrix2D x;
            const ModalityVAE* vae;
            if (key.second >= 0) {
                std::vector<std::size_t> src;
                for (std::size_t k : rows) src.push_back(source_row[k]);
                x = d_.features(static_cast<Split>(key.second), src);
                vae = &find_vae(vaes_, Modality::ImageFeature);
            } else {
                const auto m = static_cast<Modality>(key.first);
                vae = &find_vae(vaes_, m);
                x = Matrix2D(rows.size(), d_.side_info(m)->dim());
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    auto e = d_.embedding(m, picks[rows[i]]);
                    std::copy(e.begin(), e.end(), x.row(i).begin());
                }
            }
            const Matrix2D z = detail::sample_latents(*vae, x, rng_);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                auto src = z.row(i);
                std::copy(src.begin(), src.end(), out.vectors.row(rows[i]).begin());
            }
        }
        return out;
    }

private:
    const std::vector<ModalityVAE>& vaes_;
    const GzslDataset& d_;
    SeededRng rng_;
    FewShotSelection shots_;
    std::map<std::uint32_t, std::vector<std::size_t>> seen_rows_;
    std::vector<std::uint32_t> classes_;
};

}  // namespace cadavae
