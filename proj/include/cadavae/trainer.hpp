#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "cadavae/alignment.hpp"
#include "cadavae/data.hpp"

namespace cadavae {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 50;
    double vae_learning_rate = 1.5e-4;
    std::uint64_t seed = 0;
    VariantFlags flags = VariantFlags::cada();
    Schedule beta = Schedule::beta();
    Schedule gamma = Schedule::gamma();
    Schedule delta = Schedule::delta();
    VaeConfig vae;

    static TrainConfig imagenet() {
        TrainConfig c;
        c.batch_size = 128;
        c.vae = VaeConfig::imagenet();
        return c;
    }

    void validate() const {
        if (epochs == 0) throw ContractError("TrainConfig: epochs must be positive");
        if (batch_size == 0) throw ContractError("TrainConfig: batch_size must be positive");
        if (!(vae_learning_rate > 0.0)) throw ContractError("TrainConfig: learning rate must be positive");
        if (vae.latent_dim == 0) throw ContractError("TrainConfig: latent_dim must be positive");
        beta.validate();
        gamma.validate();
        delta.validate();
    }

    LossWeights weights_at(std::size_t epoch) const {
        return {schedule_value(beta, epoch), schedule_value(gamma, epoch), schedule_value(delta, epoch)};
    }
};

struct LossRecord {
    std::size_t epoch = 0;
    double total = 0.0;
    double vae = 0.0;
    double ca = 0.0;
    double da = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    double delta = 0.0;
};

struct LossTrace {
    std::vector<LossRecord> records;

    void write_csv(std::ostream& os) const {
        os << "epoch,total,vae,ca,da,beta,gamma,delta\n";
        char buf[256];
        for (const auto& r : records) {
            std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.epoch, r.total, r.vae, r.ca,
                          r.da, r.beta, r.gamma, r.delta);
            os << buf;
        }
    }
};

/// One training batch plus the train_seen rows it was built from.
struct TrainBatch {
    MultiModalBatch batch;
    std::vector<std::size_t> sample_rows;
    std::vector<std::uint32_t> labels;
};

/// Modalities of the model trained on `d`: the image VAE first, then one VAE
/// per side-information modality assigned to any class.
inline std::vector<Modality> model_modalities(const GzslDataset& d) {
    std::vector<Modality> mods{Modality::ImageFeature};
    for (Modality m : d.assigned_modalities()) mods.push_back(m);
    return mods;
}

/// Shuffles train_seen and cuts it into batches; each row pairs an image
/// feature with its class's assigned side-information embedding. The last
/// batch may be short.
inline std::vector<TrainBatch> make_batches(const GzslDataset& d, std::span<const Modality> modalities,
                                            std::size_t batch_size, SeededRng& rng) {
    if (batch_size == 0) throw ContractError("make_batches: batch_size must be positive");
    if (modalities.empty() || modalities.front() != Modality::ImageFeature)
        throw ContractError("make_batches: first modality must be the image features");
    std::vector<std::size_t> order(d.size(Split::TrainSeen));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    const auto& all_labels = d.labels(Split::TrainSeen);
    std::vector<TrainBatch> out;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, order.size() - start);
        TrainBatch tb;
        tb.sample_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                              order.begin() + static_cast<std::ptrdiff_t>(start + n));
        for (std::size_t r : tb.sample_rows) tb.labels.push_back(all_labels[r]);
        tb.batch.size = n;
        tb.batch.blocks.resize(modalities.size());

        auto& img = tb.batch.blocks[0];
        img.x = d.features(Split::TrainSeen, tb.sample_rows);
        img.labels = tb.labels;
        for (std::size_t k = 0; k < n; ++k) img.rows.push_back(k);

        for (std::size_t m = 1; m < modalities.size(); ++m) {
            auto& blk = tb.batch.blocks[m];
            std::vector<double> values;
            for (std::size_t k = 0; k < n; ++k) {
                const std::uint32_t label = tb.labels[k];
                if (d.assigned_modality(label) != modalities[m]) continue;
                auto e = d.embedding(modalities[m], label);
                values.insert(values.end(), e.begin(), e.end());
                blk.rows.push_back(k);
                blk.labels.push_back(label);
            }
            const auto* info = d.side_info(modalities[m]);
            if (info == nullptr) throw ContractError("make_batches: dataset lacks " + to_string(modalities[m]));
            blk.x = Matrix2D(blk.rows.size(), info->dim(), std::move(values));
        }
        for (std::size_t k = 0; k < n; ++k) {
            const Modality want = d.assigned_modality(tb.labels[k]);
            if (std::find(modalities.begin() + 1, modalities.end(), want) == modalities.end())
                throw ContractError("make_batches: class " + std::to_string(tb.labels[k]) +
                                    " has no side information among the model's modalities");
        }
        out.push_back(std::move(tb));
    }
    return out;
}

struct TrainResult {
    std::vector<ModalityVAE> vaes;
    LossTrace trace;
};

/// Called after every epoch with the record just appended.
using EpochCallback = std::function<void(const LossRecord&)>;

/// Jointly optimizes all encoders and decoders with one Adam instance.
/// Only train_seen features and side information are read.
inline TrainResult train(const GzslDataset& d, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (d.size(Split::TrainSeen) == 0) throw ContractError("train: dataset has no train_seen samples");
    const std::vector<Modality> mods = model_modalities(d);
    SeededRng root(cfg.seed);
    SeededRng init_rng = root.substream(1);
    SeededRng noise_rng = root.substream(2);

    TrainResult res;
    for (Modality m : mods) {
        const std::size_t dim = m == Modality::ImageFeature ? d.feat_dim() : d.side_info(m)->dim();
        res.vaes.push_back(make_vae(m, dim, cfg.vae, init_rng));
    }
    std::vector<ParamView> params;
    for (std::size_t i = 0; i < res.vaes.size(); ++i) {
        const std::string name = to_string(res.vaes[i].modality);
        append_views(res.vaes[i].encoder, name + ".encoder", params);
        append_views(res.vaes[i].decoder, name + ".decoder", params);
    }
    AdamState adam(cfg.vae_learning_rate);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const LossWeights w = cfg.weights_at(epoch);
        SeededRng batch_rng = root.substream(1000 + epoch);
        const auto batches = make_batches(d, mods, cfg.batch_size, batch_rng);
        LossRecord rec;
        rec.epoch = epoch;
        rec.beta = w.beta;
        rec.gamma = w.gamma;
        rec.delta = w.delta;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto noise = draw_batch_noise(res.vaes, batches[b].batch, noise_rng);
            CadaResult r = cada_objective(res.vaes, batches[b].batch, noise, w, cfg.flags, true);
            if (!std::isfinite(r.total))
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
            std::vector<GradView> grads;
            for (std::size_t i = 0; i < r.grads.size(); ++i) {
                const std::string name = to_string(res.vaes[i].modality);
                append_views(r.grads[i].encoder, name + ".encoder", grads);
                append_views(r.grads[i].decoder, name + ".decoder", grads);
            }
            try {
                adam_step(params, grads, adam);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b));
            }
            rec.total += r.total;
            rec.vae += r.vae;
            rec.ca += r.ca;
            rec.da += r.da;
        }
        const double nb = static_cast<double>(batches.size());
        if (nb > 0) {
            rec.total /= nb;
            rec.vae /= nb;
            rec.ca /= nb;
            rec.da /= nb;
        }
        res.trace.records.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return res;
}

}  // namespace cadavae
