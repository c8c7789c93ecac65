#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cadavae/latent.hpp"

namespace cadavae {

struct ClassifierConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 100;
    std::size_t batch_size = 50;
    std::size_t dynamic_iterations = 3000;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ContractError("ClassifierConfig: learning rate must be positive");
        if (batch_size == 0) throw ContractError("ClassifierConfig: batch_size must be positive");
    }
};

/// Linear softmax over an ordered label space (ascending class ids).
struct SoftmaxParams {
    Matrix2D weight;  // classes x latent_dim
    std::vector<double> bias;
    std::vector<std::uint32_t> classes;

    Matrix2D logits(const Matrix2D& z) const {
        if (z.cols() != weight.cols()) throw DimensionError("softmax: latent width mismatch");
        Matrix2D out(z.rows(), weight.rows());
        detail::map(out).noalias() = detail::map(z) * detail::map(weight).transpose();
        for (std::size_t r = 0; r < out.rows(); ++r)
            for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bias[c];
        return out;
    }

    /// Row-wise softmax of the logits, max-shifted.
    Matrix2D probabilities(const Matrix2D& z) const {
        Matrix2D p = logits(z);
        for (std::size_t r = 0; r < p.rows(); ++r) {
            auto row = p.row(r);
            const double mx = *std::max_element(row.begin(), row.end());
            double s = 0.0;
            for (double& v : row) s += (v = std::exp(v - mx));
            for (double& v : row) v /= s;
        }
        return p;
    }

    /// Argmax class per row; ties go to the lowest class id.
    std::vector<std::uint32_t> predict(const Matrix2D& z, const std::vector<std::uint32_t>& allowed = {}) const {
        const Matrix2D l = logits(z);
        std::vector<bool> mask(classes.size(), allowed.empty());
        for (std::uint32_t id : allowed) {
            auto it = std::lower_bound(classes.begin(), classes.end(), id);
            if (it == classes.end() || *it != id) throw ContractError("predict: class " + std::to_string(id) + " not in label space");
            mask[static_cast<std::size_t>(it - classes.begin())] = true;
        }
        std::vector<std::uint32_t> out(z.rows());
        for (std::size_t r = 0; r < l.rows(); ++r) {
            std::size_t best = classes.size();
            for (std::size_t c = 0; c < l.cols(); ++c)
                if (mask[c] && (best == classes.size() || l(r, c) > l(r, best))) best = c;
            out[r] = classes[best];
        }
        return out;
    }
};

namespace detail {

inline std::vector<std::uint32_t> checked_label_space(std::vector<std::uint32_t> space) {
    std::sort(space.begin(), space.end());
    space.erase(std::unique(space.begin(), space.end()), space.end());
    if (space.size() < 2) throw ContractError("train_softmax: label space needs at least two classes");
    return space;
}

inline std::vector<std::size_t> label_indices(const std::vector<std::uint32_t>& space,
                                              const std::vector<std::uint32_t>& labels) {
    std::vector<std::size_t> idx(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = std::lower_bound(space.begin(), space.end(), labels[i]);
        if (it == space.end() || *it != labels[i])
            throw ContractError("train_softmax: label " + std::to_string(labels[i]) + " outside the label space");
        idx[i] = static_cast<std::size_t>(it - space.begin());
    }
    return idx;
}

/// One Adam step on mean cross-entropy over the given rows.
inline void softmax_step(SoftmaxParams& p, const Matrix2D& z, const std::vector<std::size_t>& targets,
                         AdamState& adam) {
    Matrix2D g = p.probabilities(z);
    const double inv_n = 1.0 / static_cast<double>(z.rows());
    for (std::size_t r = 0; r < g.rows(); ++r) {
        g(r, targets[r]) -= 1.0;
        for (double& v : g.row(r)) v *= inv_n;
    }
    Matrix2D gw(p.weight.rows(), p.weight.cols());
    detail::map(gw).noalias() = detail::map(g).transpose() * detail::map(z);
    std::vector<double> gb(p.bias.size(), 0.0);
    for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
    const ParamView params[] = {{"softmax.weight", p.weight.values()}, {"softmax.bias", p.bias}};
    const GradView grads[] = {{"softmax.weight", gw.values()}, {"softmax.bias", gb}};
    adam_step(params, grads, adam);
}

inline SoftmaxParams zero_softmax(const std::vector<std::uint32_t>& space, std::size_t dim) {
    return {Matrix2D(space.size(), dim), std::vector<double>(space.size(), 0.0), space};
}

}  // namespace detail

/// Mini-batch Adam on mean cross-entropy over a fixed latent set.
/// Every class of `label_space` must occur in `data`.
inline SoftmaxParams train_softmax(const LatentDataset& data, std::vector<std::uint32_t> label_space,
                                   const ClassifierConfig& cfg, SeededRng rng) {
    cfg.validate();
    label_space = detail::checked_label_space(std::move(label_space));
    const auto targets = detail::label_indices(label_space, data.labels);
    std::vector<bool> covered(label_space.size(), false);
    for (std::size_t t : targets) covered[t] = true;
    std::string missing;
    for (std::size_t c = 0; c < covered.size(); ++c)
        if (!covered[c]) missing += (missing.empty() ? "" : ",") + std::to_string(label_space[c]);
    if (!missing.empty()) throw ContractError("train_softmax: no training samples for classes " + missing);

    SoftmaxParams p = detail::zero_softmax(label_space, data.vectors.cols());
    AdamState adam(cfg.learning_rate);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - start);
            std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(start + n));
            std::vector<std::size_t> t(n);
            for (std::size_t i = 0; i < n; ++i) t[i] = targets[rows[i]];
            detail::softmax_step(p, gather_rows(data.vectors, rows), t, adam);
        }
    }
    return p;
}

/// Trains on freshly generated batches; no latent vector is used twice.
inline SoftmaxParams train_softmax(DynamicLatentStream& stream, const ClassifierConfig& cfg) {
    cfg.validate();
    const auto space = detail::checked_label_space(stream.label_space());
    SoftmaxParams p = detail::zero_softmax(space, stream.latent_dim());
    AdamState adam(cfg.learning_rate);
    for (std::size_t it = 0; it < cfg.dynamic_iterations; ++it) {
        const LatentDataset batch = stream.next(cfg.batch_size);
        detail::softmax_step(p, batch.vectors, detail::label_indices(space, batch.labels), adam);
    }
    return p;
}

/// Fraction correct per class, each class weighted alone.
inline std::map<std::uint32_t, double> per_class_accuracy(const std::vector<std::uint32_t>& preds,
                                                          const std::vector<std::uint32_t>& labels,
                                                          const std::vector<std::uint32_t>& class_set) {
    if (preds.size() != labels.size()) throw DimensionError("per_class_accuracy: prediction/label count mismatch");
    std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> counts;  // correct, total
    for (std::uint32_t c : class_set) counts[c] = {0, 0};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = counts.find(labels[i]);
        if (it == counts.end()) continue;
        ++it->second.second;
        if (preds[i] == labels[i]) ++it->second.first;
    }
    std::map<std::uint32_t, double> out;
    for (const auto& [c, ct] : counts) {
        if (ct.second == 0) throw ContractError("per_class_accuracy: class " + std::to_string(c) + " has no test samples");
        out[c] = static_cast<double>(ct.first) / static_cast<double>(ct.second);
    }
    return out;
}

inline double mean_accuracy(const std::map<std::uint32_t, double>& acc) {
    if (acc.empty()) return 0.0;
    double s = 0.0;
    for (const auto& [c, a] : acc) s += a;
    return s / static_cast<double>(acc.size());
}

/// 2SU / (S + U), and 0 when S + U = 0.
inline double harmonic_mean(double s, double u) { return s + u > 0.0 ? 2.0 * s * u / (s + u) : 0.0; }

struct EvalReport {
    std::map<std::uint32_t, double> per_class_accuracy;
    double S = 0.0;
    double U = 0.0;
    double H = 0.0;
};

namespace detail {

inline std::vector<std::uint32_t> distinct(std::vector<std::uint32_t> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

}  // namespace detail

/// Predictions range over the model's whole label space (seen and unseen).
/// S and U are mean per-class accuracies in percent.
inline EvalReport evaluate_gzsl(const SoftmaxParams& model, const LatentDataset& test_seen,
                                const LatentDataset& test_unseen) {
    EvalReport r;
    const auto seen_classes = detail::distinct(test_seen.labels);
    const auto unseen_classes = detail::distinct(test_unseen.labels);
    if (!seen_classes.empty()) {
        const auto acc = per_class_accuracy(model.predict(test_seen.vectors), test_seen.labels, seen_classes);
        r.per_class_accuracy.insert(acc.begin(), acc.end());
        r.S = 100.0 * mean_accuracy(acc);
    }
    if (!unseen_classes.empty()) {
        const auto acc = per_class_accuracy(model.predict(test_unseen.vectors), test_unseen.labels, unseen_classes);
        r.per_class_accuracy.insert(acc.begin(), acc.end());
        r.U = 100.0 * mean_accuracy(acc);
    }
    r.H = harmonic_mean(r.S, r.U);
    return r;
}

/// Classic zero-shot accuracy: predictions restricted to the unseen classes.
inline double evaluate_zsl(const SoftmaxParams& model, const LatentDataset& test_unseen) {
    const auto unseen_classes = detail::distinct(test_unseen.labels);
    const auto acc =
        per_class_accuracy(model.predict(test_unseen.vectors, unseen_classes), test_unseen.labels, unseen_classes);
    return 100.0 * mean_accuracy(acc);
}

// ---------------------------------------------------------------------------
// Full evaluation protocol
// ---------------------------------------------------------------------------

struct FewShotPlan {
    std::size_t shots = 0;
    std::uint64_t seed = 0;
};

/// Picks `shots` test_unseen rows per unseen class, uniformly at random.
/// Only labels are consulted. Each class must keep at least one test row.
inline FewShotSelection select_shots(const GzslDataset& d, const FewShotPlan& plan) {
    FewShotSelection out;
    if (plan.shots == 0) return out;
    const auto by_class = detail::rows_by_class(d.labels(Split::TestUnseen));
    SeededRng rng(plan.seed);
    for (std::uint32_t id : d.unseen_ids()) {
        auto it = by_class.find(id);
        const std::size_t avail = it == by_class.end() ? 0 : it->second.size();
        if (plan.shots >= avail)
            throw ContractError("select_shots: unseen class " + std::to_string(id) + " has " + std::to_string(avail) +
                                " samples, need more than " + std::to_string(plan.shots));
        std::vector<std::size_t> pool = it->second;
        SeededRng crng = rng.substream(id);
        crng.shuffle(pool);
        pool.resize(plan.shots);
        std::sort(pool.begin(), pool.end());
        out[id] = std::move(pool);
    }
    return out;
}

struct EvalConfig {
    SamplingPlan plan;
    ClassifierConfig classifier;
    std::uint64_t seed = 0;
    std::size_t shots = 0;
};

/// Latent-set construction, softmax training and GZSL scoring. With shots > 0
/// the selected unseen images join the training pool and leave the test pool.
inline EvalReport evaluate_fewshot(const std::vector<ModalityVAE>& vaes, const GzslDataset& d, const EvalConfig& cfg) {
    const SeededRng root(cfg.seed);
    const FewShotSelection shots = select_shots(d, {cfg.shots, root.substream(13).next_u64()});

    // A class with no planned training rows is left out of the label space
    // and can never be predicted.
    std::vector<std::uint32_t> space;
    if (cfg.plan.dynamic || cfg.plan.per_seen_class > 0) space = d.seen_ids();
    for (std::uint32_t id : d.unseen_ids())
        if (cfg.plan.dynamic || cfg.plan.per_unseen_class > 0 || (shots.count(id) && cfg.plan.per_seen_class > 0))
            space.push_back(id);

    SoftmaxParams model;
    if (cfg.plan.dynamic) {
        DynamicLatentStream stream(vaes, d, root.substream(11), shots);
        model = train_softmax(stream, cfg.classifier);
    } else {
        const LatentDataset train_set = build_fixed(vaes, d, cfg.plan, root.substream(11), shots);
        model = train_softmax(train_set, space, cfg.classifier, root.substream(12));
    }

    std::vector<std::size_t> seen_rows(d.size(Split::TestSeen));
    for (std::size_t i = 0; i < seen_rows.size(); ++i) seen_rows[i] = i;
    std::set<std::size_t> taken;
    for (const auto& [id, rows] : shots) taken.insert(rows.begin(), rows.end());
    std::vector<std::size_t> unseen_rows;
    for (std::size_t i = 0; i < d.size(Split::TestUnseen); ++i)
        if (!taken.count(i)) unseen_rows.push_back(i);

    const LatentDataset seen_eval = encode_eval_set(vaes, d, Split::TestSeen, seen_rows);
    const LatentDataset unseen_eval = encode_eval_set(vaes, d, Split::TestUnseen, unseen_rows);
    return evaluate_gzsl(model, seen_eval, unseen_eval);
}

/// Zero-shot case of evaluate_fewshot.
inline EvalReport evaluate_pipeline_gzsl(const std::vector<ModalityVAE>& vaes, const GzslDataset& d, EvalConfig cfg) {
    cfg.shots = 0;
    return evaluate_fewshot(vaes, d, cfg);
}

}  // namespace cadavae
