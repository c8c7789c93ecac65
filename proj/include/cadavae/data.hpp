#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cadavae/binary_io.hpp"
#include "cadavae/vae.hpp"

namespace cadavae {

enum class Split : std::uint8_t { TrainSeen, TestSeen, TestUnseen };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::TrainSeen: return "train_seen";
        case Split::TestSeen: return "test_seen";
        case Split::TestUnseen: return "test_unseen";
    }
    return "?";
}

struct ClassInfo {
    std::uint32_t id = 0;
    std::string name;
    bool seen = true;

    friend bool operator==(const ClassInfo&, const ClassInfo&) = default;
};

/// Per-class side information for one modality; row k belongs to the k-th class
/// of the dataset's class table.
struct SideInfo {
    Modality modality = Modality::Attribute;
    Matrix2D embeddings;
    std::vector<std::uint8_t> present;

    std::size_t dim() const noexcept { return embeddings.cols(); }
};

struct SampleSet {
    Matrix2D features;
    std::vector<std::uint32_t> labels;
};

/// Notified whenever image-feature rows are read from a dataset.
class AccessObserver {
public:
    virtual ~AccessObserver() = default;
    virtual void on_feature_read(Split split, std::size_t row) = 0;
};

/// Which side-information modality each class is described by.
struct SideInfoAssignment {
    double x_s_percent = 0.0;
    double x_u_percent = 0.0;
    std::map<std::uint32_t, Modality> per_class;
};

/// Image features with seen/unseen splits and per-class side information.
/// Validated on construction and immutable afterwards, except for the
/// side-information assignment and the access observer.
class GzslDataset {
public:
    GzslDataset(std::size_t feat_dim, std::vector<ClassInfo> classes, std::vector<SideInfo> modalities,
                SampleSet train_seen, SampleSet test_seen, SampleSet test_unseen)
        : feat_dim_(feat_dim),
          classes_(std::move(classes)),
          modalities_(std::move(modalities)),
          splits_{std::move(train_seen), std::move(test_seen), std::move(test_unseen)} {
        validate();
        assigned_.resize(classes_.size());
        for (std::size_t c = 0; c < classes_.size(); ++c) assigned_[c] = default_modality(c);
    }

    std::size_t feat_dim() const noexcept { return feat_dim_; }
    const std::vector<ClassInfo>& classes() const noexcept { return classes_; }
    const std::vector<SideInfo>& modalities() const noexcept { return modalities_; }

    std::size_t size(Split s) const noexcept { return set(s).labels.size(); }
    const std::vector<std::uint32_t>& labels(Split s) const noexcept { return set(s).labels; }

    /// One image-feature row. Reported to the observer.
    std::span<const double> feature(Split s, std::size_t row) const {
        if (row >= size(s)) throw ContractError(to_string(s) + ": row " + std::to_string(row) + " out of range");
        notify(s, row);
        return set(s).features.row(row);
    }

    Matrix2D features(Split s, std::span<const std::size_t> rows) const {
        Matrix2D out(rows.size(), feat_dim_);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto src = feature(s, rows[i]);
            std::copy(src.begin(), src.end(), out.row(i).begin());
        }
        return out;
    }

    Matrix2D features(Split s) const {
        for (std::size_t r = 0; r < size(s); ++r) notify(s, r);
        return set(s).features;
    }

    std::size_t class_index(std::uint32_t id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw ContractError("unknown class id " + std::to_string(id));
        return it->second;
    }
    bool has_class(std::uint32_t id) const { return index_.count(id) != 0; }
    bool is_seen(std::uint32_t id) const { return classes_[class_index(id)].seen; }

    std::vector<std::uint32_t> class_ids(bool seen) const {
        std::vector<std::uint32_t> ids;
        for (const auto& c : classes_)
            if (c.seen == seen) ids.push_back(c.id);
        std::sort(ids.begin(), ids.end());
        return ids;
    }
    std::vector<std::uint32_t> seen_ids() const { return class_ids(true); }
    std::vector<std::uint32_t> unseen_ids() const { return class_ids(false); }

    const SideInfo* side_info(Modality m) const {
        for (const auto& s : modalities_)
            if (s.modality == m) return &s;
        return nullptr;
    }

    bool has_embedding(Modality m, std::uint32_t id) const {
        const SideInfo* s = side_info(m);
        return s != nullptr && s->present[class_index(id)] != 0;
    }

    std::span<const double> embedding(Modality m, std::uint32_t id) const {
        const SideInfo* s = side_info(m);
        const std::size_t c = class_index(id);
        if (s == nullptr || !s->present[c])
            throw ContractError("class " + std::to_string(id) + " has no " + to_string(m) + " embedding");
        return s->embeddings.row(c);
    }

    Modality assigned_modality(std::uint32_t id) const { return assigned_[class_index(id)]; }

    /// Modalities used by at least one class, ascending by id.
    std::vector<Modality> assigned_modalities() const {
        std::set<Modality> used(assigned_.begin(), assigned_.end());
        return {used.begin(), used.end()};
    }

    void apply(const SideInfoAssignment& a) {
        std::vector<Modality> next = assigned_;
        for (const auto& [id, m] : a.per_class) {
            if (!has_embedding(m, id))
                throw ContractError("class " + std::to_string(id) + " assigned " + to_string(m) +
                                    " but that modality is missing for it");
            next[class_index(id)] = m;
        }
        assigned_ = std::move(next);
    }

    void set_observer(std::shared_ptr<AccessObserver> obs) { observer_ = std::move(obs); }

private:
    const SampleSet& set(Split s) const noexcept { return splits_[static_cast<std::size_t>(s)]; }

    void notify(Split s, std::size_t row) const {
        if (observer_) observer_->on_feature_read(s, row);
    }

    Modality default_modality(std::size_t c) const {
        for (const auto& s : modalities_)
            if (s.modality == Modality::Attribute && s.present[c]) return s.modality;
        for (const auto& s : modalities_)
            if (s.present[c]) return s.modality;
        throw ContractError("class " + std::to_string(classes_[c].id) + " has no side information");
    }

    void validate() {
        if (feat_dim_ == 0) throw ContractError("dataset: feat_dim is zero");
        if (classes_.empty()) throw ContractError("dataset: no classes");
        for (std::size_t c = 0; c < classes_.size(); ++c) {
            auto [it, inserted] = index_.emplace(classes_[c].id, c);
            if (!inserted) {
                const bool clash = classes_[it->second].seen != classes_[c].seen;
                throw ContractError("dataset: class id " + std::to_string(classes_[c].id) +
                                    (clash ? " listed as both seen and unseen" : " listed twice"));
            }
        }
        std::set<Modality> mods;
        for (const auto& s : modalities_) {
            if (s.modality == Modality::ImageFeature || !is_known_modality(static_cast<std::uint8_t>(s.modality)))
                throw ContractError("dataset: invalid side-information modality " + to_string(s.modality));
            if (!mods.insert(s.modality).second)
                throw ContractError("dataset: duplicate modality " + to_string(s.modality));
            if (s.embeddings.rows() != classes_.size() || s.present.size() != classes_.size() || s.dim() == 0)
                throw ContractError("dataset: " + to_string(s.modality) + " table does not cover every class");
            if (!s.embeddings.all_finite())
                throw ContractError("dataset: non-finite " + to_string(s.modality) + " embedding");
        }
        for (std::size_t c = 0; c < classes_.size(); ++c) {
            const bool any = std::any_of(modalities_.begin(), modalities_.end(),
                                         [c](const SideInfo& s) { return s.present[c] != 0; });
            if (!any) throw ContractError("dataset: class " + std::to_string(classes_[c].id) + " has no side information");
        }
        const Split all[] = {Split::TrainSeen, Split::TestSeen, Split::TestUnseen};
        for (Split sp : all) {
            const SampleSet& s = set(sp);
            if (s.features.rows() != s.labels.size())
                throw ContractError("dataset: " + to_string(sp) + " label count mismatch");
            if (!s.labels.empty() && s.features.cols() != feat_dim_)
                throw ContractError("dataset: " + to_string(sp) + " rows are not feat_dim wide");
            if (!s.features.all_finite()) throw ContractError("dataset: non-finite feature in " + to_string(sp));
            const bool want_seen = sp != Split::TestUnseen;
            for (std::uint32_t l : s.labels) {
                auto it = index_.find(l);
                if (it == index_.end())
                    throw ContractError("dataset: " + to_string(sp) + " references unknown class " + std::to_string(l));
                if (classes_[it->second].seen != want_seen)
                    throw ContractError("dataset: " + to_string(sp) + " contains " +
                                        (want_seen ? "unseen" : "seen") + " class " + std::to_string(l));
            }
        }
    }

    std::size_t feat_dim_;
    std::vector<ClassInfo> classes_;
    std::vector<SideInfo> modalities_;
    SampleSet splits_[3];
    std::unordered_map<std::uint32_t, std::size_t> index_;
    std::vector<Modality> assigned_;
    std::shared_ptr<AccessObserver> observer_;
};

inline std::string describe(const GzslDataset& d) {
    std::ostringstream os;
    os << "classes: " << d.classes().size() << " (" << d.seen_ids().size() << " seen, " << d.unseen_ids().size()
       << " unseen)\n";
    os << "feat_dim: " << d.feat_dim() << "\n";
    for (const auto& s : d.modalities()) {
        const auto present = std::count(s.present.begin(), s.present.end(), std::uint8_t{1});
        os << "modality " << to_string(s.modality) << ": dim " << s.dim() << ", present for " << present
           << " classes\n";
    }
    os << "train_seen: " << d.size(Split::TrainSeen) << "\n";
    os << "test_seen: " << d.size(Split::TestSeen) << "\n";
    os << "test_unseen: " << d.size(Split::TestUnseen) << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// ".gzc" container
// ---------------------------------------------------------------------------
//   "GZSC" | u16 version=1 | u32 feat_dim | u32 n_classes | u32 n_seen
//   class table: n_classes x (u32 id | u8 seen | u16 name_len | name bytes)
//   u8 modality count; per modality:
//     u8 modality_id | u32 dim | n_classes*dim f32 | n_classes u8 presence
//   train_seen, test_seen, test_unseen: u32 N | N x (u32 label | feat_dim f32)

inline constexpr std::uint16_t kContainerVersion = 1;

inline std::vector<std::uint8_t> serialize_container(const GzslDataset& d) {
    io::ByteWriter w;
    w.put_bytes("GZSC");
    w.put<std::uint16_t>(kContainerVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.feat_dim()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.classes().size()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.seen_ids().size()));
    for (const auto& c : d.classes()) {
        if (c.name.size() > 0xffff) throw ContractError("class name too long: " + c.name.substr(0, 32));
        w.put<std::uint32_t>(c.id);
        w.put<std::uint8_t>(c.seen ? 1 : 0);
        w.put<std::uint16_t>(static_cast<std::uint16_t>(c.name.size()));
        w.put_bytes(c.name);
    }
    w.put<std::uint8_t>(static_cast<std::uint8_t>(d.modalities().size()));
    for (const auto& s : d.modalities()) {
        w.put<std::uint8_t>(static_cast<std::uint8_t>(s.modality));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(s.dim()));
        for (double v : s.embeddings.values()) w.put<float>(static_cast<float>(v));
        for (std::uint8_t p : s.present) w.put<std::uint8_t>(p ? 1 : 0);
    }
    for (Split sp : {Split::TrainSeen, Split::TestSeen, Split::TestUnseen}) {
        const Matrix2D f = d.features(sp);
        const auto& labels = d.labels(sp);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(labels.size()));
        for (std::size_t r = 0; r < labels.size(); ++r) {
            w.put<std::uint32_t>(labels[r]);
            for (double v : f.row(r)) w.put<float>(static_cast<float>(v));
        }
    }
    return w.take();
}

inline GzslDataset parse_container(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    if (r.get_string(4, "magic") != "GZSC") throw FormatError("container: bad magic", 0);
    const auto version = r.get<std::uint16_t>("version");
    if (version != kContainerVersion)
        throw FormatError("container: unsupported version " + std::to_string(version), 4);
    const std::size_t feat_dim = r.get<std::uint32_t>("feat_dim");
    const std::size_t n_classes = r.get<std::uint32_t>("n_classes");
    const std::size_t n_seen_offset = r.offset();
    const std::size_t n_seen = r.get<std::uint32_t>("n_seen");

    std::vector<ClassInfo> classes;
    classes.reserve(std::min<std::size_t>(n_classes, r.remaining() / 7));
    std::size_t seen_count = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        ClassInfo info;
        info.id = r.get<std::uint32_t>("class id");
        const std::size_t flag_offset = r.offset();
        const auto flag = r.get<std::uint8_t>("seen flag");
        if (flag > 1) throw FormatError("container: seen flag must be 0 or 1", flag_offset);
        info.seen = flag == 1;
        seen_count += info.seen;
        const std::size_t len = r.get<std::uint16_t>("name length");
        info.name = r.get_string(len, "class name");
        classes.push_back(std::move(info));
    }
    if (seen_count != n_seen)
        throw FormatError("container: n_seen=" + std::to_string(n_seen) + " but class table marks " +
                              std::to_string(seen_count) + " seen",
                          n_seen_offset);

    const std::size_t n_mod = r.get<std::uint8_t>("modality count");
    std::vector<SideInfo> mods;
    for (std::size_t m = 0; m < n_mod; ++m) {
        const std::size_t id_offset = r.offset();
        const auto id = r.get<std::uint8_t>("modality id");
        if (!is_known_modality(id)) throw FormatError("container: unknown modality id", id_offset);
        SideInfo s;
        s.modality = static_cast<Modality>(id);
        const std::size_t dim = r.get<std::uint32_t>("modality dim");
        r.require(n_classes * dim * sizeof(float) + n_classes, "modality table");
        s.embeddings = Matrix2D(n_classes, dim);
        for (double& v : s.embeddings.values()) v = r.get<float>("embedding");
        s.present.resize(n_classes);
        for (auto& p : s.present) {
            const std::size_t off = r.offset();
            p = r.get<std::uint8_t>("presence");
            if (p > 1) throw FormatError("container: presence flag must be 0 or 1", off);
        }
        mods.push_back(std::move(s));
    }

    SampleSet sets[3];
    for (auto& s : sets) {
        const std::size_t n = r.get<std::uint32_t>("sample count");
        r.require(n * (sizeof(std::uint32_t) + feat_dim * sizeof(float)), "sample section");
        s.features = Matrix2D(n, feat_dim);
        s.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            s.labels[i] = r.get<std::uint32_t>("label");
            for (double& v : s.features.row(i)) v = r.get<float>("feature");
        }
    }
    if (r.remaining() != 0) throw FormatError("container: trailing bytes after last section", r.offset());
    return GzslDataset(feat_dim, std::move(classes), std::move(mods), std::move(sets[0]), std::move(sets[1]),
                       std::move(sets[2]));
}

inline GzslDataset load_container(const std::filesystem::path& path) { return parse_container(io::read_file(path)); }

inline void save_container(const std::filesystem::path& path, const GzslDataset& d) {
    io::write_file(path, serialize_container(d));
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

struct SynthConfig {
    std::size_t n_seen = 20;
    std::size_t n_unseen = 5;
    std::size_t feat_dim = 64;
    std::size_t attr_dim = 16;
    std::size_t samples_per_class = 100;
    double noise_sigma = 0.1;
    std::uint64_t seed = 7;
    /// When non-zero, also emit a sentence-like modality: a second fixed
    /// linear view of the attributes.
    std::size_t sentence_dim = 0;

    void validate() const {
        if (n_seen == 0 || n_unseen == 0) throw ContractError("synth: need at least one seen and one unseen class");
        if (feat_dim == 0 || attr_dim == 0) throw ContractError("synth: dimensions must be positive");
        if (samples_per_class < 2) throw ContractError("synth: need at least two samples per class");
        if (!(noise_sigma >= 0.0)) throw ContractError("synth: noise_sigma must be non-negative");
    }
};

/// Attributes a_c ~ U[0,1]^attr_dim per class; one shared map P with N(0,1)
/// entries; features = P a_c + N(0, sigma^2). 20% of each seen class is held
/// out as test_seen; unseen classes go entirely to test_unseen.
inline GzslDataset synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    SeededRng root(cfg.seed);
    SeededRng rng_split = root.substream(1);
    SeededRng rng_attr = root.substream(2);
    SeededRng rng_map = root.substream(3);
    SeededRng rng_noise = root.substream(4);
    SeededRng rng_sent = root.substream(5);

    const std::size_t n_classes = cfg.n_seen + cfg.n_unseen;
    std::vector<std::uint32_t> order(n_classes);
    for (std::size_t i = 0; i < n_classes; ++i) order[i] = static_cast<std::uint32_t>(i);
    rng_split.shuffle(order);
    std::vector<bool> seen(n_classes, false);
    for (std::size_t i = 0; i < cfg.n_seen; ++i) seen[order[i]] = true;

    std::vector<ClassInfo> classes;
    for (std::size_t c = 0; c < n_classes; ++c) {
        char name[32];
        std::snprintf(name, sizeof name, "class_%03zu", c);
        classes.push_back({static_cast<std::uint32_t>(c), name, seen[c]});
    }

    SideInfo attrs{Modality::Attribute, Matrix2D(n_classes, cfg.attr_dim), std::vector<std::uint8_t>(n_classes, 1)};
    for (double& v : attrs.embeddings.values()) v = rng_attr.uniform();

    const Matrix2D proj = gaussian_sample(rng_map, cfg.feat_dim, cfg.attr_dim);
    Matrix2D means(n_classes, cfg.feat_dim);
    detail::map(means).noalias() = detail::map(attrs.embeddings) * detail::map(proj).transpose();

    std::vector<SideInfo> mods{attrs};
    if (cfg.sentence_dim > 0) {
        Matrix2D q = gaussian_sample(rng_sent, cfg.sentence_dim, cfg.attr_dim);
        detail::map(q) /= std::sqrt(static_cast<double>(cfg.attr_dim));
        SideInfo sent{Modality::Sentence, Matrix2D(n_classes, cfg.sentence_dim),
                      std::vector<std::uint8_t>(n_classes, 1)};
        detail::map(sent.embeddings).noalias() = detail::map(attrs.embeddings) * detail::map(q).transpose();
        mods.push_back(std::move(sent));
    }

    const std::size_t n_test = static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(cfg.samples_per_class)));
    std::vector<double> tr, ts, tu;
    std::vector<std::uint32_t> ltr, lts, ltu;
    for (std::size_t c = 0; c < n_classes; ++c) {
        for (std::size_t s = 0; s < cfg.samples_per_class; ++s) {
            std::vector<double>* dst;
            std::vector<std::uint32_t>* lab;
            if (!seen[c]) {
                dst = &tu;
                lab = &ltu;
            } else if (s < cfg.samples_per_class - n_test) {
                dst = &tr;
                lab = &ltr;
            } else {
                dst = &ts;
                lab = &lts;
            }
            for (std::size_t f = 0; f < cfg.feat_dim; ++f) dst->push_back(means(c, f) + cfg.noise_sigma * rng_noise.normal());
            lab->push_back(static_cast<std::uint32_t>(c));
        }
    }
    auto make = [&](std::vector<double>& v, std::vector<std::uint32_t>& l) {
        return SampleSet{Matrix2D(l.size(), cfg.feat_dim, std::move(v)), std::move(l)};
    };
    return GzslDataset(cfg.feat_dim, std::move(classes), std::move(mods), make(tr, ltr), make(ts, lts),
                       make(tu, ltu));
}

/// Randomly routes round(x_s% of seen) classes and round(x_u% of unseen)
/// classes to sentence embeddings; the rest use attributes.
inline SideInfoAssignment assign_side_info(const GzslDataset& d, double x_s, double x_u, std::uint64_t seed) {
    if (!(x_s >= 0.0 && x_s <= 100.0 && x_u >= 0.0 && x_u <= 100.0))
        throw ContractError("assign_side_info: percentages must lie in [0, 100]");
    if (d.side_info(Modality::Attribute) == nullptr || d.side_info(Modality::Sentence) == nullptr)
        throw ContractError("assign_side_info: dataset needs both attribute and sentence modalities");
    SideInfoAssignment out{x_s, x_u, {}};
    SeededRng rng(seed);
    for (bool seen : {true, false}) {
        std::vector<std::uint32_t> ids = d.class_ids(seen);
        SeededRng sub = rng.substream(seen ? 1 : 2);
        sub.shuffle(ids);
        const double pct = seen ? x_s : x_u;
        const auto n_sent = static_cast<std::size_t>(std::lround(pct / 100.0 * static_cast<double>(ids.size())));
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const Modality m = i < n_sent ? Modality::Sentence : Modality::Attribute;
            if (!d.has_embedding(m, ids[i]))
                throw ContractError("assign_side_info: class " + std::to_string(ids[i]) + " lacks " + to_string(m));
            out.per_class[ids[i]] = m;
        }
    }
    return out;
}

}  // namespace cadavae
