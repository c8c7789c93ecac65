// Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
// nonzero if any criterion fails outside the pinned deviation list below.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cadavae/cli.hpp"
#include "oracles.hpp"

using namespace cadavae;
namespace fs = std::filesystem;

namespace {

// Tolerances and thresholds.
constexpr double kGradRelTol = 1e-4;
constexpr double kFdStep = 1e-4;
constexpr double kW2RelTol = 0.01;
constexpr std::size_t kW2Samples = 1000000;
constexpr double kKlAbsTol = 5e-3;
constexpr std::size_t kKlSamples = 4000000;
constexpr double kHarmonicTol = 0.1;
constexpr double kMinH = 40.0;
constexpr double kCaSlack = 1.0;
constexpr std::size_t kSeeds = 5;
constexpr std::size_t kMinSeedsPassing = 4;
constexpr std::size_t kFewShots = 10;
constexpr double kFewShotSigma = 1.0;

// Criteria known to be unattainable as written. They still print FAIL but do
// not change the exit code.
const std::map<std::string, std::string> kPinnedDeviations = {
    {"A4", "the CADA-VAE CUB row averages H over ten runs, so 2SU/(S+U) of the averaged S and U overshoots it"},
};

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string list(const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt("%.1f", v[i]);
    return s + "]";
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------
// A1
// ---------------------------------------------------------------------------

Outcome gradient_check() {
    std::mt19937_64 gen(2024);
    std::uniform_int_distribution<std::size_t> pick_m(2, 3), pick_rows(3, 6), pick_latent(2, 4), pick_hidden(3, 6);
    std::uniform_real_distribution<double> weight(0.0, 2.0);
    const VariantFlags variants[] = {VariantFlags::cada(), VariantFlags::ca(), VariantFlags::da(), VariantFlags::none()};
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t modalities = pick_m(gen), rows = pick_rows(gen), latent = pick_latent(gen);
        std::vector<ModalityVAE> vaes;
        std::vector<Matrix2D> xs, noise;
        std::vector<std::uint32_t> labels(rows);
        std::iota(labels.begin(), labels.end(), 0u);
        for (std::size_t m = 0; m < modalities; ++m) {
            const std::size_t dim = 2 + (m + trial) % 4;
            ModalityVAE v;
            v.modality = static_cast<Modality>(m);
            v.encoder = oracle::random_mlp({dim, pick_hidden(gen), 2 * latent}, gen, 0.6);
            v.decoder = oracle::random_mlp({latent, pick_hidden(gen), dim}, gen, 0.6);
            vaes.push_back(std::move(v));
            xs.push_back(oracle::random_matrix(rows, dim, gen));
            noise.push_back(oracle::random_matrix(rows, latent, gen, -1.5, 1.5));
        }
        MultiModalBatch batch = MultiModalBatch::aligned(std::move(xs), labels);
        // Every other three-modality trial splits side information across rows.
        if (modalities == 3 && trial % 2 == 0) {
            for (std::size_t m = 1; m < 3; ++m) {
                std::vector<std::size_t> keep;
                for (std::size_t r = 0; r < rows; ++r)
                    if (r % 2 == m - 1) keep.push_back(r);
                auto& blk = batch.blocks[m];
                blk.x = gather_rows(blk.x, keep);
                std::vector<std::uint32_t> kept_labels;
                for (std::size_t r : keep) kept_labels.push_back(blk.labels[r]);
                blk.labels = kept_labels;
                blk.rows = keep;
                noise[m] = gather_rows(noise[m], keep);
            }
        }
        const LossWeights w{weight(gen), weight(gen), weight(gen)};
        const VariantFlags flags = variants[trial % 4];
        const CadaResult r = cada_objective(vaes, batch, noise, w, flags, true);
        auto loss = [&] { return cada_objective(vaes, batch, noise, w, flags, false).total; };
        for (std::size_t m = 0; m < modalities; ++m)
            for (auto [net, grad] : {std::pair{&vaes[m].encoder, &r.grads[m].encoder},
                                     std::pair{&vaes[m].decoder, &r.grads[m].decoder}})
                for (std::size_t k = 0; k < net->layers.size(); ++k) {
                    const auto fw = oracle::central_diff(net->layers[k].weight.values(), loss, kFdStep);
                    for (std::size_t i = 0; i < fw.size(); ++i)
                        worst = std::max(worst, oracle::rel_err(grad->layers[k].weight.values()[i], fw[i]));
                    const auto fb = oracle::central_diff(net->layers[k].bias, loss, kFdStep);
                    for (std::size_t i = 0; i < fb.size(); ++i)
                        worst = std::max(worst, oracle::rel_err(grad->layers[k].bias[i], fb[i]));
                }
    }
    return {worst < kGradRelTol, "20 configs, max relative error " + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------------------
// A2, A3
// ---------------------------------------------------------------------------

DiagGaussian random_gaussian(std::size_t d, std::mt19937_64& gen, double mu_range, double lv_lo, double lv_hi) {
    std::uniform_real_distribution<double> mu(-mu_range, mu_range), lv(lv_lo, lv_hi);
    DiagGaussian g;
    for (std::size_t i = 0; i < d; ++i) {
        g.mu.push_back(mu(gen));
        g.log_var.push_back(lv(gen));
    }
    return g;
}

std::vector<double> sigmas(const DiagGaussian& g) {
    std::vector<double> s;
    for (std::size_t d = 0; d < g.dim(); ++d) s.push_back(g.sigma(d));
    return s;
}

Outcome wasserstein_check() {
    std::mt19937_64 gen(77);
    std::uniform_int_distribution<std::size_t> dim(1, 8);
    double worst = 0.0;
    bool identical_zero = true;
    for (int i = 0; i < 50; ++i) {
        const std::size_t d = dim(gen);
        const DiagGaussian a = random_gaussian(d, gen, 2.0, -2.0, 1.5), b = random_gaussian(d, gen, 2.0, -2.0, 1.5);
        const double closed = wasserstein2_diag(a, b);
        const double mc = oracle::w2_comonotone_mc(a.mu, sigmas(a), b.mu, sigmas(b), kW2Samples, 1000 + i);
        worst = std::max(worst, std::abs(closed - mc) / closed);
        identical_zero &= wasserstein2_diag(a, a) == 0.0 && wasserstein2_diag(b, b) == 0.0;
    }
    return {worst < kW2RelTol && identical_zero, "50 pairs, max relative error " + fmt("%.2e", worst) +
                                                     (identical_zero ? ", identical pairs exactly 0"
                                                                     : ", identical pair gave nonzero")};
}

Outcome kl_check() {
    std::mt19937_64 gen(78);
    std::uniform_int_distribution<std::size_t> dim(1, 3);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const DiagGaussian g = random_gaussian(dim(gen), gen, 1.0, -1.0, 0.7);
        std::vector<double> var;
        for (double lv : g.log_var) var.push_back(std::exp(lv));
        const double mc = oracle::kl_mc(g.mu, var, kKlSamples, 2000 + i);
        worst = std::max(worst, std::abs(kl_to_standard_normal(g) - mc));
    }
    return {worst < kKlAbsTol, "20 Gaussians, max absolute error " + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------------------
// A4
// ---------------------------------------------------------------------------

struct PublishedRow {
    const char* model;
    const char* dataset;
    double s, u, h;
};

// Generalized zero-shot results as printed in the benchmark comparison table.
const PublishedRow kPublished[] = {
    {"CMT", "CUB", 49.8, 7.2, 12.6},         {"CMT", "SUN", 21.8, 8.1, 11.8},
    {"CMT", "AWA1", 87.6, 0.9, 1.8},         {"CMT", "AWA2", 90.0, 0.5, 1.0},
    {"SJE", "CUB", 59.2, 23.5, 33.6},        {"SJE", "SUN", 30.5, 14.7, 19.8},
    {"SJE", "AWA1", 74.6, 11.3, 19.6},       {"SJE", "AWA2", 73.9, 8.0, 14.4},
    {"ALE", "CUB", 62.8, 23.7, 34.4},        {"ALE", "SUN", 33.1, 21.8, 26.3},
    {"ALE", "AWA1", 76.1, 16.8, 27.5},       {"ALE", "AWA2", 81.8, 14.0, 23.9},
    {"LATEM", "CUB", 57.3, 15.2, 24.0},      {"LATEM", "SUN", 28.8, 14.7, 19.5},
    {"LATEM", "AWA1", 71.7, 7.3, 13.3},      {"LATEM", "AWA2", 77.3, 11.5, 20.0},
    {"EZSL", "CUB", 63.8, 12.6, 21.0},       {"EZSL", "SUN", 27.9, 11.0, 15.8},
    {"EZSL", "AWA1", 75.6, 6.6, 12.1},       {"EZSL", "AWA2", 77.8, 5.9, 11.0},
    {"SYNC", "CUB", 70.9, 11.5, 19.8},       {"SYNC", "SUN", 43.3, 7.9, 13.4},
    {"SYNC", "AWA1", 87.3, 8.9, 16.2},       {"SYNC", "AWA2", 90.5, 10.0, 18.0},
    {"DeViSE", "CUB", 53.0, 23.8, 32.8},     {"DeViSE", "SUN", 27.4, 16.9, 20.9},
    {"DeViSE", "AWA1", 68.7, 13.4, 22.4},    {"DeViSE", "AWA2", 74.7, 17.1, 27.8},
    {"f-CLSWGAN", "CUB", 57.7, 43.7, 49.7},  {"f-CLSWGAN", "SUN", 36.6, 42.6, 39.4},
    {"f-CLSWGAN", "AWA1", 61.4, 57.9, 59.6}, {"f-CLSWGAN", "AWA2", 68.9, 52.1, 59.4},
    {"SE", "CUB", 53.3, 41.5, 46.7},         {"SE", "SUN", 30.5, 40.9, 34.9},
    {"SE", "AWA1", 67.8, 56.3, 61.5},        {"SE", "AWA2", 68.1, 58.3, 62.8},
    {"ReViSE", "CUB", 28.3, 37.6, 32.3},     {"ReViSE", "SUN", 20.1, 24.3, 22.0},
    {"ReViSE", "AWA1", 37.1, 46.1, 41.1},    {"ReViSE", "AWA2", 39.7, 46.4, 42.8},
    {"CADA-VAE", "CUB", 53.5, 51.6, 52.4},   {"CADA-VAE", "SUN", 35.7, 47.2, 40.6},
    {"CADA-VAE", "AWA1", 72.8, 57.3, 64.1},  {"CADA-VAE", "AWA2", 75.0, 55.8, 63.9},
};

Outcome metric_identity() {
    std::size_t ok = 0;
    std::string misses;
    for (const auto& r : kPublished) {
        const double h = harmonic_mean(r.s, r.u);
        if (std::abs(h - r.h) <= kHarmonicTol) {
            ++ok;
        } else {
            misses += std::string(misses.empty() ? "" : "; ") + r.model + " " + r.dataset + " (" + fmt("%.1f", r.s) +
                      ", " + fmt("%.1f", r.u) + ") -> " + fmt("%.3f", h) + " vs printed " + fmt("%.1f", r.h);
        }
    }
    const std::size_t n = std::size(kPublished);
    return {ok == n, std::to_string(ok) + "/" + std::to_string(n) + " rows within " + fmt("%.1f", kHarmonicTol) +
                         (misses.empty() ? "" : "; outside: " + misses)};
}

// ---------------------------------------------------------------------------
// A5, A6, A7
// ---------------------------------------------------------------------------

EvalConfig default_eval(std::uint64_t seed, std::size_t shots = 0) {
    EvalConfig e;
    e.seed = seed;
    e.shots = shots;
    return e;
}

std::vector<ModalityVAE> train_default(const GzslDataset& d, VariantFlags flags, std::uint64_t seed) {
    TrainConfig c;
    c.seed = seed;
    c.flags = flags;
    return train(d, c).vaes;
}

struct VariantRuns {
    std::vector<double> h;
    double seconds = 0.0;
};

VariantRuns run_variant(const GzslDataset& d, VariantFlags flags) {
    VariantRuns out;
    const auto t0 = Clock::now();
    for (std::uint64_t seed = 1; seed <= kSeeds; ++seed)
        out.h.push_back(evaluate_pipeline_gzsl(train_default(d, flags, seed), d, default_eval(seed)).H);
    out.seconds = seconds_since(t0);
    return out;
}

Outcome competence(const VariantRuns& cada) {
    const auto passing = std::count_if(cada.h.begin(), cada.h.end(), [](double h) { return h >= kMinH; });
    const bool fast = cada.seconds < 600.0;
    return {passing >= static_cast<long>(kMinSeedsPassing) && fast,
            "H " + list(cada.h) + ", " + std::to_string(passing) + "/5 >= " + fmt("%.1f", kMinH) + ", " +
                fmt("%.0f s", cada.seconds)};
}

Outcome ablation(const VariantRuns& cada, const VariantRuns& ca, const VariantRuns& da) {
    const double hc = median(cada.h), hca = median(ca.h), hda = median(da.h);
    const double secs = cada.seconds + ca.seconds + da.seconds;
    return {hc >= hda && hc >= hca - kCaSlack && secs < 1800.0,
            "median H cada " + fmt("%.1f", hc) + ", ca " + fmt("%.1f", hca) + ", da " + fmt("%.1f", hda) + "; CA " +
                list(ca.h) + ", DA " + list(da.h) + ", " + fmt("%.0f s", secs)};
}

Outcome few_shot(const GzslDataset& d) {
    const auto t0 = Clock::now();
    std::vector<double> h0, h10;
    std::size_t improved = 0;
    for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
        const auto vaes = train_default(d, VariantFlags::cada(), seed);
        h0.push_back(evaluate_fewshot(vaes, d, default_eval(seed, 0)).H);
        h10.push_back(evaluate_fewshot(vaes, d, default_eval(seed, kFewShots)).H);
        improved += h10.back() > h0.back();
    }
    const double secs = seconds_since(t0);
    return {improved >= kMinSeedsPassing && secs < 900.0,
            "sigma " + fmt("%.1f", kFewShotSigma) + ", H(k=0) " + list(h0) + ", H(k=10) " + list(h10) + ", " +
                std::to_string(improved) + "/5 improved, " + fmt("%.0f s", secs)};
}

// ---------------------------------------------------------------------------
// A9
// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome cli_determinism() {
    const auto t0 = Clock::now();
    const fs::path dir = fs::temp_directory_path() / "cadavae_acceptance_a9";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ostringstream out, err;
    auto run = [&](std::vector<std::string> args) { return cli::run(args, out, err); };
    const std::string data = (dir / "s.gzc").string();
    if (run({"synth", "--seen", "20", "--unseen", "5", "--feat-dim", "64", "--attr-dim", "16", "--samples", "100",
             "--seed", "7", "--out", data}) != 0)
        return {false, "synth failed: " + err.str()};
    for (const char* r : {"run1", "run2"}) {
        const std::string rd = (dir / r).string();
        if (run({"train", "--variant", "cada", "--data", data, "--seed", "1", "--out", rd}) != 0 ||
            run({"eval", "--model", rd + "/model.cvae", "--data", data, "--seed", "1", "--out", rd + "/report.csv"}) != 0)
            return {false, "command failed: " + err.str()};
    }
    bool same = true;
    for (const char* f : {"model.cvae", "loss.csv", "report.csv"}) {
        const std::string a = slurp(dir / "run1" / f), b = slurp(dir / "run2" / f);
        same &= !a.empty() && a == b;
    }
    fs::remove_all(dir);
    const double secs = seconds_since(t0);
    return {same && secs < 600.0, std::string(same ? "checkpoint, loss and report identical" : "outputs differ") +
                                      ", " + fmt("%.0f s", secs)};
}

// ---------------------------------------------------------------------------
// A10
// ---------------------------------------------------------------------------

struct ReadLog : AccessObserver {
    std::vector<std::pair<Split, std::size_t>> reads;
    void on_feature_read(Split s, std::size_t r) override { reads.emplace_back(s, r); }
};

Outcome hygiene() {
    SynthConfig s;
    s.n_seen = 8;
    s.n_unseen = 4;
    s.feat_dim = 16;
    s.attr_dim = 6;
    s.samples_per_class = 30;
    GzslDataset d = synth_generate(s);
    auto log = std::make_shared<ReadLog>();
    d.set_observer(log);

    TrainConfig tc;
    tc.epochs = 5;
    tc.seed = 3;
    tc.vae.latent_dim = 6;
    tc.vae.image_encoder_hidden = {24};
    tc.vae.image_decoder_hidden = {24};
    tc.vae.aux_encoder_hidden = {12};
    tc.vae.aux_decoder_hidden = {12};
    const auto vaes = train(d, tc).vaes;
    const std::size_t after_train = log->reads.size();
    for (std::size_t i = 0; i < after_train; ++i)
        if (log->reads[i].first != Split::TrainSeen) return {false, "training read " + to_string(log->reads[i].first)};

    EvalConfig ec;
    ec.seed = 3;
    ec.shots = 2;
    ec.plan.per_seen_class = 20;
    ec.plan.per_unseen_class = 20;
    ec.classifier.epochs = 3;
    const auto shots = select_shots(d, {ec.shots, SeededRng(ec.seed).substream(13).next_u64()});
    std::set<std::size_t> shot_rows;
    for (const auto& [id, rows] : shots) shot_rows.insert(rows.begin(), rows.end());
    (void)evaluate_fewshot(vaes, d, ec);

    // Unseen test images may only be read as injected shots until scoring
    // starts, which begins with the seen test split.
    std::size_t first_scoring = log->reads.size(), last_shot = after_train, shot_reads = 0;
    for (std::size_t i = after_train; i < log->reads.size(); ++i) {
        const auto [split, row] = log->reads[i];
        if (split == Split::TestSeen && first_scoring == log->reads.size()) first_scoring = i;
        if (split == Split::TestUnseen && shot_rows.count(row)) {
            last_shot = i;
            ++shot_reads;
        }
    }
    std::size_t early = 0;
    for (std::size_t i = after_train; i < first_scoring; ++i)
        if (log->reads[i].first == Split::TestUnseen && !shot_rows.count(log->reads[i].second)) ++early;
    std::size_t scored_shots = 0;
    for (std::size_t i = first_scoring; i < log->reads.size(); ++i)
        scored_shots += log->reads[i].first == Split::TestUnseen && shot_rows.count(log->reads[i].second);
    const bool ok = early == 0 && scored_shots == 0 && shot_reads > 0 && last_shot < first_scoring;
    return {ok, std::to_string(after_train) + " training reads all train_seen, " + std::to_string(shot_reads) +
                    " shot reads before scoring, " + std::to_string(early) + " other unseen reads before scoring"};
}

}  // namespace

int main() {
    int unexpected = 0;
    auto report = [&](const std::string& id, const std::string& title, const Outcome& o) {
        const bool pinned = kPinnedDeviations.count(id) > 0;
        std::printf("%s %s  %s: %s\n", id.c_str(), o.pass ? "PASS" : "FAIL", title.c_str(), o.detail.c_str());
        if (!o.pass && pinned) std::printf("   pinned deviation: %s\n", kPinnedDeviations.at(id).c_str());
        if (o.pass && pinned) std::printf("   pinned deviation no longer reproduces; remove it\n");
        if (!o.pass && !pinned) ++unexpected;
        std::fflush(stdout);
    };
    auto timed = [](const std::function<Outcome()>& f, double limit) {
        const auto t0 = Clock::now();
        Outcome o = f();
        const double secs = seconds_since(t0);
        o.detail += ", " + fmt("%.1f s", secs);
        if (secs >= limit) {
            o.pass = false;
            o.detail += " (limit " + fmt("%.0f s", limit) + ")";
        }
        return o;
    };

    report("A1", "gradient check", timed(gradient_check, 60.0));
    report("A2", "Wasserstein oracle", timed(wasserstein_check, 60.0));
    report("A3", "KL oracle", timed(kl_check, 60.0));
    report("A4", "harmonic mean identity", metric_identity());

    const GzslDataset clean = synth_generate(SynthConfig{});
    const VariantRuns cada = run_variant(clean, VariantFlags::cada());
    report("A5", "synthetic GZSL competence", competence(cada));
    const VariantRuns ca = run_variant(clean, VariantFlags::ca());
    const VariantRuns da = run_variant(clean, VariantFlags::da());
    report("A6", "ablation ordering", ablation(cada, ca, da));

    SynthConfig noisy;
    noisy.noise_sigma = kFewShotSigma;
    report("A7", "few-shot improvement", few_shot(synth_generate(noisy)));

    std::printf("A8 SKIP  real-feature benchmark: optional, needs converted CUB features\n");
    report("A9", "CLI determinism", cli_determinism());
    report("A10", "zero-shot hygiene", timed(hygiene, 60.0));
    return unexpected == 0 ? 0 : 1;
}
