#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cadavae/checkpoint.hpp"
#include "cadavae/classifier.hpp"
#include "cadavae/data.hpp"
#include "cadavae/trainer.hpp"

namespace cadavae::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Bad command line or config file.
class ConfigError : public ContractError {
public:
    using ContractError::ContractError;
};

// ---------------------------------------------------------------------------
// Logging
// ---------------------------------------------------------------------------

enum class LogLevel { Quiet, Info, Debug };

/// Reads CADA_LOG (quiet | info | debug); unset means info.
inline LogLevel log_level_from_env() {
    const char* v = std::getenv("CADA_LOG");
    if (v == nullptr || *v == '\0') return LogLevel::Info;
    const std::string s(v);
    if (s == "quiet") return LogLevel::Quiet;
    if (s == "debug") return LogLevel::Debug;
    if (s == "info") return LogLevel::Info;
    throw ConfigError("CADA_LOG must be quiet, info or debug, got '" + s + "'");
}

class Log {
public:
    Log(std::ostream& os, LogLevel level) : os_(os), level_(level) {}

    void info(const std::string& msg) const { write(LogLevel::Info, msg); }
    void debug(const std::string& msg) const { write(LogLevel::Debug, msg); }
    LogLevel level() const noexcept { return level_; }

private:
    void write(LogLevel at, const std::string& msg) const {
        if (static_cast<int>(level_) < static_cast<int>(at)) return;
        std::lock_guard<std::mutex> lock(mu_);
        os_ << "[cadavae] " << msg << "\n";
    }

    std::ostream& os_;
    LogLevel level_;
    mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// RunConfig: flat key=value file
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || v.empty())
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (v.empty() || used != v.size() || !std::isfinite(out))
        throw ConfigError(key + ": expected a finite number, got '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

/// Comma-separated layer widths; "none" means no hidden layer.
inline std::vector<std::size_t> parse_widths(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    if (v == "none") return out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const std::size_t w = parse_count(key, trim(part));
        if (w == 0) throw ConfigError(key + ": layer width must be positive");
        out.push_back(w);
    }
    if (out.empty()) throw ConfigError(key + ": empty layer list");
    return out;
}

inline std::string fmt_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string fmt_widths(const std::vector<std::size_t>& w) {
    if (w.empty()) return "none";
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
    return s;
}

}  // namespace detail

struct RunConfig;

struct ConfigKey {
    std::string name;
    std::string help;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

/// Training, latent sampling and classifier settings, with the origin of each
/// value ("default", "file" or "flag").
struct RunConfig {
    TrainConfig train;
    SamplingPlan sampling;
    ClassifierConfig classifier;
    std::size_t shots = 0;
    std::map<std::string, std::string> sources;

    static const std::vector<ConfigKey>& schema();

    static const ConfigKey& key(const std::string& name) {
        for (const auto& k : schema())
            if (k.name == name) return k;
        throw ConfigError("unknown config key '" + name + "'");
    }

    void set(const std::string& name, const std::string& value, const std::string& source) {
        key(name).set(*this, value);
        sources[name] = source;
    }

    std::string get(const std::string& name) const { return key(name).get(*this); }

    std::string source(const std::string& name) const {
        auto it = sources.find(name);
        return it == sources.end() ? "default" : it->second;
    }

    /// Applies every `key = value` line; '#' starts a comment.
    void parse(const std::string& text, const std::string& origin) {
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
            const std::string k = detail::trim(line.substr(0, eq));
            try {
                set(k, detail::trim(line.substr(eq + 1)), "file");
            } catch (const ConfigError& e) {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    }

    void load_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config file " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        parse(ss.str(), path.string());
    }

    void validate() const {
        try {
            train.validate();
            classifier.validate();
        } catch (const ConfigError&) {
            throw;
        } catch (const ContractError& e) {
            throw ConfigError(e.what());
        }
    }

    void log_to(const Log& log) const {
        for (const auto& k : schema()) log.info("config " + k.name + " = " + get(k.name) + " (" + source(k.name) + ")");
    }

    EvalConfig eval_config() const {
        EvalConfig e;
        e.plan = sampling;
        e.classifier = classifier;
        e.seed = train.seed;
        e.shots = shots;
        return e;
    }
};

inline const std::vector<ConfigKey>& RunConfig::schema() {
    using detail::fmt_real;
    using detail::parse_count;
    using detail::parse_real;
    auto count_key = [](std::string name, std::string help, auto member) {
        return ConfigKey{name, help, [name, member](RunConfig& c, const std::string& v) { member(c) = parse_count(name, v); },
                         [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }};
    };
    auto real_key = [](std::string name, std::string help, auto member) {
        return ConfigKey{name, help, [name, member](RunConfig& c, const std::string& v) { member(c) = parse_real(name, v); },
                         [member](const RunConfig& c) { return fmt_real(member(const_cast<RunConfig&>(c))); }};
    };
    auto widths_key = [](std::string name, std::string help, auto member) {
        return ConfigKey{name, help,
                         [name, member](RunConfig& c, const std::string& v) { member(c) = detail::parse_widths(name, v); },
                         [member](const RunConfig& c) { return detail::fmt_widths(member(const_cast<RunConfig&>(c))); }};
    };
    auto schedule_keys = [&](std::vector<ConfigKey>& out, const std::string& w, Schedule TrainConfig::*s) {
        out.push_back(count_key(w + "_start", "epoch at which the " + w + " ramp starts",
                                [s](RunConfig& c) -> std::size_t& { return (c.train.*s).start_epoch; }));
        out.push_back(count_key(w + "_end", "epoch at which the " + w + " ramp stops",
                                [s](RunConfig& c) -> std::size_t& { return (c.train.*s).end_epoch; }));
        out.push_back(real_key(w + "_rate", "increase of " + w + " per epoch",
                               [s](RunConfig& c) -> double& { return (c.train.*s).rate_per_epoch; }));
    };

    static const std::vector<ConfigKey> keys = [&] {
        std::vector<ConfigKey> k;
        k.push_back(ConfigKey{"variant", "cada, ca, da or vae",
                              [](RunConfig& c, const std::string& v) {
                                  try {
                                      c.train.flags = parse_variant(v);
                                  } catch (const ContractError& e) {
                                      throw ConfigError(e.what());
                                  }
                              },
                              [](const RunConfig& c) { return variant_name(c.train.flags); }});
        k.push_back(ConfigKey{"seed", "run seed for training and evaluation",
                              [](RunConfig& c, const std::string& v) { c.train.seed = parse_count("seed", v); },
                              [](const RunConfig& c) { return std::to_string(c.train.seed); }});
        k.push_back(count_key("epochs", "VAE training epochs",
                              [](RunConfig& c) -> std::size_t& { return c.train.epochs; }));
        k.push_back(count_key("batch_size", "VAE training batch size",
                              [](RunConfig& c) -> std::size_t& { return c.train.batch_size; }));
        k.push_back(real_key("vae_learning_rate", "Adam learning rate for the VAEs",
                             [](RunConfig& c) -> double& { return c.train.vae_learning_rate; }));
        k.push_back(count_key("latent_dim", "latent size",
                              [](RunConfig& c) -> std::size_t& { return c.train.vae.latent_dim; }));
        k.push_back(widths_key("image_encoder_hidden", "hidden widths of the image encoder",
                               [](RunConfig& c) -> std::vector<std::size_t>& { return c.train.vae.image_encoder_hidden; }));
        k.push_back(widths_key("image_decoder_hidden", "hidden widths of the image decoder",
                               [](RunConfig& c) -> std::vector<std::size_t>& { return c.train.vae.image_decoder_hidden; }));
        k.push_back(widths_key("aux_encoder_hidden", "hidden widths of side-information encoders",
                               [](RunConfig& c) -> std::vector<std::size_t>& { return c.train.vae.aux_encoder_hidden; }));
        k.push_back(widths_key("aux_decoder_hidden", "hidden widths of side-information decoders",
                               [](RunConfig& c) -> std::vector<std::size_t>& { return c.train.vae.aux_decoder_hidden; }));
        schedule_keys(k, "beta", &TrainConfig::beta);
        schedule_keys(k, "gamma", &TrainConfig::gamma);
        schedule_keys(k, "delta", &TrainConfig::delta);
        k.push_back(count_key("per_seen_class", "latent samples per seen class",
                              [](RunConfig& c) -> std::size_t& { return c.sampling.per_seen_class; }));
        k.push_back(count_key("per_unseen_class", "latent samples per unseen class",
                              [](RunConfig& c) -> std::size_t& { return c.sampling.per_unseen_class; }));
        k.push_back(ConfigKey{"dynamic", "train the classifier on a fresh latent stream",
                              [](RunConfig& c, const std::string& v) { c.sampling.dynamic = detail::parse_bool("dynamic", v); },
                              [](const RunConfig& c) { return std::string(c.sampling.dynamic ? "true" : "false"); }});
        k.push_back(count_key("shots", "unseen-class images per class moved into training",
                              [](RunConfig& c) -> std::size_t& { return c.shots; }));
        k.push_back(real_key("classifier_learning_rate", "Adam learning rate for the softmax",
                             [](RunConfig& c) -> double& { return c.classifier.learning_rate; }));
        k.push_back(count_key("classifier_epochs", "softmax epochs over a fixed latent set",
                              [](RunConfig& c) -> std::size_t& { return c.classifier.epochs; }));
        k.push_back(count_key("classifier_batch_size", "softmax batch size",
                              [](RunConfig& c) -> std::size_t& { return c.classifier.batch_size; }));
        k.push_back(count_key("classifier_iterations", "softmax iterations with a dynamic latent stream",
                              [](RunConfig& c) -> std::size_t& { return c.classifier.dynamic_iterations; }));
        return k;
    }();
    return keys;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct SynthArgs {
    SynthConfig cfg;
    std::string out;
};

inline int cmd_synth(const SynthArgs& a, const Log& log) {
    const GzslDataset d = synth_generate(a.cfg);
    save_container(a.out, d);
    log.info("wrote " + a.out + ": " + std::to_string(d.classes().size()) + " classes");
    return kExitOk;
}

/// Flags given on the command line; empty means "not given".
using FlagValues = std::vector<std::pair<std::string, std::string>>;

inline RunConfig resolve_config(const std::string& config_path, const FlagValues& flags, const Log& log) {
    RunConfig rc;
    if (!config_path.empty()) rc.load_file(config_path);
    for (const auto& [k, v] : flags) rc.set(k, v, "flag");
    rc.validate();
    rc.log_to(log);
    return rc;
}

inline GzslDataset load_dataset(const std::string& path) {
    try {
        return load_container(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
}

struct TrainArgs {
    std::string data;
    std::string config;
    std::string out;
    FlagValues flags;
};

inline int cmd_train(const TrainArgs& a, const Log& log) {
    const RunConfig rc = resolve_config(a.config, a.flags, log);
    const GzslDataset d = load_dataset(a.data);
    log.info("training " + variant_name(rc.train.flags) + " on " + a.data);
    const TrainResult r = train(d, rc.train, [&](const LossRecord& rec) {
        log.debug("epoch " + std::to_string(rec.epoch) + " total " + detail::fmt_real(rec.total));
    });
    std::filesystem::create_directories(a.out);
    const std::filesystem::path dir(a.out);
    save_checkpoint(dir / "model.cvae", r.vaes);
    std::ofstream csv(dir / "loss.csv", std::ios::binary | std::ios::trunc);
    if (!csv) throw IoError("cannot write " + (dir / "loss.csv").string());
    r.trace.write_csv(csv);
    log.info("wrote " + (dir / "model.cvae").string() + " and " + (dir / "loss.csv").string());
    return kExitOk;
}

/// Checks that a checkpoint can encode every modality the dataset needs.
inline void check_model(const std::vector<ModalityVAE>& vaes, const GzslDataset& d, const RunConfig& rc) {
    const std::size_t latent = find_vae(vaes, Modality::ImageFeature).latent_dim();
    for (const auto& v : vaes)
        if (v.latent_dim() != latent) throw DimensionError("checkpoint VAEs disagree on latent size");
    if (rc.source("latent_dim") != "default" && rc.train.vae.latent_dim != latent)
        throw DimensionError("configured latent_dim " + std::to_string(rc.train.vae.latent_dim) +
                             " does not match the checkpoint's " + std::to_string(latent));
    if (find_vae(vaes, Modality::ImageFeature).data_dim() != d.feat_dim())
        throw DimensionError("checkpoint image VAE expects " +
                             std::to_string(find_vae(vaes, Modality::ImageFeature).data_dim()) +
                             "-d features, dataset has " + std::to_string(d.feat_dim()));
    for (Modality m : d.assigned_modalities())
        if (find_vae(vaes, m).data_dim() != d.side_info(m)->dim())
            throw DimensionError("checkpoint " + to_string(m) + " VAE does not match the dataset's embedding size");
}

struct ReportRow {
    std::string dataset;
    std::string variant;
    std::uint64_t seed = 0;
    std::size_t shots = 0;
    EvalReport report;
};

inline constexpr const char* kReportHeader = "dataset,variant,seed,shots,S,U,H";

inline std::string format_row(const ReportRow& r) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f,%.1f,%.1f", r.report.S, r.report.U, r.report.H);
    return r.dataset + "," + r.variant + "," + std::to_string(r.seed) + "," + std::to_string(r.shots) + "," + buf;
}

struct EvalArgs {
    std::string model;
    std::string data;
    std::string config;
    std::string out;
    std::string variant = "cada";
    std::string dataset_name;
    std::string dump_latent;
    FlagValues flags;
};

inline std::string dataset_label(const std::string& path, const std::string& name) {
    return name.empty() ? std::filesystem::path(path).stem().string() : name;
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out, const Log& log) {
    const RunConfig rc = resolve_config(a.config, a.flags, log);
    const GzslDataset d = load_dataset(a.data);
    std::vector<ModalityVAE> vaes;
    try {
        vaes = load_checkpoint(a.model);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    check_model(vaes, d, rc);
    const EvalConfig ec = rc.eval_config();
    const EvalReport report = evaluate_fewshot(vaes, d, ec);
    if (!a.dump_latent.empty()) {
        if (ec.plan.dynamic) throw ConfigError("--dump-latent needs a fixed sampling plan");
        const SeededRng root(ec.seed);
        const auto shots = select_shots(d, {ec.shots, root.substream(13).next_u64()});
        std::ofstream f(a.dump_latent, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write " + a.dump_latent);
        build_fixed(vaes, d, ec.plan, root.substream(11), shots).write_csv(f);
    }
    const ReportRow row{dataset_label(a.data, a.dataset_name), a.variant, rc.train.seed, rc.shots, report};
    const std::string text = std::string(kReportHeader) + "\n" + format_row(row) + "\n";
    if (a.out.empty()) {
        out << text;
    } else {
        std::ofstream f(a.out, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write " + a.out);
        f << text;
    }
    log.info("S " + detail::fmt_real(report.S) + " U " + detail::fmt_real(report.U) + " H " + detail::fmt_real(report.H));
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

enum class SweepAxis { LatentDim, Shots, SideInfo, Samples };

inline SweepAxis parse_axis(const std::string& s) {
    if (s == "latent-dim") return SweepAxis::LatentDim;
    if (s == "shots") return SweepAxis::Shots;
    if (s == "sideinfo") return SweepAxis::SideInfo;
    if (s == "samples") return SweepAxis::Samples;
    throw ConfigError("unknown sweep axis '" + s + "' (latent-dim, shots, sideinfo, samples)");
}

inline std::vector<std::string> split_grid(const std::string& values) {
    std::vector<std::string> out;
    std::stringstream ss(values);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = detail::trim(part);
        if (!part.empty()) out.push_back(part);
    }
    return out;
}

struct SweepArgs {
    std::string axis;
    std::string values;
    std::string data;
    std::string config;
    std::string out;
    std::string dataset_name;
    double unseen_ratio = 2.0;
    std::size_t jobs = 1;
    FlagValues flags;
};

struct SweepRow {
    std::string value;
    std::size_t shots = 0;
    EvalReport report;
    std::string status = "ok";
};

inline constexpr const char* kSweepHeader = "dataset,variant,seed,axis,value,shots,S,U,H,status";

inline std::pair<double, double> parse_sideinfo_point(const std::string& v) {
    const auto colon = v.find(':');
    if (colon == std::string::npos) throw ConfigError("sideinfo grid point '" + v + "' must be XS:XU");
    return {detail::parse_real("sideinfo", v.substr(0, colon)), detail::parse_real("sideinfo", v.substr(colon + 1))};
}

inline int cmd_sweep(const SweepArgs& a, std::ostream& out, const Log& log) {
    const SweepAxis axis = parse_axis(a.axis);
    const std::vector<std::string> grid = split_grid(a.values);
    if (grid.empty()) throw ConfigError("empty sweep grid");
    if (a.jobs == 0) throw ConfigError("--jobs must be at least 1");
    if (!(a.unseen_ratio >= 0.0)) throw ConfigError("--unseen-ratio must be non-negative");
    const RunConfig rc = resolve_config(a.config, a.flags, log);
    const GzslDataset d = load_dataset(a.data);

    // Axes that only change evaluation share one trained model.
    std::vector<ModalityVAE> shared;
    if (axis == SweepAxis::Shots || axis == SweepAxis::Samples) {
        log.info("training shared " + variant_name(rc.train.flags) + " model");
        shared = train(d, rc.train).vaes;
    }

    std::vector<SweepRow> rows(grid.size());
    auto run_point = [&](std::size_t i) {
        SweepRow& row = rows[i];
        row.value = grid[i];
        row.shots = rc.shots;
        try {
            EvalConfig ec = rc.eval_config();
            switch (axis) {
                case SweepAxis::LatentDim: {
                    TrainConfig tc = rc.train;
                    tc.vae.latent_dim = detail::parse_count("latent-dim", grid[i]);
                    const auto vaes = train(d, tc).vaes;
                    row.report = evaluate_fewshot(vaes, d, ec);
                    break;
                }
                case SweepAxis::Shots:
                    ec.shots = row.shots = detail::parse_count("shots", grid[i]);
                    row.report = evaluate_fewshot(shared, d, ec);
                    break;
                case SweepAxis::Samples: {
                    ec.plan.per_seen_class = detail::parse_count("samples", grid[i]);
                    ec.plan.per_unseen_class = static_cast<std::size_t>(
                        std::lround(a.unseen_ratio * static_cast<double>(ec.plan.per_seen_class)));
                    row.report = evaluate_fewshot(shared, d, ec);
                    break;
                }
                case SweepAxis::SideInfo: {
                    const auto [xs, xu] = parse_sideinfo_point(grid[i]);
                    GzslDataset local = d;
                    local.apply(assign_side_info(local, xs, xu, rc.train.seed));
                    const auto vaes = train(local, rc.train).vaes;
                    row.report = evaluate_fewshot(vaes, local, ec);
                    break;
                }
            }
            log.info("grid point " + grid[i] + ": H " + detail::fmt_real(row.report.H));
        } catch (const std::exception& e) {
            std::string msg = e.what();
            std::replace(msg.begin(), msg.end(), ',', ';');
            std::replace(msg.begin(), msg.end(), '\n', ' ');
            row.report = EvalReport{};
            row.status = "error: " + msg;
            log.info("grid point " + grid[i] + " failed: " + msg);
        }
    };

    if (a.jobs == 1) {
        for (std::size_t i = 0; i < grid.size(); ++i) run_point(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < std::min(a.jobs, grid.size()); ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < grid.size(); i = next++) run_point(i);
            });
        for (auto& th : pool) th.join();
    }

    std::ostringstream text;
    text << kSweepHeader << "\n";
    const std::string name = dataset_label(a.data, a.dataset_name);
    std::size_t ok = 0;
    for (const auto& r : rows) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.1f,%.1f,%.1f", r.report.S, r.report.U, r.report.H);
        text << name << "," << variant_name(rc.train.flags) << "," << rc.train.seed << "," << a.axis << ","
             << r.value << "," << r.shots << "," << buf << "," << r.status
             << "\n";
        ok += r.status == "ok";
    }
    if (a.out.empty()) {
        out << text.str();
    } else {
        std::ofstream f(a.out, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write " + a.out);
        f << text.str();
    }
    return ok > 0 ? kExitOk : kExitRuntime;
}

inline int cmd_info(const std::string& data, std::ostream& out) {
    out << describe(load_dataset(data));
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Parses `args` (without the program name) and runs one subcommand.
/// Returns the process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"CADA-VAE: cross- and distribution-aligned VAEs for generalized zero- and few-shot learning",
                 "cadavae"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "write a synthetic .gzc dataset");
    s->add_option("--seen", synth.cfg.n_seen, "seen classes")->capture_default_str();
    s->add_option("--unseen", synth.cfg.n_unseen, "unseen classes")->capture_default_str();
    s->add_option("--feat-dim", synth.cfg.feat_dim, "image feature size")->capture_default_str();
    s->add_option("--attr-dim", synth.cfg.attr_dim, "attribute size")->capture_default_str();
    s->add_option("--samples", synth.cfg.samples_per_class, "samples per class")->capture_default_str();
    s->add_option("--sigma", synth.cfg.noise_sigma, "feature noise")->capture_default_str();
    s->add_option("--seed", synth.cfg.seed, "generator seed")->capture_default_str();
    s->add_option("--sentence-dim", synth.cfg.sentence_dim, "also emit a sentence modality of this size")
        ->capture_default_str();
    s->add_option("--out", synth.out, "output .gzc file")->required();

    // Flags that mirror config keys are collected as strings so that the
    // config layer parses and records them.
    struct Mirror {
        CLI::App* sub;
        CLI::Option* opt;
        std::string key;
        std::string value;
    };
    std::vector<std::unique_ptr<Mirror>> mirrors;
    auto mirror = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
        auto m = std::make_unique<Mirror>(Mirror{sub, nullptr, key, {}});
        m->opt = sub->add_option(flag, m->value, help + " (config key " + key + ")");
        mirrors.push_back(std::move(m));
    };

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "train the VAEs and write model.cvae and loss.csv");
    t->add_option("--data", tr.data, ".gzc dataset")->required();
    t->add_option("--config", tr.config, "key=value config file");
    t->add_option("--out", tr.out, "output directory")->required();
    mirror(t, "--variant", "variant", "cada, ca, da or vae");
    mirror(t, "--seed", "seed", "run seed");
    mirror(t, "--epochs", "epochs", "training epochs");
    mirror(t, "--latent-dim", "latent_dim", "latent size");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "train the softmax on latent features and report S, U, H");
    e->add_option("--model", ev.model, "checkpoint from train")->required();
    e->add_option("--data", ev.data, ".gzc dataset")->required();
    e->add_option("--config", ev.config, "key=value config file");
    e->add_option("--out", ev.out, "report CSV (default stdout)");
    e->add_option("--variant", ev.variant, "variant label for the report")->capture_default_str();
    e->add_option("--dataset-name", ev.dataset_name, "dataset label (default: data file stem)");
    e->add_option("--dump-latent", ev.dump_latent, "write the classifier's latent training set as CSV");
    mirror(e, "--seed", "seed", "run seed");
    mirror(e, "--shots", "shots", "unseen-class shots");
    mirror(e, "--per-seen", "per_seen_class", "latent samples per seen class");
    mirror(e, "--per-unseen", "per_unseen_class", "latent samples per unseen class");
    mirror(e, "--latent-dim", "latent_dim", "expected latent size");
    bool dynamic = false;
    e->add_flag("--dynamic", dynamic, "fresh latent stream instead of a fixed set (config key dynamic)");

    SweepArgs sw;
    std::vector<std::string> sweep_spec;
    auto* w = app.add_subcommand("sweep", "run the pipeline over a grid, one CSV row per point");
    w->add_option("--sweep", sweep_spec, "AXIS VALUES, e.g. latent-dim 12,25,50 or shots 0,2,5,10 or sideinfo 0:0,50:50")
        ->expected(2)
        ->required();
    w->add_option("--data", sw.data, ".gzc dataset")->required();
    w->add_option("--config", sw.config, "key=value config file");
    w->add_option("--out", sw.out, "sweep CSV (default stdout)");
    w->add_option("--dataset-name", sw.dataset_name, "dataset label (default: data file stem)");
    w->add_option("--jobs", sw.jobs, "grid points run in parallel")->capture_default_str();
    w->add_option("--unseen-ratio", sw.unseen_ratio, "samples axis: unseen draws per seen draw")->capture_default_str();
    mirror(w, "--variant", "variant", "cada, ca, da or vae");
    mirror(w, "--seed", "seed", "run seed");
    mirror(w, "--epochs", "epochs", "training epochs");
    mirror(w, "--shots", "shots", "unseen-class shots");

    std::string info_data;
    auto* i = app.add_subcommand("info", "summarize a .gzc dataset");
    i->add_option("data", info_data, ".gzc dataset")->required();

    std::vector<const char*> argv{"cadavae"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& pe) {
        const int code = app.exit(pe, out, err);
        if (code == 0) return kExitOk;
        CLI::App* failed = &app;
        for (CLI::App* sub : app.get_subcommands()) failed = sub;
        err << failed->help();
        return kExitUsage;
    }

    try {
        const Log log(err, log_level_from_env());
        auto flags_for = [&](CLI::App* sub) {
            FlagValues fv;
            for (const auto& m : mirrors)
                if (m->sub == sub && m->opt->count() > 0) fv.emplace_back(m->key, m->value);
            return fv;
        };
        if (s->parsed()) return cmd_synth(synth, log);
        if (t->parsed()) {
            tr.flags = flags_for(t);
            return cmd_train(tr, log);
        }
        if (e->parsed()) {
            ev.flags = flags_for(e);
            if (dynamic) ev.flags.emplace_back("dynamic", "true");
            return cmd_eval(ev, out, log);
        }
        if (w->parsed()) {
            sw.axis = sweep_spec.at(0);
            sw.values = sweep_spec.at(1);
            sw.flags = flags_for(w);
            return cmd_sweep(sw, out, log);
        }
        if (i->parsed()) return cmd_info(info_data, out);
        return kExitUsage;
    } catch (const ConfigError& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const FormatError& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const ContractError& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace cadavae::cli
