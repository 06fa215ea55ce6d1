#include "lyapframe/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "lyapframe/errors.hpp"
#include "lyapframe/frame_flow.hpp"
#include "lyapframe/perturbation.hpp"
#include "lyapframe/reduced_system.hpp"
#include "lyapframe/spectrum.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lyapframe {

std::string to_string(ExperimentType t)
{
    switch (t) {
    case ExperimentType::spectrum: return "spectrum";
    case ExperimentType::reduced: return "reduced";
    case ExperimentType::perturb: return "perturb";
    case ExperimentType::counterexample: return "counterexample";
    case ExperimentType::diagnostics: return "diagnostics";
    }
    return "unknown";
}

std::string sha256_hex(const std::string& bytes)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256: digest failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

std::string config_hash(const json& j)
{
    return sha256_hex(j.dump());
}

namespace {

std::optional<ExperimentType> type_from_string(const std::string& s)
{
    for (auto t : {ExperimentType::spectrum, ExperimentType::reduced, ExperimentType::perturb,
                   ExperimentType::counterexample, ExperimentType::diagnostics})
        if (to_string(t) == s) return t;
    return std::nullopt;
}

// Collects errors instead of throwing, so validate can report them all.
class Checker {
public:
    std::vector<std::string> errors;

    void fail(const std::string& pointer, const std::string& msg) { errors.push_back(pointer + ": " + msg); }

    std::optional<double> number(const json& j, const std::string& key, const std::string& at, bool required,
                                 bool positive = false)
    {
        if (!j.contains(key)) {
            if (required) fail(at + "/" + key, "required");
            return std::nullopt;
        }
        if (!j[key].is_number()) {
            fail(at + "/" + key, "must be a number");
            return std::nullopt;
        }
        const double v = j[key].get<double>();
        if (positive && !(v > 0.0)) {
            fail(at + "/" + key, "must be positive");
            return std::nullopt;
        }
        return v;
    }
};

SolverConfig parse_solver(const json& j, Checker& ck)
{
    SolverConfig s = SolverConfig::frame_default();
    if (!j.is_object()) {
        ck.fail("/solver", "must be an object");
        return s;
    }
    if (j.contains("method")) {
        if (!j["method"].is_string()) {
            ck.fail("/solver/method", "must be a string");
        } else {
            try {
                s.method = method_from_string(j["method"].get<std::string>());
            } catch (const Error& e) {
                ck.fail("/solver/method", e.what());
            }
        }
    }
    for (auto [key, slot] : {std::pair<const char*, double*>{"step", &s.step},
                             {"abs_tol", &s.abs_tol},
                             {"rel_tol", &s.rel_tol},
                             {"max_step", &s.max_step},
                             {"sample_stride", &s.sample_stride},
                             {"blowup_bound", &s.blowup_bound}}) {
        if (auto v = ck.number(j, key, "/solver", false, true)) *slot = *v;
    }
    try {
        s.validate();
    } catch (const ConfigError& e) {
        ck.fail("/solver", e.what());
    }
    return s;
}

void check_experiment_params(ExperimentEntry& e, const std::string& at, Checker& ck, int dim)
{
    const json& p = e.params;
    switch (e.type) {
    case ExperimentType::spectrum:
    case ExperimentType::reduced:
        if (!p.is_object()) ck.fail(at, "parameters must be an object");
        break;
    case ExperimentType::perturb: {
        if (!p.is_array() || p.empty()) {
            ck.fail(at, "perturb needs a non-empty array of perturbations");
            break;
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            const std::string pat = at + "/" + std::to_string(i);
            const json& q = p[i];
            if (q.is_object() && q.value("kind", std::string()) == "field_difference") {
                if (!q.contains("constant") || !q["constant"].is_array() || static_cast<int>(q["constant"].size()) != dim)
                    ck.fail(pat + "/constant", "field_difference needs a constant vector of the field's dimension");
                continue;
            }
            try {
                (void)perturbation_from_json(q, 1, pat);
            } catch (const ConfigError& err) {
                // Vector-valued parameters are checked against l at run time.
                const std::string msg = err.what();
                if (msg.find("expected an array of") == std::string::npos) ck.errors.push_back(msg);
            }
        }
        break;
    }
    case ExperimentType::counterexample: {
        if (!p.is_object()) {
            ck.fail(at, "parameters must be an object");
            break;
        }
        if (auto l = ck.number(p, "lambda", at, true); l && !(*l < 0.0)) ck.fail(at + "/lambda", "must be negative");
        if (auto a = ck.number(p, "a", at, true); a && *a < 0.0) ck.fail(at + "/a", "must be non-negative");
        ck.number(p, "T", at, false, true);
        break;
    }
    case ExperimentType::diagnostics: {
        if (!p.is_object()) {
            ck.fail(at, "parameters must be an object");
            break;
        }
        if (p.contains("delta") && !(p["delta"] == 1 || p["delta"] == -1)) ck.fail(at + "/delta", "must be 1 or -1");
        if (p.contains("l") && (!p["l"].is_number_integer() || p["l"].get<int>() < 1))
            ck.fail(at + "/l", "must be a positive integer");
        ck.number(p, "eta", at, false, true);
        ck.number(p, "start", at, false, true);
        ck.number(p, "limit", at, false, true);
        if (p.contains("offsets")) {
            if (!p["offsets"].is_array() || p["offsets"].empty())
                ck.fail(at + "/offsets", "must be a non-empty array");
            else
                for (std::size_t i = 0; i < p["offsets"].size(); ++i)
                    if (!p["offsets"][i].is_number()) ck.fail(at + "/offsets/" + std::to_string(i), "must be a number");
        }
        break;
    }
    }
}

ExperimentConfig check_config(const json& j, Checker& ck)
{
    ExperimentConfig cfg;
    cfg.raw = j;
    if (!j.is_object()) {
        ck.fail("", "config must be a JSON object");
        return cfg;
    }
    static const std::set<std::string> known{"field", "x0", "frame_seed", "ell_mode", "T", "burn_in", "settle",
                                             "solver", "experiments", "output_dir"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) ck.fail("/" + key, "unknown key");

    bool have_field = false;
    if (!j.contains("field")) {
        ck.fail("/field", "required");
    } else {
        try {
            cfg.field = field_from_json(j["field"]);
            have_field = true;
        } catch (const Error& e) {
            std::string msg = e.what();
            ck.errors.push_back("/field" + (msg.rfind('/', 0) == 0 ? msg : ": " + msg));
        }
    }

    if (!j.contains("frame_seed")) {
        ck.fail("/frame_seed", "required (no unseeded randomness)");
    } else if (!j["frame_seed"].is_number_unsigned()) {
        ck.fail("/frame_seed", "must be a non-negative integer");
    } else {
        cfg.frame_seed = j["frame_seed"].get<unsigned long long>();
    }

    if (have_field) {
        cfg.x0 = cfg.field.default_x0;
        if (j.contains("x0")) {
            const json& x = j["x0"];
            if (!x.is_array() || static_cast<int>(x.size()) != cfg.field.dim) {
                ck.fail("/x0", "must be an array of " + std::to_string(cfg.field.dim) + " numbers");
            } else {
                for (int i = 0; i < cfg.field.dim; ++i) {
                    if (!x[static_cast<std::size_t>(i)].is_number())
                        ck.fail("/x0/" + std::to_string(i), "must be a number");
                    else
                        cfg.x0(i) = x[static_cast<std::size_t>(i)].get<double>();
                }
            }
        }
    }

    if (auto t = ck.number(j, "T", "", false, true)) cfg.duration = *t;
    if (j.contains("burn_in")) {
        if (auto b = ck.number(j, "burn_in", "", false)) {
            if (*b < 0.0 || *b >= cfg.duration)
                ck.fail("/burn_in", "must satisfy 0 <= burn_in < T");
            else
                cfg.burn_in = *b;
        }
    }
    if (auto s = ck.number(j, "settle", "", false)) {
        if (*s < 0.0) ck.fail("/settle", "must be non-negative");
        else cfg.settle = *s;
    }
    if (j.contains("solver")) cfg.solver = parse_solver(j["solver"], ck);

    if (j.contains("ell_mode")) {
        const json& m = j["ell_mode"];
        if (!m.is_object() || !m.contains("mode") || !m["mode"].is_string()) {
            ck.fail("/ell_mode/mode", "must be \"auto\" or \"explicit\"");
        } else if (m["mode"] == "auto") {
            if (auto e = ck.number(m, "epsilon_zero", "/ell_mode", false, true)) cfg.epsilon_zero = *e;
        } else if (m["mode"] == "explicit") {
            cfg.auto_ell = false;
            if (!m.contains("indices") || !m["indices"].is_array() || m["indices"].empty()) {
                ck.fail("/ell_mode/indices", "explicit mode needs a non-empty index array");
            } else {
                std::set<int> seen;
                for (std::size_t i = 0; i < m["indices"].size(); ++i) {
                    const std::string at = "/ell_mode/indices/" + std::to_string(i);
                    const json& v = m["indices"][i];
                    if (!v.is_number_integer()) {
                        ck.fail(at, "must be an integer");
                        continue;
                    }
                    const int idx = v.get<int>();
                    if (idx < 0 || (have_field && idx >= cfg.field.dim))
                        ck.fail(at, "index " + std::to_string(idx) + " out of range");
                    else if (!seen.insert(idx).second)
                        ck.fail(at, "duplicate index " + std::to_string(idx));
                    cfg.indices.push_back(idx);
                }
            }
        } else {
            ck.fail("/ell_mode/mode", "must be \"auto\" or \"explicit\"");
        }
    }

    if (!j.contains("experiments") || !j["experiments"].is_array() || j["experiments"].empty()) {
        ck.fail("/experiments", "non-empty array required");
    } else {
        std::map<std::string, int> counts;
        for (std::size_t i = 0; i < j["experiments"].size(); ++i) {
            const std::string at = "/experiments/" + std::to_string(i);
            const json& e = j["experiments"][i];
            ExperimentEntry entry;
            std::string name;
            if (e.is_string()) {
                name = e.get<std::string>();
            } else if (e.is_object() && e.size() == 1) {
                name = e.begin().key();
                entry.params = e.begin().value();
            } else {
                ck.fail(at, "must be a name or a single-key object");
                continue;
            }
            const auto type = type_from_string(name);
            if (!type) {
                ck.fail(at, "unknown experiment '" + name + "'");
                continue;
            }
            entry.type = *type;
            if (entry.type == ExperimentType::perturb && e.is_string()) {
                ck.fail(at, "perturb needs a list of perturbations");
                continue;
            }
            const int n = counts[name]++;
            entry.key = n == 0 ? name : name + "_" + std::to_string(n);
            check_experiment_params(entry, at + (e.is_object() ? "/" + name : ""), ck, have_field ? cfg.field.dim : 0);
            cfg.experiments.push_back(std::move(entry));
        }
    }

    if (j.contains("output_dir")) {
        if (!j["output_dir"].is_string()) ck.fail("/output_dir", "must be a string");
        else cfg.output_dir = j["output_dir"].get<std::string>();
    }
    return cfg;
}

std::vector<double> to_std(const Vec& v)
{
    return {v.data(), v.data() + v.size()};
}

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Shared pipeline stages, computed once before experiments fan out.
struct Pipeline {
    std::optional<FrameRun> forward;
    std::optional<ExponentEstimate> spectrum;
    std::optional<FrameRun> ascending;
    std::vector<int> rows;      // ascending-frame indices of the reduced system
    Vec targets;                // nonzero exponents, ascending
    std::optional<ReducedSystemTape> reduced;
    std::vector<std::string> warnings;
};

class ArtifactWriter {
public:
    ArtifactWriter(fs::path dir, std::string hash) : dir_(std::move(dir)), hash_(std::move(hash)) {}

    void write_json(const std::string& name, json body)
    {
        body["config_hash"] = hash_;
        write_raw(name, body.dump(2) + "\n");
    }

    /// CSV plus a sidecar `<stem>.header.json` carrying the config hash.
    void write_csv(const std::string& name, const std::string& content, json header)
    {
        write_raw(name, content);
        header["file"] = name;
        const std::string stem = name.substr(0, name.rfind('.'));
        write_json(stem + ".header.json", std::move(header));
    }

    std::vector<ArtifactRecord> records() const
    {
        std::lock_guard lock(mu_);
        auto out = records_;
        std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
        return out;
    }

private:
    void write_raw(const std::string& name, const std::string& content)
    {
        std::lock_guard lock(mu_);
        std::ofstream os(dir_ / name, std::ios::binary | std::ios::trunc);
        if (!os) throw Error("cannot write " + (dir_ / name).string());
        os << content;
        if (!os) throw Error("write failed for " + (dir_ / name).string());
        records_.push_back({name, sha256_hex(content), content.size()});
    }

    fs::path dir_;
    std::string hash_;
    mutable std::mutex mu_;
    std::vector<ArtifactRecord> records_;
};

void run_spectrum(const ExperimentConfig& cfg, const Pipeline& pl, const ExperimentEntry& e, ArtifactWriter& out)
{
    json j = to_json(*pl.spectrum);
    j["field"] = cfg.field.name;
    j["x0"] = to_std(cfg.x0);
    j["frame_seed"] = cfg.frame_seed;
    out.write_json(e.key + ".json", j);
}

void run_reduced(const ExperimentConfig& cfg, const Pipeline& pl, const ExperimentEntry& e, ArtifactWriter& out)
{
    const auto& sys = *pl.reduced;
    const Vec got = exponents_of_reduced(sys, cfg.duration);
    std::ostringstream csv;
    write_reduced_csv(csv, sys);
    json header = reduced_header_json(sys);
    out.write_csv(e.key + "_system.csv", csv.str(), header);

    json j;
    j["rows"] = pl.rows;
    j["exponents_of_reduced"] = to_std(got);
    j["spectrum_nonzero"] = to_std(pl.targets);
    j["max_abs_difference"] = pl.targets.size() == got.size() ? (got - pl.targets).cwiseAbs().maxCoeff() : -1.0;
    j["entry_bound"] = pl.ascending->tape.entry_bound();
    j["max_abs_entry"] = sys.max_abs_entry();
    j["provenance"] = to_json(sys.source);
    j["warnings"] = pl.warnings;
    out.write_json(e.key + ".json", j);
}

void run_perturb(const ExperimentConfig& cfg, const Pipeline& pl, const ExperimentEntry& e, ArtifactWriter& out)
{
    const auto& sys = *pl.reduced;
    const int l = sys.dim();
    json all = json::array();
    for (std::size_t i = 0; i < e.params.size(); ++i) {
        const json& p = e.params[i];
        const std::string at = "/perturb/" + std::to_string(i);
        PerturbationSpec f;
        if (p.value("kind", std::string()) == "field_difference") {
            Vec c(cfg.field.dim);
            for (int k = 0; k < cfg.field.dim; ++k) c(k) = p["constant"][static_cast<std::size_t>(k)].get<double>();
            f = build_reduced_perturbation(cfg.field, add_constant(cfg.field, c), *pl.ascending, pl.rows);
        } else {
            f = perturbation_from_json(p, l, at);
        }
        SearchConfig search;
        search.seed = cfg.frame_seed;
        search.search_lower = p.value("search_lower", true);
        search.tol = p.value("tol", 0.05);
        const double horizon = p.value("T", cfg.duration);
        all.push_back(persistence_experiment(sys, f, pl.targets, horizon, cfg.solver, search).to_json());
    }
    out.write_json(e.key + ".json", {{"reports", all}});
}

void run_counterexample(const ExperimentConfig& cfg, const ExperimentEntry& e, ArtifactWriter& out)
{
    const double lambda = e.params["lambda"].get<double>();
    const double a = e.params["a"].get<double>();
    const double horizon = e.params.value("T", 200.0);
    const auto rep = counterexample_run(lambda, a, horizon, cfg.solver);
    std::ostringstream csv;
    write_counterexample_csv(csv, rep);
    out.write_csv(e.key + ".csv", csv.str(), {{"columns", {"t", "y1", "y2", "log_norm_over_t"}}, {"lambda", lambda},
                                              {"a", a}, {"T", horizon}});
    out.write_json(e.key + ".json", rep.to_json());
}

void run_diagnostics(const ExperimentConfig&, const Pipeline& pl, const ExperimentEntry& e, ArtifactWriter& out)
{
    const auto& p = e.params;
    const int delta = p.value("delta", 1);
    const int l = p.value("l", 4);
    const double eta = p.value("eta", 0.05);
    const double start = p.value("start", 1.0);
    const double limit = p.value("limit", 1024.0);
    const auto offsets = p.contains("offsets") ? p["offsets"].get<std::vector<double>>() : default_offsets();
    const auto& tape = pl.forward->tape;
    // Forward frame direction k tracks the k-th largest exponent.
    const Vec targets = pl.spectrum->values;

    const auto res = find_window_threshold(tape, targets, delta, offsets, l, eta, start, limit);
    json trail = json::array();
    for (const auto& [w, worst] : res.trail) trail.push_back({w, worst});
    json j = {{"found", res.found}, {"T_star", res.found ? json(res.window) : json(nullptr)},
              {"stop_reason", res.stop_reason}, {"trail", trail}, {"delta", delta}, {"l", l},
              {"eta", eta}, {"offsets", offsets}, {"targets", to_std(targets)}};
    if (!res.trail.empty()) {
        const double w = res.found ? res.window : res.trail.back().first;
        const auto stats = window_deviation_stats(tape, targets, w, delta, offsets, l, eta);
        std::ostringstream csv;
        write_window_stats_csv(csv, stats);
        out.write_csv(e.key + "_windows.csv", csv.str(), {{"window", w}, {"offsets", offsets}, {"l", l}});
    }
    out.write_json(e.key + ".json", j);
}

bool needs(const ExperimentConfig& cfg, std::initializer_list<ExperimentType> types)
{
    for (const auto& e : cfg.experiments)
        for (auto t : types)
            if (e.type == t) return true;
    return false;
}

} // namespace

std::vector<std::string> validate_config(const json& j)
{
    Checker ck;
    (void)check_config(j, ck);
    return ck.errors;
}

ExperimentConfig parse_config(const json& j)
{
    Checker ck;
    auto cfg = check_config(j, ck);
    if (!ck.errors.empty()) {
        std::string msg = "invalid config:";
        for (const auto& e : ck.errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return cfg;
}

json RunManifest::to_json() const
{
    json arts = json::array();
    for (const auto& a : artifacts) arts.push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
    json times = json::object();
    for (const auto& [k, v] : timings) times[k] = v;
    json fails = json::object();
    for (const auto& [k, v] : failures) fails[k] = v;
    return {{"config_hash", config_hash}, {"version", version}, {"artifacts", arts}, {"timings_seconds", times},
            {"failures", fails}};
}

RunManifest run_experiments(const ExperimentConfig& cfg, const RunOptions& opts)
{
    const fs::path dir = !opts.output_dir.empty() ? fs::path(opts.output_dir)
                         : !cfg.output_dir.empty() ? fs::path(cfg.output_dir)
                                                   : fs::path("lyapframe_out");
    fs::create_directories(dir);

    RunManifest manifest;
    manifest.config_hash = config_hash(cfg.raw);
    ArtifactWriter out(dir, manifest.config_hash);
    Pipeline pl;
    std::optional<std::string> stage_error;

    const int n = cfg.field.dim;
    const double burn = cfg.burn_in >= 0.0 ? cfg.burn_in : 0.1 * cfg.duration;
    try {
        if (needs(cfg, {ExperimentType::spectrum, ExperimentType::reduced, ExperimentType::perturb,
                        ExperimentType::diagnostics})) {
            const auto t0 = std::chrono::steady_clock::now();
            pl.forward = evolve_frame(cfg.field, cfg.x0, random_orthonormal_frame(n, n, cfg.frame_seed),
                                      cfg.duration, cfg.solver);
            pl.spectrum = estimate_from_run(*pl.forward, burn);
            if (cfg.epsilon_zero > 0.0) {
                pl.spectrum->epsilon_zero = cfg.epsilon_zero;
                for (Eigen::Index i = 0; i < pl.spectrum->values.size(); ++i)
                    pl.spectrum->is_zero[static_cast<std::size_t>(i)] =
                        std::abs(pl.spectrum->values(i)) <= cfg.epsilon_zero;
            }
            if (!doubling_converged(*pl.spectrum))
                pl.spectrum->warnings.push_back("doubling checkpoints are not monotonically converging");
            manifest.timings.emplace_back("stage:spectrum", seconds_since(t0));
        }
        if (needs(cfg, {ExperimentType::reduced, ExperimentType::perturb})) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto& est = *pl.spectrum;
            if (cfg.auto_ell) {
                const auto cls = classify_zero(est, est.epsilon_zero);
                pl.warnings = cls.warnings;
                for (int pos : cls.selected) pl.rows.push_back(n - 1 - pos);
                std::sort(pl.rows.begin(), pl.rows.end());
            } else {
                pl.rows = cfg.indices;
                std::sort(pl.rows.begin(), pl.rows.end());
            }
            if (pl.rows.empty()) throw ConvergenceError("no nonzero exponents to reduce to");
            pl.targets.resize(static_cast<Eigen::Index>(pl.rows.size()));
            for (std::size_t p = 0; p < pl.rows.size(); ++p)
                pl.targets(static_cast<Eigen::Index>(p)) = est.values(n - 1 - pl.rows[p]);
            const double settle = cfg.settle >= 0.0 ? cfg.settle : std::max(10.0, 0.1 * cfg.duration);
            pl.ascending = evolve_frame_ascending(cfg.field, cfg.x0, random_orthonormal_frame(n, n, cfg.frame_seed),
                                                  cfg.duration, settle, cfg.solver);
            Provenance prov;
            prov.field = cfg.field.name;
            prov.x0 = cfg.x0;
            prov.frame_seed = cfg.frame_seed;
            prov.frame_order = to_string(pl.ascending->order);
            pl.reduced = build_reduced_system(pl.ascending->tape, pl.rows, prov);
            manifest.timings.emplace_back("stage:reduced_system", seconds_since(t0));
        }
    } catch (const std::exception& e) {
        stage_error = e.what();
    }

    std::mutex result_mu;
    std::vector<std::pair<std::string, double>> timings;
    std::vector<std::pair<std::string, std::string>> failures;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cfg.experiments.size(); i = next++) {
            const auto& e = cfg.experiments[i];
            const auto t0 = std::chrono::steady_clock::now();
            try {
                const bool shared = e.type != ExperimentType::counterexample;
                if (shared && stage_error) throw Error("shared pipeline stage failed: " + *stage_error);
                switch (e.type) {
                case ExperimentType::spectrum: run_spectrum(cfg, pl, e, out); break;
                case ExperimentType::reduced: run_reduced(cfg, pl, e, out); break;
                case ExperimentType::perturb: run_perturb(cfg, pl, e, out); break;
                case ExperimentType::counterexample: run_counterexample(cfg, e, out); break;
                case ExperimentType::diagnostics: run_diagnostics(cfg, pl, e, out); break;
                }
            } catch (const std::exception& ex) {
                std::lock_guard lock(result_mu);
                failures.emplace_back(e.key, ex.what());
            }
            std::lock_guard lock(result_mu);
            timings.emplace_back(e.key, seconds_since(t0));
        }
    };
    const int threads = std::clamp(opts.threads, 1, std::max(1, static_cast<int>(cfg.experiments.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    std::sort(timings.begin(), timings.end());
    std::sort(failures.begin(), failures.end());
    manifest.timings.insert(manifest.timings.end(), timings.begin(), timings.end());
    manifest.failures = std::move(failures);
    manifest.artifacts = out.records();

    std::ofstream os(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    os << manifest.to_json().dump(2) << "\n";
    if (!os) throw Error("cannot write manifest.json");
    return manifest;
}

namespace {

std::optional<json> load_json(const std::string& path, std::ostream& log)
{
    std::ifstream is(path);
    if (!is) {
        log << "error: cannot open " << path << "\n";
        return std::nullopt;
    }
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        log << "error: " << path << ": " << e.what() << "\n";
        return std::nullopt;
    }
}

} // namespace

int run_command(const std::string& config_path, const RunOptions& opts, std::ostream& log)
{
    const auto j = load_json(config_path, log);
    if (!j) return exit_config;
    const auto errors = validate_config(*j);
    if (!errors.empty()) {
        for (const auto& e : errors) log << "error: " << e << "\n";
        return exit_config;
    }
    RunManifest manifest;
    try {
        manifest = run_experiments(parse_config(*j), opts);
    } catch (const ConfigError& e) {
        log << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return exit_partial;
    }
    for (const auto& a : manifest.artifacts) log << "wrote " << a.path << "\n";
    for (const auto& [key, msg] : manifest.failures) log << "failed " << key << ": " << msg << "\n";
    return manifest.failures.empty() ? exit_ok : exit_partial;
}

int validate_command(const std::string& config_path, std::ostream& log)
{
    const auto j = load_json(config_path, log);
    if (!j) return exit_config;
    const auto errors = validate_config(*j);
    for (const auto& e : errors) log << "error: " << e << "\n";
    if (errors.empty()) log << "ok\n";
    return errors.empty() ? exit_ok : exit_config;
}

} // namespace lyapframe
