#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nnreg/discretization.hpp"
#include "nnreg/errors.hpp"
#include "nnreg/operators.hpp"
#include "nnreg/optimize.hpp"
#include "nnreg/regularization.hpp"
#include "nnreg/rng.hpp"

namespace nnreg {

// ---------------------------------------------------------------------------
// Exact solutions

enum class ExactKind { kernel_sum, eit_affine };

/// f(t) = sum_j phi_j (<t, l_j> + 1), or the affine conductivity x + y + p0.
/// Both are affine, f(t) = u.t + v, with Barron norm ||u||_1 + |v|.
struct ExactSolution {
    ExactKind kind = ExactKind::kernel_sum;
    int dim = 1;
    std::vector<double> nodes;         // T x dim, row-major
    std::vector<double> coefficients;  // T
    double p0 = 1.0;
    double barron_norm = 0.0;

    std::size_t terms() const { return coefficients.size(); }

    double operator()(std::span<const double> t) const {
        if (kind == ExactKind::eit_affine) return t[0] + t[1] + p0;
        double acc = 0.0;
        for (std::size_t j = 0; j < terms(); ++j) {
            double dot = 0.0;
            for (int k = 0; k < dim; ++k) dot += t[k] * nodes[j * dim + k];
            acc += coefficients[j] * (dot + 1.0);
        }
        return acc;
    }

    std::vector<double> evaluate(const Points& pts) const {
        if (pts.dim != dim) throw InputError("ExactSolution: point dimension mismatch");
        std::vector<double> out(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) out[i] = (*this)(pts.point(i));
        return out;
    }
};

/// ||sum_j phi_j l_j||_1 + |sum_j phi_j|, sums in ascending j.
inline double kernel_sum_barron_norm(int dim, std::span<const double> nodes, std::span<const double> coefficients) {
    std::vector<double> u(dim, 0.0);
    double v = 0.0;
    for (std::size_t j = 0; j < coefficients.size(); ++j) {
        for (int k = 0; k < dim; ++k) u[k] += coefficients[j] * nodes[j * dim + k];
        v += coefficients[j];
    }
    double norm = std::abs(v);
    for (double x : u) norm += std::abs(x);
    return norm;
}

inline ExactSolution make_kernel_sum(int dim, std::vector<double> nodes, std::vector<double> coefficients) {
    if (nodes.size() != coefficients.size() * static_cast<std::size_t>(dim)) {
        throw InputError("make_kernel_sum: need dim node coordinates per coefficient");
    }
    ExactSolution s;
    s.kind = ExactKind::kernel_sum;
    s.dim = dim;
    s.nodes = std::move(nodes);
    s.coefficients = std::move(coefficients);
    s.barron_norm = kernel_sum_barron_norm(dim, s.nodes, s.coefficients);
    return s;
}

/// Draws T terms; for each term the node coordinates come first, then the
/// coefficient, all uniform on [lo, hi].
inline ExactSolution generate_kernel_sum(std::size_t terms, int dim, double lo, double hi, Rng& rng) {
    std::vector<double> nodes;
    std::vector<double> coefs;
    for (std::size_t j = 0; j < terms; ++j) {
        for (int k = 0; k < dim; ++k) nodes.push_back(rng.uniform(lo, hi));
        coefs.push_back(rng.uniform(lo, hi));
    }
    return make_kernel_sum(dim, std::move(nodes), std::move(coefs));
}

inline ExactSolution make_eit_affine(double p0 = 1.0) {
    ExactSolution s;
    s.kind = ExactKind::eit_affine;
    s.dim = 2;
    s.p0 = p0;
    s.barron_norm = 2.0 + std::abs(p0);
    return s;
}

// ---------------------------------------------------------------------------
// Experiment configuration

enum class Example { fredholm, autoconv, eit };

inline std::string to_string(Example e) {
    switch (e) {
        case Example::fredholm: return "fredholm";
        case Example::autoconv: return "autoconv";
        case Example::eit: return "eit";
    }
    return "unknown";
}

inline Example parse_example(const std::string& s) {
    if (s == "fredholm") return Example::fredholm;
    if (s == "autoconv") return Example::autoconv;
    if (s == "eit") return Example::eit;
    throw InputError("unknown example '" + s + "' (expected fredholm, autoconv or eit)");
}

inline Algorithm parse_algorithm(const std::string& s) {
    if (s == "enn1") return Algorithm::enn1;
    if (s == "enn2") return Algorithm::enn2;
    if (s == "tikhonov") return Algorithm::tikhonov;
    throw InputError("unknown algorithm '" + s + "' (expected enn1, enn2 or tikhonov)");
}

inline PenaltyChoice parse_penalty(const std::string& s) {
    if (s == "h1") return PenaltyChoice::h1;
    if (s == "path_norm") return PenaltyChoice::path_norm;
    throw InputError("unknown penalty '" + s + "' (expected h1 or path_norm)");
}

inline std::string to_string(PenaltyChoice p) { return p == PenaltyChoice::h1 ? "h1" : "path_norm"; }

struct ExperimentConfig {
    Example example = Example::fredholm;
    Algorithm algorithm = Algorithm::enn1;
    std::vector<double> deltas{1e-4, 1e-3, 0.1, 0.2};
    std::vector<std::uint64_t> seeds{111, 666, 3333};
    Schedule schedule;
    PenaltyChoice penalty = PenaltyChoice::h1;
    /// Algorithm 1 uses B = energy_bound_scale * c_rho(f-dagger).
    double energy_bound_scale = 4.0;
    std::string out_dir = "runs";

    void validate() const {
        if (deltas.empty()) throw InputError("config: at least one delta is required");
        for (double d : deltas) {
            if (!(d >= 0.0)) throw InputError("config: deltas must be nonnegative");
        }
        if (seeds.empty()) throw InputError("config: at least one seed is required");
        if (!(energy_bound_scale >= 1.0)) throw InputError("config: energy_bound_scale must be >= 1");
        schedule.validate();
    }
};

/// Defaults for each example: grids, width cap, iteration budgets and seeds.
inline ExperimentConfig default_config(Example example, Algorithm algorithm) {
    ExperimentConfig c;
    c.example = example;
    c.algorithm = algorithm;
    const bool tik = algorithm == Algorithm::tikhonov;
    switch (example) {
        case Example::fredholm:
            c.seeds = {111, 666, 3333};
            c.schedule.n_max = 1000;
            c.schedule.iterations = tik ? 1200 : 600;
            break;
        case Example::autoconv:
            c.seeds = {678, 765, 987};
            c.schedule.n_max = 1000;
            c.schedule.iterations = tik ? 1200 : 600;
            break;
        case Example::eit:
            c.seeds = {20, 30, 40};
            c.schedule.n_max = 500;
            c.schedule.iterations = tik ? 2500 : 1500;
            break;
    }
    return c;
}

inline nlohmann::json to_json(const Schedule& s) {
    return {{"first_width", s.first_width}, {"width_step", s.width_step}, {"n_max", s.n_max},
            {"iterations", s.iterations},   {"learning_rate", s.learning_rate}, {"tau", s.tau},
            {"c0", s.c0},                   {"theta", s.theta},             {"c_r1", s.c_r1},
            {"eta", s.eta},                 {"sweep_past_stop", s.sweep_past_stop}};
}

inline Schedule schedule_from_json(const nlohmann::json& j) {
    Schedule s;
    s.first_width = j.at("first_width").get<std::size_t>();
    s.width_step = j.at("width_step").get<std::size_t>();
    s.n_max = j.at("n_max").get<std::size_t>();
    s.iterations = j.at("iterations").get<std::size_t>();
    s.learning_rate = j.at("learning_rate").get<double>();
    s.tau = j.at("tau").get<double>();
    s.c0 = j.at("c0").get<double>();
    s.theta = j.at("theta").get<double>();
    s.c_r1 = j.at("c_r1").get<double>();
    s.eta = j.at("eta").get<double>();
    s.sweep_past_stop = j.at("sweep_past_stop").get<bool>();
    return s;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    return {{"example", to_string(c.example)},
            {"algorithm", to_string(c.algorithm)},
            {"deltas", c.deltas},
            {"seeds", c.seeds},
            {"schedule", to_json(c.schedule)},
            {"penalty", to_string(c.penalty)},
            {"energy_bound_scale", c.energy_bound_scale},
            {"out_dir", c.out_dir}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    try {
        ExperimentConfig c;
        c.example = parse_example(j.at("example").get<std::string>());
        c.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
        c.deltas = j.at("deltas").get<std::vector<double>>();
        c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        c.schedule = schedule_from_json(j.at("schedule"));
        c.penalty = parse_penalty(j.at("penalty").get<std::string>());
        c.energy_bound_scale = j.at("energy_bound_scale").get<double>();
        c.out_dir = j.at("out_dir").get<std::string>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("config: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Problem assembly and dispatch

struct ProblemInstance {
    Example example = Example::fredholm;
    std::uint64_t seed = 0;
    ExactSolution exact;
    ForwardProblem problem;
};

inline std::shared_ptr<const ForwardOperator> make_operator(Example example) {
    switch (example) {
        case Example::fredholm: return std::make_shared<FredholmOperator>(101, 51);
        case Example::autoconv: return std::make_shared<AutoconvolutionOperator>(101);
        case Example::eit: return std::make_shared<EitOperator>(31);
    }
    throw InputError("unknown example");
}

/// Builds f-dagger, the clean data and the noisy data, drawing from `rng` in
/// that order (f-dagger terms, then one noise variate per data point).
inline ProblemInstance build_problem(Example example, double delta, Rng& rng,
                                     std::shared_ptr<const ForwardOperator> op = nullptr) {
    ProblemInstance inst;
    inst.example = example;
    switch (example) {
        case Example::fredholm: inst.exact = generate_kernel_sum(10, 1, -1.0, 1.0, rng); break;
        case Example::autoconv: inst.exact = generate_kernel_sum(5, 1, 0.0, 1.0, rng); break;
        case Example::eit: inst.exact = make_eit_affine(1.0); break;
    }
    inst.problem.op = op ? std::move(op) : make_operator(example);
    inst.problem.exact_solution = inst.exact.evaluate(inst.problem.solution_grid().nodes);
    const auto clean = inst.problem.op->apply(inst.problem.exact_solution);
    inst.problem.data.clean = clean;
    inst.problem.data.noisy = add_noise(clean, delta, rng);
    inst.problem.data.delta = delta;
    return inst;
}

/// One (delta, seed) cell: problem generation, then the configured driver,
/// all from a single generator seeded with `seed`.
inline RunRecord run_cell(const ExperimentConfig& config, double delta, std::uint64_t seed,
                          const DriverHooks& hooks = {}, ProblemInstance* instance_out = nullptr) {
    Rng rng(seed);
    ProblemInstance inst = build_problem(config.example, delta, rng);
    inst.seed = seed;
    inst.problem.data.seed = seed;
    RunRecord rec;
    switch (config.algorithm) {
        case Algorithm::enn1:
            rec = run_algorithm1(inst.problem, config.schedule, config.energy_bound_scale * inst.exact.barron_norm, rng,
                                 hooks);
            break;
        case Algorithm::enn2: rec = run_algorithm2(inst.problem, config.schedule, config.penalty, rng, hooks); break;
        case Algorithm::tikhonov: rec = run_tikhonov(inst.problem, config.schedule, rng, hooks); break;
    }
    if (instance_out) *instance_out = std::move(inst);
    return rec;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr const char* kCsvHeader = "n,misfit,rel_l2_error,path_norm,wall_ms";

inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string to_csv(const RunRecord& rec) {
    std::string out = std::string(kCsvHeader) + "\n";
    for (const auto& r : rec.rows) {
        out += std::to_string(r.n) + "," + format_double(r.misfit) + "," + format_double(r.rel_l2_error) + "," +
               format_double(r.path_norm) + "," + format_double(r.wall_ms) + "\n";
    }
    return out;
}

inline std::vector<RunRow> parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw InputError("csv: missing or unexpected header");
    std::vector<RunRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        std::vector<std::string> f;
        while (std::getline(ls, field, ',')) f.push_back(field);
        if (f.size() != 5) throw InputError("csv: expected 5 columns in '" + line + "'");
        RunRow r;
        try {
            r.n = std::stoul(f[0]);
            r.misfit = std::stod(f[1]);
            r.rel_l2_error = std::stod(f[2]);
            r.path_norm = std::stod(f[3]);
            r.wall_ms = std::stod(f[4]);
        } catch (const std::exception&) {
            throw InputError("csv: malformed number in '" + line + "'");
        }
        rows.push_back(r);
    }
    return rows;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string(), "cannot open for writing");
    out << text;
    if (!out) throw IoError(path.string(), "write failed");
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string(), "cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void emit_csv(const RunRecord& rec, const std::filesystem::path& path) { write_text(path, to_csv(rec)); }

/// Sidecar manifest for one record.
inline nlohmann::json record_manifest(const RunRecord& rec, const ExperimentConfig& config, std::uint64_t seed,
                                      const ProblemInstance& inst) {
    nlohmann::json j;
    j["config"] = to_json(config);
    j["algorithm"] = to_string(rec.algorithm);
    j["delta"] = rec.delta;
    j["seed"] = seed;
    j["tau"] = rec.tau;
    j["threshold"] = rec.tau * rec.delta;
    j["terminated_by"] = to_string(rec.terminated_by);
    j["stopping"] = rec.stopping ? nlohmann::json{{"k", rec.stopping->k}, {"n", rec.stopping->n}} : nlohmann::json();
    j["argmin_error_width"] = rec.argmin_error_width() ? nlohmann::json(*rec.argmin_error_width()) : nlohmann::json();
    j["energy_bound"] = rec.energy_bound ? nlohmann::json(*rec.energy_bound) : nlohmann::json();
    j["reinitialized_neurons"] = rec.reinitialized_neurons;
    j["prng"] = std::string(Rng::kAlgorithm);
    j["seed_pipeline"] = "exact-solution terms (nodes then coefficient, per term); one noise variate per data point; "
                         "network init (b, c, a per neuron); per-width expansion draws; projection reinit draws";
    j["operator"] = {{"kind", to_string(inst.problem.op->kind())}, {"settings", inst.problem.op->settings()}};
    j["exact_solution"] = {{"kind", inst.exact.kind == ExactKind::kernel_sum ? "kernel_sum" : "eit_affine"},
                           {"dim", inst.exact.dim},
                           {"nodes", inst.exact.nodes},
                           {"coefficients", inst.exact.coefficients},
                           {"barron_norm", inst.exact.barron_norm}};
    nlohmann::json extra = nlohmann::json::array();
    for (const auto& r : rec.rows) {
        const nlohmann::json radius = std::isfinite(r.radius) ? nlohmann::json(r.radius) : nlohmann::json("inf");
        extra.push_back({{"n", r.n},
                         {"penalty", r.penalty},
                         {"radius", radius},
                         {"coefficient", r.coefficient},
                         {"diverged", r.diverged}});
    }
    j["rows"] = extra;
    return j;
}

inline std::string cell_stem(const ExperimentConfig& c, double delta, std::uint64_t seed) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", delta);
    return to_string(c.example) + "_" + to_string(c.algorithm) + "_d" + buf + "_s" + std::to_string(seed);
}

struct CellResult {
    double delta = 0.0;
    std::uint64_t seed = 0;
    RunRecord record;
    std::filesystem::path csv_path;
    std::filesystem::path manifest_path;
};

/// Runs every (delta, seed) cell and writes <stem>.csv plus <stem>.json per
/// cell and config.json for the whole experiment into config.out_dir.
inline std::vector<CellResult> run_experiment(const ExperimentConfig& config) {
    config.validate();
    const std::filesystem::path dir(config.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError(dir.string(), "cannot create output directory");
    write_text(dir / "config.json", to_json(config).dump(2) + "\n");

    std::vector<CellResult> results;
    for (double delta : config.deltas) {
        for (std::uint64_t seed : config.seeds) {
            CellResult cell;
            cell.delta = delta;
            cell.seed = seed;
            ProblemInstance inst;
            cell.record = run_cell(config, delta, seed, {}, &inst);
            const std::string stem = cell_stem(config, delta, seed);
            cell.csv_path = dir / (stem + ".csv");
            cell.manifest_path = dir / (stem + ".json");
            emit_csv(cell.record, cell.csv_path);
            write_text(cell.manifest_path, record_manifest(cell.record, config, seed, inst).dump(2) + "\n");
            results.push_back(std::move(cell));
        }
    }
    return results;
}

}  // namespace nnreg
