// Command-line front end: run-da | run-toy | verify | sweep.
// Exit codes: 0 ok, 1 verification failure, 2 config/schema error,
// 3 numeric abort (with the failing step index on stderr).

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "paretoda/rng.hpp"
#include "paretoda/scenarios.hpp"
#include "paretoda/trainer.hpp"
#include "paretoda/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace paretoda;

namespace {

constexpr const char* kVersion = "paretoda 0.1.0";

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string digest_string(const std::string& bytes) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes)));
    return buf;
}

std::string iso8601_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---- config loading ---------------------------------------------------

struct RunSpec {
    TrainConfig train;
    std::string scenario_kind;
    int n_per_domain = 500;
    double rotation_degrees = 30.0;
    double noise_sd = 0.1;
    double heldout_fraction = 0.1;
    int gaussian_classes = 3;
    double mean_shift = 1.5;
    double covariance_scale = 1.0;
    ordered_json echo;
};

template <typename T>
T field_as(const json& j, const std::string& path, const json& node);

template <>
double field_as<double>(const json&, const std::string& path, const json& node) {
    if (!node.is_number()) throw ConfigError(path + ": expected a number");
    return node.get<double>();
}

template <>
int field_as<int>(const json&, const std::string& path, const json& node) {
    if (!node.is_number_integer()) throw ConfigError(path + ": expected an integer");
    return node.get<int>();
}

template <>
bool field_as<bool>(const json&, const std::string& path, const json& node) {
    if (!node.is_boolean()) throw ConfigError(path + ": expected a boolean");
    return node.get<bool>();
}

template <>
std::string field_as<std::string>(const json&, const std::string& path, const json& node) {
    if (!node.is_string()) throw ConfigError(path + ": expected a string");
    return node.get<std::string>();
}

template <typename T>
void load_field(const json& j, const std::string& path, T& into, bool required = false) {
    json node = j;
    std::string key = path;
    const auto dot = path.find('.');
    if (dot != std::string::npos) {
        const std::string head = path.substr(0, dot);
        if (!j.contains(head)) {
            if (required) throw ConfigError(path + ": missing required field");
            return;
        }
        node = j.at(head);
        key = path.substr(dot + 1);
    }
    if (!node.contains(key)) {
        if (required) throw ConfigError(path + ": missing required field");
        return;
    }
    into = field_as<T>(j, path, node.at(key));
}

RunSpec parse_run_config(const json& j) {
    RunSpec spec;
    int schema = 0;
    load_field(j, "schema_version", schema, true);
    if (schema != 1) throw ConfigError("schema_version: unsupported value");

    std::string method;
    load_field(j, "method", method, true);
    try {
        spec.train.method = parse_method(method);
    } catch (const std::exception&) {
        throw ConfigError("method: must be one of paretoda|linear|mean|mgda");
    }

    int seed = 0;
    load_field(j, "seed", seed);
    spec.train.seed = static_cast<std::uint64_t>(seed);
    load_field(j, "steps", spec.train.steps);
    load_field(j, "eta", spec.train.eta);
    load_field(j, "batch_size", spec.train.batch_size);
    load_field(j, "epsilon", spec.train.epsilon);
    load_field(j, "beta_soft_label", spec.train.beta_soft_label);
    load_field(j, "ema_decay", spec.train.ema_decay);
    load_field(j, "eval_every", spec.train.eval_every);
    load_field(j, "bayes_refinement", spec.train.bayes_refinement);
    load_field(j, "warmup_steps", spec.train.warmup_steps);

    if (j.contains("scale_factors")) {
        const auto& sf = j.at("scale_factors");
        if (!sf.is_array() || sf.size() != 2 || !sf[0].is_number() || !sf[1].is_number())
            throw ConfigError("scale_factors: expected [lambda0, lambda1]");
        spec.train.lambda0 = sf[0].get<double>();
        spec.train.lambda1 = sf[1].get<double>();
    }
    if (j.contains("linear_weights")) {
        const auto& lw = j.at("linear_weights");
        if (!lw.is_array() || lw.size() != 3) throw ConfigError("linear_weights: expected 3 reals");
        spec.train.linear_weights.resize(3);
        for (int i = 0; i < 3; ++i) {
            if (!lw[i].is_number()) throw ConfigError("linear_weights: expected 3 reals");
            spec.train.linear_weights(i) = lw[i].get<double>();
        }
    }
    if (j.contains("alignment")) {
        std::string a;
        load_field(j, "alignment", a);
        try {
            spec.train.alignment = parse_alignment(a);
        } catch (const std::exception&) {
            throw ConfigError("alignment: must be adversarial|mmd");
        }
    }
    if (j.contains("marginal")) {
        std::string m;
        load_field(j, "marginal", m);
        if (m == "ema") spec.train.marginal = MarginalMode::Ema;
        else if (m == "batch") spec.train.marginal = MarginalMode::BatchMean;
        else throw ConfigError("marginal: must be ema|batch");
    }
    auto load_layers = [&](const char* key, std::vector<int>& into) {
        if (!j.contains("arch") || !j.at("arch").contains(key)) return;
        const auto& node = j.at("arch").at(key);
        if (!node.is_array()) throw ConfigError(std::string("arch.") + key + ": expected an array");
        into.clear();
        for (const auto& v : node) {
            if (!v.is_number_integer() || v.get<int>() <= 0)
                throw ConfigError(std::string("arch.") + key + ": widths must be positive integers");
            into.push_back(v.get<int>());
        }
    };
    load_layers("feature_hidden", spec.train.arch.feature_hidden);
    load_layers("classifier_hidden", spec.train.arch.classifier_hidden);
    load_layers("disc_hidden", spec.train.arch.disc_hidden);
    if (j.contains("mmd_bandwidths")) {
        const auto& bw = j.at("mmd_bandwidths");
        if (!bw.is_array() || bw.empty()) throw ConfigError("mmd_bandwidths: expected an array");
        spec.train.mmd_bandwidths.clear();
        for (const auto& v : bw) {
            if (!v.is_number() || v.get<double>() <= 0.0)
                throw ConfigError("mmd_bandwidths: bandwidths must be positive");
            spec.train.mmd_bandwidths.push_back(v.get<double>());
        }
    }

    if (!j.contains("scenario")) throw ConfigError("scenario: missing required field");
    load_field(j, "scenario.kind", spec.scenario_kind, true);
    if (spec.scenario_kind != "two_moons" && spec.scenario_kind != "gaussian_shift")
        throw ConfigError("scenario.kind: must be two_moons|gaussian_shift");
    load_field(j, "scenario.n_per_domain", spec.n_per_domain);
    load_field(j, "scenario.rotation_degrees", spec.rotation_degrees);
    load_field(j, "scenario.noise_sd", spec.noise_sd);
    load_field(j, "scenario.heldout_fraction", spec.heldout_fraction);
    load_field(j, "scenario.num_classes", spec.gaussian_classes);
    load_field(j, "scenario.mean_shift", spec.mean_shift);
    load_field(j, "scenario.covariance_scale", spec.covariance_scale);

    try {
        spec.train.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    spec.echo = ordered_json::parse(j.dump());
    return spec;
}

DaScenario build_scenario(const RunSpec& spec) {
    if (spec.scenario_kind == "two_moons")
        return make_two_moons_shift(spec.n_per_domain, spec.rotation_degrees, spec.noise_sd,
                                    spec.heldout_fraction, spec.train.seed);
    return make_gaussian_shift(spec.n_per_domain, spec.gaussian_classes, spec.mean_shift,
                               spec.covariance_scale, spec.heldout_fraction, spec.train.seed);
}

// ---- writers -----------------------------------------------------------

struct OutputInventory {
    std::vector<std::pair<std::string, std::string>> entries;  // path -> digest
    std::vector<std::size_t> sizes;

    void write_file(const fs::path& dir, const std::string& name, const std::string& bytes) {
        fs::create_directories(dir);
        std::ofstream out(dir / name, std::ios::binary);
        out << bytes;
        out.close();
        entries.emplace_back(name, digest_string(bytes));
        sizes.push_back(bytes.size());
    }
};

std::string trace_to_jsonl(const std::vector<StepTrace>& trace) {
    std::string out;
    for (const auto& row : trace) {
        ordered_json line;
        line["step"] = row.step;
        line["l_s"] = row.l_s;
        line["l_d"] = row.l_d;
        line["l_t"] = row.l_t;
        line["l_val_shifted"] = row.l_val_shifted;
        line["w"] = std::vector<double>(row.w_star.data(), row.w_star.data() + row.w_star.size());
        line["gamma"] = row.gamma_star;
        line["mode"] = to_string(row.mode);
        line["slacks"] = std::vector<double>(row.slacks.data(), row.slacks.data() + row.slacks.size());
        line["d_norm"] = row.d_norm;
        line["acc_raw"] = row.acc_raw;
        line["acc_refined"] = row.acc_refined;
        line["fallback"] = to_string(row.fallback);
        out += line.dump();
        out += '\n';
    }
    return out;
}

std::string manifest_json(const ordered_json& config_echo, std::uint64_t seed,
                          const std::string& started, const std::string& finished,
                          const OutputInventory& inv) {
    ordered_json m;
    m["version"] = kVersion;
    m["seed"] = seed;
    m["started_at"] = started;
    m["finished_at"] = finished;
    m["config"] = config_echo;
    ordered_json files = ordered_json::array();
    for (std::size_t i = 0; i < inv.entries.size(); ++i) {
        ordered_json f;
        f["path"] = inv.entries[i].first;
        f["bytes"] = inv.sizes[i];
        f["digest"] = inv.entries[i].second;
        files.push_back(f);
    }
    m["outputs"] = files;
    return m.dump(2) + "\n";
}

std::string csv_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// ---- subcommands -------------------------------------------------------

int cmd_run_da(const std::string& config_path, const fs::path& out_dir, int seed_override,
               int steps_override) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("config: cannot open " + config_path);
    json j;
    try {
        j = json::parse(in);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (seed_override >= 0) j["seed"] = seed_override;
    if (steps_override >= 0) j["steps"] = steps_override;
    RunSpec spec = parse_run_config(j);

    const std::string started = iso8601_now();
    const DaScenario scenario = build_scenario(spec);
    TrainResult result;
    try {
        result = train_da(spec.train, scenario);
    } catch (const TrainAbort& abort) {
        std::cerr << "numeric abort: " << abort.what() << "\n";
        return 3;
    }

    OutputInventory inv;
    inv.write_file(out_dir, "trace.jsonl", trace_to_jsonl(result.trace));

    const double acc_raw = evaluate_target_accuracy(result.model, scenario,
                                                    AccuracyKind::RawClassifier);
    const double acc_ref = evaluate_target_accuracy(result.model, scenario,
                                                    AccuracyKind::BayesRefined);
    std::string summary =
        "method,seed,steps,final_l_s,final_l_d,final_l_t,final_l_val_shifted,acc_raw,acc_refined\n";
    const StepTrace last = result.trace.empty() ? StepTrace{} : result.trace.back();
    summary += std::string(to_string(spec.train.method)) + "," + std::to_string(spec.train.seed) +
               "," + std::to_string(spec.train.steps) + "," + csv_number(last.l_s) + "," +
               csv_number(last.l_d) + "," + csv_number(last.l_t) + "," +
               csv_number(last.l_val_shifted) + "," + csv_number(acc_raw) + "," +
               csv_number(acc_ref) + "\n";
    inv.write_file(out_dir, "summary.csv", summary);

    inv.write_file(out_dir, "manifest.json",
                   manifest_json(spec.echo, spec.train.seed, started, iso8601_now(), inv));

    if (result.theorem1_violations > 0) {
        std::cerr << "invariant violation: " << result.theorem1_violations
                  << " direction-solver steps failed the descent check\n";
        return 1;
    }
    std::cout << "run-da: " << result.trace.size() << " steps, acc_raw=" << acc_raw
              << ", acc_refined=" << acc_ref << ", outputs in " << out_dir.string() << "\n";
    return 0;
}

int cmd_run_toy(const fs::path& out_dir, const std::vector<std::string>& methods, int seeds,
                int base_seed, int steps, double eta, int dim, int front_samples) {
    const ToyProblem problem = toy_nonconvex(dim);
    const FrontSample front = toy_front_samples(problem, front_samples);

    OutputInventory inv;
    {
        std::string csv = "t,L1,L2\n";
        for (std::size_t i = 0; i < front.points.size(); ++i)
            csv += csv_number(front.arcs[i]) + "," + csv_number(front.points[i](0)) + "," +
                   csv_number(front.points[i](1)) + "\n";
        inv.write_file(out_dir, "front.csv", csv);
    }

    std::string summary = "method,seed,final_L1,final_L2,front_distance,arc_position\n";
    struct Stat { double abs_arc_sum = 0; double worst_front = 0; int n = 0; };
    std::map<std::string, Stat> stats;

    for (const auto& method_name : methods) {
        const Method method = parse_method(method_name);
        for (int s = 0; s < seeds; ++s) {
            const std::uint64_t run_seed = seed_path(static_cast<std::uint64_t>(base_seed), 40, s);
            Rng rng(run_seed);
            Vec theta0(dim);
            for (int i = 0; i < dim; ++i) theta0(i) = rng.uniform(-0.5, 0.5);

            ToyRunConfig cfg;
            cfg.method = method;
            cfg.eta = eta;
            cfg.steps = steps;
            if (method == Method::Linear) {
                const double lam = seeds > 1 ? 0.1 + 0.8 * s / (seeds - 1) : 0.5;
                cfg.linear_weights = Vec(2);
                cfg.linear_weights << lam, 1.0 - lam;
            }
            if (method == Method::Paretoda) {
                cfg.guidance = ToyGuidance::ObjectiveIndex;
                cfg.guidance_index = s % 2;
            }
            const ToyRunResult run = train_toy(problem, theta0, cfg);

            std::string csv = "step,L1,L2\n";
            for (std::size_t i = 0; i < run.path.size(); ++i)
                csv += std::to_string(i) + "," + csv_number(run.path[i](0)) + "," +
                       csv_number(run.path[i](1)) + "\n";
            inv.write_file(out_dir, "path_" + method_name + "_seed" + std::to_string(s) + ".csv",
                           csv);

            const LossPoint final_point = run.path.back();
            double best = std::numeric_limits<double>::infinity();
            double arc = 0.0;
            for (std::size_t i = 0; i < front.points.size(); ++i) {
                const double dist = (front.points[i] - final_point).norm();
                if (dist < best) {
                    best = dist;
                    arc = front.arcs[i];
                }
            }
            summary += method_name + "," + std::to_string(s) + "," + csv_number(final_point(0)) +
                       "," + csv_number(final_point(1)) + "," + csv_number(best) + "," +
                       csv_number(arc) + "\n";
            auto& st = stats[method_name];
            st.abs_arc_sum += std::abs(arc);
            st.worst_front = std::max(st.worst_front, best);
            ++st.n;
        }
    }
    inv.write_file(out_dir, "toy_summary.csv", summary);

    std::string stat_csv = "method,mean_abs_arc_position,max_front_distance\n";
    for (const auto& [name, st] : stats)
        stat_csv += name + "," + csv_number(st.abs_arc_sum / std::max(st.n, 1)) + "," +
                    csv_number(st.worst_front) + "\n";
    inv.write_file(out_dir, "toy_method_stats.csv", stat_csv);

    ordered_json echo;
    echo["command"] = "run-toy";
    echo["methods"] = methods;
    echo["seeds"] = seeds;
    echo["steps"] = steps;
    echo["dim"] = dim;
    const std::string now = iso8601_now();
    inv.write_file(out_dir, "manifest.json",
                   manifest_json(echo, static_cast<std::uint64_t>(base_seed), now, now, inv));
    std::cout << "run-toy: wrote " << inv.entries.size() << " files to " << out_dir.string()
              << "\n";
    return 0;
}

int cmd_verify(int instances, std::uint64_t seed) {
    const auto results = run_verification_suite(instances, seed);
    bool all_pass = true;
    std::printf("%-40s %10s %14s %8s\n", "property", "instances", "worst", "status");
    for (const auto& r : results) {
        std::printf("%-40s %10d %14.3e %8s\n", r.name.c_str(), r.checked, r.worst,
                    r.pass ? "PASS" : "FAIL");
        if (!r.pass) {
            all_pass = false;
            std::printf("    %s\n", r.detail.c_str());
        }
    }
    return all_pass ? 0 : 1;
}

int cmd_sweep(const std::string& config_path, const fs::path& out_dir,
              const std::vector<double>& scales, int seeds) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("config: cannot open " + config_path);
    json base;
    try {
        base = json::parse(in);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }

    OutputInventory inv;
    std::string grid = "method,seed,lambda0,lambda1,acc_raw,acc_refined\n";
    std::map<std::string, std::vector<double>> per_method_stds;

    for (const std::string method : {"paretoda", "linear"}) {
        for (int s = 0; s < seeds; ++s) {
            std::vector<double> cell_accs;
            for (double l0 : scales) {
                for (double l1 : scales) {
                    json j = base;
                    j["method"] = method;
                    j["seed"] = s;
                    j["scale_factors"] = {l0, l1};
                    RunSpec spec = parse_run_config(j);
                    const DaScenario scenario = build_scenario(spec);
                    const TrainResult run = train_da(spec.train, scenario);
                    const double acc_raw = evaluate_target_accuracy(
                        run.model, scenario, AccuracyKind::RawClassifier);
                    const double acc_ref = evaluate_target_accuracy(
                        run.model, scenario, AccuracyKind::BayesRefined);
                    grid += method + "," + std::to_string(s) + "," + csv_number(l0) + "," +
                            csv_number(l1) + "," + csv_number(acc_raw) + "," +
                            csv_number(acc_ref) + "\n";
                    cell_accs.push_back(acc_raw);
                }
            }
            double mean = 0.0;
            for (double a : cell_accs) mean += a;
            mean /= cell_accs.size();
            double var = 0.0;
            for (double a : cell_accs) var += (a - mean) * (a - mean);
            var /= cell_accs.size();
            per_method_stds[method].push_back(std::sqrt(var));
        }
    }
    inv.write_file(out_dir, "grid.csv", grid);

    std::string stds = "method,seed,std_across_grid\n";
    std::string summary = "method,mean_std_across_grid,seeds\n";
    for (const auto& [method, values] : per_method_stds) {
        double mean = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            stds += method + "," + std::to_string(i) + "," + csv_number(values[i]) + "\n";
            mean += values[i];
        }
        mean /= values.size();
        summary += method + "," + csv_number(mean) + "," + std::to_string(seeds) + "\n";
    }
    inv.write_file(out_dir, "sweep_std.csv", stds);
    inv.write_file(out_dir, "sweep_summary.csv", summary);

    ordered_json echo;
    echo["command"] = "sweep";
    echo["scales"] = scales;
    echo["seeds"] = seeds;
    echo["base_config"] = ordered_json::parse(base.dump());
    const std::string now = iso8601_now();
    inv.write_file(out_dir, "manifest.json", manifest_json(echo, 0, now, now, inv));
    std::cout << "sweep: wrote grid over " << scales.size() << "x" << scales.size()
              << " scale factors to " << out_dir.string() << "\n";
    return 0;
}

fs::path resolve_out_dir(const std::string& flag_value) {
    // PARETODA_OUT takes precedence over --out
    if (const char* env = std::getenv("PARETODA_OUT"); env && *env) return fs::path(env);
    return fs::path(flag_value);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pareto-guided multi-objective optimization lab for domain adaptation"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    std::string config_path, out_flag = "out";
    int seed = -1, steps = -1, instances = 100, seeds = 5;
    int dim = 20, front_samples = 512;
    double eta = 0.05;
    std::string methods_csv = "linear,mgda";
    std::string scales_csv = "0.1,0.5,1.0,1.5";

    auto* run_da = app.add_subcommand("run-da", "train one DA configuration and emit traces");
    run_da->add_option("--config", config_path, "JSON config path")->required();
    run_da->add_option("--out", out_flag, "output directory");
    run_da->add_option("--seed", seed, "override the config seed");
    run_da->add_option("--steps", steps, "override the config step count");

    auto* run_toy = app.add_subcommand("run-toy", "trace optimization paths on the toy problem");
    run_toy->add_option("--out", out_flag, "output directory");
    run_toy->add_option("--methods", methods_csv, "comma-separated method list");
    run_toy->add_option("--seeds", seeds, "number of seeds per method");
    run_toy->add_option("--seed", seed, "base seed");
    run_toy->add_option("--steps", steps, "steps per run");
    run_toy->add_option("--eta", eta, "step size");
    run_toy->add_option("--dim", dim, "parameter dimension");
    run_toy->add_option("--front-samples", front_samples, "sampled front resolution");

    auto* verify = app.add_subcommand("verify", "run the property verification suite");
    verify->add_option("--instances", instances, "random instances per property");
    verify->add_option("--seed", seed, "suite seed");

    auto* sweep = app.add_subcommand("sweep", "objective-scale sensitivity grid");
    sweep->add_option("--config", config_path, "JSON base config path")->required();
    sweep->add_option("--out", out_flag, "output directory");
    sweep->add_option("--scales", scales_csv, "comma-separated scale factors");
    sweep->add_option("--seeds", seeds, "seeds per cell");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_da->parsed())
            return cmd_run_da(config_path, resolve_out_dir(out_flag), seed, steps);
        if (run_toy->parsed()) {
            std::vector<std::string> methods;
            std::stringstream ss(methods_csv);
            std::string tok;
            while (std::getline(ss, tok, ',')) if (!tok.empty()) methods.push_back(tok);
            return cmd_run_toy(resolve_out_dir(out_flag), methods, seeds,
                               seed < 0 ? 0 : seed, steps < 0 ? 2000 : steps, eta, dim,
                               front_samples);
        }
        if (verify->parsed())
            return cmd_verify(instances, seed < 0 ? 0 : static_cast<std::uint64_t>(seed));
        if (sweep->parsed()) {
            std::vector<double> scales;
            std::stringstream ss(scales_csv);
            std::string tok;
            while (std::getline(ss, tok, ',')) if (!tok.empty()) scales.push_back(std::stod(tok));
            return cmd_sweep(config_path, resolve_out_dir(out_flag), scales, seeds);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const TrainAbort& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
