// tiershard CLI: file-mediated pipeline over the library.
//
//   gen-trace -> analyze -> plan -> remap -> simulate -> report
//
// Every stage reads its upstream artifact and writes its declared output, so
// stages are independently testable and artifacts diff cleanly in CI.
// Exit codes: 0 success, 1 I/O or parse error, 2 constraint violation or
// infeasibility.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tiershard/planner.hpp"
#include "tiershard/remap.hpp"
#include "tiershard/simulator.hpp"
#include "tiershard/stats.hpp"
#include "tiershard/trace.hpp"
#include "tiershard/tt.hpp"

namespace fs = std::filesystem;
using namespace tiershard;

namespace {

struct Config {
    fs::path trace_path = "trace.bin";
    fs::path specs_path = "specs.json";
    fs::path stats_path = "stats.json";
    fs::path plan_path = "plan.json";
    fs::path remap_path = "remap.bin";
    fs::path report_prefix = "report";
    TraceFormat trace_format = TraceFormat::binary;

    HardwareProfile profile;
    SyntheticTraceConfig synth;
    std::int64_t tt_rank = 4;
    int tt_dims = 3;
    SolverOptions solver;
    CoreGeometry geometry;
    std::vector<int> mlp_top_dims = {64, 64, 1};
    std::vector<int> mlp_bot_dims = {16, 64, 64};
    MlpMode mlp_mode = MlpMode::throughput_opt;
    bool calibrate = false;
    int ablation = 0;  // 0 = simulate the planned files as-is
};

fs::path resolve(const fs::path& base, const fs::path& p) {
    return p.is_absolute() ? p : base / p;
}

Config load_config(const fs::path& config_path) {
    std::ifstream is(config_path);
    if (!is) throw io_error("cannot open config " + config_path.string());
    nlohmann::json doc;
    try {
        is >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(config_path.string() + ": " + e.what());
    }
    Config cfg;
    const fs::path base = config_path.parent_path();
    try {
        if (doc.contains("paths")) {
            const auto& p = doc["paths"];
            if (p.contains("trace")) cfg.trace_path = resolve(base, p["trace"].get<std::string>());
            if (p.contains("specs")) cfg.specs_path = resolve(base, p["specs"].get<std::string>());
            if (p.contains("stats")) cfg.stats_path = resolve(base, p["stats"].get<std::string>());
            if (p.contains("plan")) cfg.plan_path = resolve(base, p["plan"].get<std::string>());
            if (p.contains("remap")) cfg.remap_path = resolve(base, p["remap"].get<std::string>());
            if (p.contains("report")) cfg.report_prefix = resolve(base, p["report"].get<std::string>());
        } else {
            cfg.trace_path = base / cfg.trace_path;
            cfg.specs_path = base / cfg.specs_path;
            cfg.stats_path = base / cfg.stats_path;
            cfg.plan_path = base / cfg.plan_path;
            cfg.remap_path = base / cfg.remap_path;
            cfg.report_prefix = base / cfg.report_prefix;
        }
        if (doc.contains("trace_format")) {
            const auto f = doc["trace_format"].get<std::string>();
            if (f == "text") {
                cfg.trace_format = TraceFormat::text;
            } else if (f == "binary") {
                cfg.trace_format = TraceFormat::binary;
            } else {
                throw config_error("trace_format must be 'text' or 'binary'");
            }
        }
        if (doc.contains("profile")) cfg.profile = profile_from_json(doc["profile"]);
        if (doc.contains("synthetic")) {
            const auto& s = doc["synthetic"];
            cfg.synth.seed = s.value("seed", std::uint64_t{0});
            cfg.synth.alpha = s.value("alpha", 1.05);
            cfg.synth.num_samples = s.value("samples", std::int64_t{0});
            cfg.synth.auto_hot_cap = s.value("hot_thr_policy", std::string("fixed")) == "auto";
            for (const auto& t : s.value("tables", nlohmann::json::array())) {
                SyntheticTableConfig tc;
                tc.rows = t.at("rows").get<std::int64_t>();
                tc.dim = t.value("dim", 64);
                tc.elem_bytes = t.value("df", 4);
                tc.mean_pf = t.value("mean_pf", 1.0);
                tc.hot_cap = t.value("hot_thr", 1.0);
                cfg.synth.tables.push_back(tc);
            }
        }
        if (doc.contains("tt")) {
            cfg.tt_rank = doc["tt"].value("rank", std::int64_t{4});
            cfg.tt_dims = doc["tt"].value("dims", 3);
        }
        if (doc.contains("solver")) {
            const auto b = doc["solver"].value("backend", std::string("exact"));
            if (b == "exact") {
                cfg.solver.backend = SolverOptions::Backend::exact;
            } else if (b == "heuristic") {
                cfg.solver.backend = SolverOptions::Backend::heuristic;
            } else {
                throw config_error("solver.backend must be 'exact' or 'heuristic'");
            }
            cfg.solver.force_emb_devices = doc["solver"].value("force_emb_devices", 0);
        }
        if (doc.contains("geometry")) {
            const auto& g = doc["geometry"];
            cfg.geometry.clock_ns = g.value("clock_ns", 5.0);
            if (g.contains("emb_tile")) {
                cfg.geometry.emb_tile_rows = g["emb_tile"].at(0).get<int>();
                cfg.geometry.emb_tile_cols = g["emb_tile"].at(1).get<int>();
            }
            if (g.contains("mlp_pe")) {
                cfg.geometry.mlp_pe_rows = g["mlp_pe"].at(0).get<int>();
                cfg.geometry.mlp_pe_cols = g["mlp_pe"].at(1).get<int>();
            }
            cfg.geometry.mlp_cus = g.value("mlp_cus", 4);
            if (g.contains("mlp_top_layers")) cfg.mlp_top_dims = g["mlp_top_layers"].get<std::vector<int>>();
            if (g.contains("mlp_bot_layers")) cfg.mlp_bot_dims = g["mlp_bot_layers"].get<std::vector<int>>();
            const auto mode = g.value("mlp_mode", std::string("throughput"));
            if (mode == "latency") {
                cfg.mlp_mode = MlpMode::latency_opt;
            } else if (mode == "throughput") {
                cfg.mlp_mode = MlpMode::throughput_opt;
            } else {
                throw config_error("geometry.mlp_mode must be 'latency' or 'throughput'");
            }
        }
        cfg.calibrate = doc.value("calibrate", false);
        cfg.ablation = doc.value("ablation", 0);
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(config_path.string() + ": " + e.what());
    }
    return cfg;
}

// Calibrated latencies use the largest table's full-compression shape as the
// representative TT workload.
HardwareProfile effective_profile(const Config& cfg, const std::vector<EmbTableSpec>& specs) {
    if (!cfg.calibrate) return cfg.profile;
    std::int64_t rows = 1;
    std::int64_t dim = 1;
    for (const auto& s : specs) {
        if (s.rows > rows) {
            rows = s.rows;
            dim = s.dim;
        }
    }
    const TTShape shape = make_tt_shape(rows, dim, cfg.tt_dims, cfg.tt_rank);
    return calibrate_latencies(cfg.profile, cfg.geometry, shape, cfg.mlp_top_dims, cfg.mlp_bot_dims,
                               cfg.mlp_mode);
}

AccessTrace load_cfg_trace(const Config& cfg) {
    return load_trace(cfg.trace_path, cfg.trace_format,
                      cfg.trace_format == TraceFormat::text ? std::optional<fs::path>(cfg.specs_path)
                                                            : std::nullopt);
}

void print_cost_breakdown(const PlannerSolution& plan) {
    std::printf("backend          %s\n", plan.backend.c_str());
    std::printf("devices          ");
    for (auto c : plan.core_type) std::printf("%s ", c == CoreType::emb ? "emb" : "mlp");
    std::printf("\n");
    std::printf("emb cost         %.3f ns\n", plan.emb_cost);
    std::printf("mlp bottom cost  %.3f ns\n", plan.mlp_bot_cost);
    std::printf("mlp top cost     %.3f ns\n", plan.mlp_top_cost);
    std::printf("frontend cost    %.3f ns\n", plan.frontend_cost);
    std::printf("total cost C     %.3f ns\n", plan.total_cost);
}

int cmd_gen_trace(const Config& cfg, std::optional<std::uint64_t> seed) {
    SyntheticTraceConfig synth = cfg.synth;
    if (seed) synth.seed = *seed;
    const AccessTrace trace = generate_trace(synth);
    save_trace(trace, cfg.trace_path, cfg.trace_format);
    save_table_specs(trace.tables, cfg.specs_path);
    std::printf("wrote %zu tables, %zu samples to %s\n", trace.table_count(), trace.sample_count(),
                cfg.trace_path.string().c_str());
    return 0;
}

int cmd_analyze(const Config& cfg) {
    const AccessTrace trace = load_cfg_trace(cfg);
    const auto stats = analyze_trace(trace, cfg.tt_rank, cfg.tt_dims);
    save_stats(stats, cfg.stats_path);
    std::uint64_t total = 0;
    for (const auto& s : stats) total += s.total_accesses;
    std::printf("analyzed %zu tables, %llu lookups -> %s\n", stats.size(),
                static_cast<unsigned long long>(total), cfg.stats_path.string().c_str());
    return 0;
}

PlannerInstance build_instance(const Config& cfg, std::optional<int> devices) {
    PlannerInstance inst;
    inst.specs = load_table_specs(cfg.specs_path);
    inst.stats = load_stats(cfg.stats_path);
    inst.profile = effective_profile(cfg, inst.specs);
    if (devices) inst.profile.devices = *devices;
    return inst;
}

int cmd_plan(const Config& cfg, std::optional<std::string> backend, std::optional<int> devices) {
    PlannerInstance inst = build_instance(cfg, devices);
    SolverOptions opts = cfg.solver;
    if (backend) {
        if (*backend == "exact") {
            opts.backend = SolverOptions::Backend::exact;
        } else if (*backend == "heuristic") {
            opts.backend = SolverOptions::Backend::heuristic;
        } else {
            throw config_error("--backend must be 'exact' or 'heuristic'");
        }
    }
    const auto start = std::chrono::steady_clock::now();
    const PlannerSolution plan = solve(inst, opts);
    const auto elapsed =
        std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
    const auto violations = check_plan(inst, plan);
    if (!violations.empty()) {
        std::fprintf(stderr, "planner produced an invalid plan: %s (%s): %s\n",
                     violations.front().equation.c_str(), violations.front().where.c_str(),
                     violations.front().message.c_str());
        return 2;
    }
    save_plan(plan, cfg.plan_path);
    print_cost_breakdown(plan);
    std::printf("solved in %.3f ms -> %s\n", static_cast<double>(elapsed.count()) / 1000.0,
                cfg.plan_path.string().c_str());
    return 0;
}

std::vector<std::vector<std::uint32_t>> hotness_for_plan(const AccessTrace& trace, const PlannerSolution& plan) {
    std::vector<std::vector<std::uint32_t>> orders;
    orders.reserve(plan.tables.size());
    for (const auto& t : plan.tables) orders.push_back(hotness_order(trace, t.table_id));
    return orders;
}

int cmd_remap(const Config& cfg) {
    const AccessTrace trace = load_cfg_trace(cfg);
    const PlannerSolution plan = load_plan(cfg.plan_path);
    const auto remaps = build_remap(plan, hotness_for_plan(trace, plan));
    save_remap(remaps, cfg.remap_path);
    std::printf("wrote remap tables for %zu tables -> %s\n", remaps.size(), cfg.remap_path.string().c_str());
    return 0;
}

int cmd_simulate(const Config& cfg, std::optional<int> ablation, std::optional<std::string> backend,
                 std::optional<int> devices) {
    const AccessTrace trace = load_cfg_trace(cfg);
    const int level = ablation ? *ablation : cfg.ablation;

    PlannerSolution plan;
    std::vector<RemapTable> remaps;
    HardwareProfile profile;
    if (level != 0) {
        PlannerInstance inst = build_instance(cfg, devices);
        inst.profile = ablation_profile(inst.profile, level);
        SolverOptions opts = cfg.solver;
        if (backend) {
            opts.backend = *backend == "exact" ? SolverOptions::Backend::exact
                                               : SolverOptions::Backend::heuristic;
        }
        plan = solve(inst, opts);
        remaps = build_remap(plan, hotness_for_plan(trace, plan));
        profile = inst.profile;
        std::printf("ablation level %d: re-planned with cap_dram=%lld cap_bram=%lld\n", level,
                    static_cast<long long>(profile.cap_dram), static_cast<long long>(profile.cap_bram));
    } else {
        plan = load_plan(cfg.plan_path);
        remaps = load_remap(cfg.remap_path);
        std::vector<EmbTableSpec> specs = load_table_specs(cfg.specs_path);
        profile = effective_profile(cfg, specs);
        if (devices) profile.devices = *devices;
    }

    const SimReport report = simulate_trace(plan, remaps, trace, profile);
    const fs::path csv = cfg.report_prefix.string() + ".csv";
    const fs::path json = cfg.report_prefix.string() + ".json";
    save_report_csv(report, csv);
    save_report_json(report, json);
    std::printf("batches          %zu x %d samples\n", report.batches.size(), report.batch_size);
    std::printf("mean latency     %.3f ns\n", report.mean_latency_ns);
    std::printf("p99 latency      %.3f ns\n", report.p99_latency_ns);
    std::printf("IPS              %.1f\n", report.ips);
    std::printf("wrote %s and %s\n", csv.string().c_str(), json.string().c_str());
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_prefix) {
    if (inputs.empty()) throw config_error("report: need at least one report JSON");
    struct Row {
        std::string label;
        SimReport report;
    };
    std::vector<Row> rows;
    for (const auto& in : inputs) {
        rows.push_back(Row{fs::path(in).stem().string(), load_report_json(in)});
    }
    for (const auto& r : rows) {
        if (r.report.batch_size != rows.front().report.batch_size)
            throw infeasible_error("report: batch size mismatch between " + rows.front().label + " (" +
                                   std::to_string(rows.front().report.batch_size) + ") and " + r.label + " (" +
                                   std::to_string(r.report.batch_size) + ")");
    }

    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    std::ofstream csv(out_prefix + ".csv");
    if (!csv) throw io_error("cannot open " + out_prefix + ".csv for writing");
    csv << "config,mean_latency_ns,ips,speedup_vs_first\n";
    std::printf("%-24s %16s %12s %10s\n", "config", "mean latency ns", "IPS", "speedup");
    for (const auto& r : rows) {
        const double speedup = r.report.mean_latency_ns > 0.0
                                   ? rows.front().report.mean_latency_ns / r.report.mean_latency_ns
                                   : 0.0;
        char mean_buf[64], ips_buf[64], sp_buf[64];
        std::snprintf(mean_buf, sizeof(mean_buf), "%.6f", r.report.mean_latency_ns);
        std::snprintf(ips_buf, sizeof(ips_buf), "%.3f", r.report.ips);
        std::snprintf(sp_buf, sizeof(sp_buf), "%.4f", speedup);
        csv << r.label << ',' << mean_buf << ',' << ips_buf << ',' << sp_buf << '\n';
        doc.push_back({{"config", r.label},
                       {"mean_latency_ns", r.report.mean_latency_ns},
                       {"ips", r.report.ips},
                       {"speedup_vs_first", speedup}});
        std::printf("%-24s %16.3f %12.1f %9.3fx\n", r.label.c_str(), r.report.mean_latency_ns, r.report.ips,
                    speedup);
    }
    std::ofstream js(out_prefix + ".json");
    if (!js) throw io_error("cannot open " + out_prefix + ".json for writing");
    js << doc.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tiered embedding sharding planner and simulator"};
    app.require_subcommand(1);

    std::string config_path = "config.json";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> backend;
    std::optional<int> devices;
    std::optional<int> ablation;
    app.add_option("--config", config_path, "pipeline config JSON")->envname("TIERSHARD_CONFIG");
    app.add_option("--seed", seed, "override the synthetic trace seed");
    app.add_option("--backend", backend, "override the solver backend (exact|heuristic)");
    app.add_option("--devices", devices, "override the device count");
    app.fallthrough();

    auto* gen = app.add_subcommand("gen-trace", "synthesize a power-law access trace");
    auto* analyze = app.add_subcommand("analyze", "profile a trace into planner statistics");
    auto* plan = app.add_subcommand("plan", "solve the placement model and write the plan");
    auto* remap = app.add_subcommand("remap", "build packed address remap tables from the plan");
    auto* simulate = app.add_subcommand("simulate", "replay a trace against the plan");
    simulate->add_option("--ablation", ablation, "re-plan with a reduced hierarchy (1|2|3) before simulating");
    auto* report = app.add_subcommand("report", "combine simulation reports into a comparison table");
    std::vector<std::string> report_inputs;
    std::string report_out = "comparison";
    report->add_option("inputs", report_inputs, "report JSON files (first is the baseline)");
    report->add_option("--out", report_out, "output prefix for the comparison CSV/JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        std::fprintf(stderr, "%s\n\n%s", e.what(), app.help().c_str());
        return 1;
    }

    try {
        if (report->parsed()) return cmd_report(report_inputs, report_out);
        const Config cfg = load_config(config_path);
        if (gen->parsed()) return cmd_gen_trace(cfg, seed);
        if (analyze->parsed()) return cmd_analyze(cfg);
        if (plan->parsed()) return cmd_plan(cfg, backend, devices);
        if (remap->parsed()) return cmd_remap(cfg);
        if (simulate->parsed()) return cmd_simulate(cfg, ablation, backend, devices);
    } catch (const infeasible_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
