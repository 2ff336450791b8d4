#pragma once

// Placement planner: assigns each device an MLP or EMB role, maps tables onto
// EMB devices, and picks per-table DRAM/TT/SSD access-fraction splits on the
// per-table grid so that the batch cost
//
//   C = max(mlp_bot, emb) + mlp_top
//
// is minimal. Tiers within a device are served in parallel, so a device's
// cost is the max of its three tier sums, and the embedding cost is the max
// over devices. Two backends: an exact branch-and-bound (small instances,
// deterministic lexicographic tie-break) and a greedy marginal-gain heuristic
// with local search (scales to ~1000 tables).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tiershard/common.hpp"
#include "tiershard/stats.hpp"
#include "tiershard/trace.hpp"

namespace tiershard {

// Constraint labels used in diagnostics, check_plan reports and the LP
// export. Stable strings: CI and the CLI match on them.
namespace eq {
inline constexpr const char* objective = "Eq. 3";
inline constexpr const char* device_alloc = "Eq. 4";
inline constexpr const char* table_assignment = "Eq. 6";
inline constexpr const char* emb_core_only = "Eq. 7";
inline constexpr const char* dram_bytes = "Eq. 9";
inline constexpr const char* grid_domain = "Eq. 10";
inline constexpr const char* tt_bytes = "Eq. 13";
inline constexpr const char* tt_rows = "Eq. 19";
inline constexpr const char* hot_cap = "Eq. 22";
inline constexpr const char* tt_cap_bytes = "Eq. 23";
inline constexpr const char* dram_capacity = "Eq. 24";
inline constexpr const char* ssd_capacity = "Eq. 26";
inline constexpr const char* bram_capacity = "Eq. 27";
inline constexpr const char* tier_cost_sums = "Eq. 28";
inline constexpr const char* mlp_top_cost = "Eq. 31";
inline constexpr const char* mlp_bot_cost = "Eq. 32";
inline constexpr const char* emb_cost = "Eq. 33";
inline constexpr const char* frontend_cost = "Eq. 34";
}  // namespace eq

enum class CoreType { mlp = 0, emb = 1 };

struct PlannerInstance {
    HardwareProfile profile;
    std::vector<EmbTableSpec> specs;
    std::vector<TableStats> stats;  // positionally aligned with specs

    void validate() const {
        profile.validate();
        if (specs.empty()) throw config_error("planner instance: no tables");
        if (stats.size() != specs.size()) throw config_error("planner instance: specs/stats size mismatch");
        for (std::size_t j = 0; j < specs.size(); ++j) {
            specs[j].validate();
            if (stats[j].table_id != specs[j].table_id)
                throw config_error("planner instance: table_id mismatch at position " + std::to_string(j));
            if (stats[j].icdf.size() != static_cast<std::size_t>(stats[j].step) + 1 ||
                stats[j].tt_cm.size() != static_cast<std::size_t>(stats[j].step) + 1)
                throw config_error("planner instance: stats grid arrays malformed for table " +
                                   std::to_string(specs[j].table_id));
        }
    }
};

struct TablePlacement {
    int table_id = 0;
    int device = -1;                 // -1 = unassigned
    int dram_grid = 0;               // a: pct_dram = a/step
    int ttptr_grid = 0;              // b >= a: pct_dram + pct_tt = b/step
    double pct_dram = 0.0;
    double pct_tt = 0.0;
    std::int64_t rows_dram = 0;
    std::int64_t rows_tt = 0;
    std::int64_t rows_ssd = 0;
    std::int64_t dram_bytes = 0;     // uncompressed bytes held in DRAM
    std::int64_t tt_src_bytes = 0;   // uncompressed size of the TT region
    std::int64_t ssd_bytes = 0;
    double tt_cap_bytes = 0.0;       // compressed TT bytes
    double cost_dram = 0.0;          // per-batch ns
    double cost_tt = 0.0;
    double cost_ssd = 0.0;
};

struct PlannerSolution {
    std::vector<CoreType> core_type;      // per device
    std::vector<TablePlacement> tables;   // instance order
    std::vector<double> dev_cost_dram;    // per device tier sums
    std::vector<double> dev_cost_tt;
    std::vector<double> dev_cost_ssd;
    double emb_cost = 0.0;
    double mlp_bot_cost = 0.0;
    double mlp_top_cost = 0.0;
    double frontend_cost = 0.0;
    double total_cost = 0.0;
    std::string backend;

    int emb_devices() const {
        int k = 0;
        for (auto c : core_type) k += (c == CoreType::emb) ? 1 : 0;
        return k;
    }
};

struct Violation {
    std::string equation;
    std::string where;   // "device 2" / "table 5"
    double slack = 0.0;  // amount by which the constraint is missed
    std::string message;
};

struct SolverOptions {
    enum class Backend { exact, heuristic };
    Backend backend = Backend::exact;
    int force_emb_devices = 0;  // 0 = sweep over all admissible counts
    int exact_max_devices = 4;
    int exact_max_tables = 6;
    int exact_max_step = 10;
};

// ---------------------------------------------------------------------------
// Derived quantities
// ---------------------------------------------------------------------------

// Compressed bytes for a TT region of region_rows rows: piecewise-linear
// interpolation of the tt_cm grid at the region's row fraction.
inline double tt_region_bytes(const TableStats& stats, std::int64_t region_rows, std::int64_t rows) {
    if (region_rows <= 0) return 0.0;
    double x = static_cast<double>(region_rows) / static_cast<double>(rows) * stats.step;
    x = std::clamp(x, 0.0, static_cast<double>(stats.step));
    const int i0 = std::min(static_cast<int>(x), stats.step - 1);
    const double frac = x - i0;
    return stats.tt_cm[static_cast<std::size_t>(i0)] +
           frac * (stats.tt_cm[static_cast<std::size_t>(i0) + 1] - stats.tt_cm[static_cast<std::size_t>(i0)]);
}

// Largest admissible grid point for DRAM+TT under the table's hot cap.
inline int max_hot_grid(const EmbTableSpec& spec, const TableStats& stats) {
    return static_cast<int>(std::floor(spec.hot_cap * stats.step + 1e-9));
}

namespace detail {

inline TablePlacement make_placement(const PlannerInstance& inst, std::size_t j, int device, int a, int b) {
    const auto& spec = inst.specs[j];
    const auto& st = inst.stats[j];
    const auto& prof = inst.profile;
    TablePlacement p;
    p.table_id = spec.table_id;
    p.device = device;
    p.dram_grid = a;
    p.ttptr_grid = b;
    p.pct_dram = static_cast<double>(a) / st.step;
    p.pct_tt = static_cast<double>(b - a) / st.step;
    const std::int64_t ka = st.icdf_rows(a, spec.rows);
    const std::int64_t kb = st.icdf_rows(b, spec.rows);
    p.rows_dram = ka;
    p.rows_tt = kb - ka;
    p.rows_ssd = spec.rows - kb;
    const std::int64_t row_bytes = static_cast<std::int64_t>(spec.dim) * spec.elem_bytes;
    p.dram_bytes = ka * row_bytes;
    p.tt_src_bytes = (kb - ka) * row_bytes;
    p.ssd_bytes = spec.total_bytes() - p.dram_bytes - p.tt_src_bytes;
    p.tt_cap_bytes = tt_region_bytes(st, p.rows_tt, spec.rows);
    const double volume = st.avg_pf * prof.batch;
    p.cost_dram = volume * p.pct_dram * prof.t_dram;
    p.cost_tt = volume * p.pct_tt * prof.t_tt;
    p.cost_ssd = volume * (1.0 - p.pct_dram - p.pct_tt) * prof.t_ssd;
    return p;
}

}  // namespace detail

// Fills every derived field from the structural choice (core types, table ->
// device, grid cuts). No validation: check_plan judges the result.
inline PlannerSolution materialize(const PlannerInstance& inst, std::vector<CoreType> core_type,
                                   const std::vector<int>& device, const std::vector<std::pair<int, int>>& grids) {
    const int M = inst.profile.devices;
    PlannerSolution sol;
    sol.core_type = std::move(core_type);
    sol.tables.resize(inst.specs.size());
    sol.dev_cost_dram.assign(static_cast<std::size_t>(M), 0.0);
    sol.dev_cost_tt.assign(static_cast<std::size_t>(M), 0.0);
    sol.dev_cost_ssd.assign(static_cast<std::size_t>(M), 0.0);
    for (std::size_t j = 0; j < inst.specs.size(); ++j) {
        sol.tables[j] = detail::make_placement(inst, j, device[j], grids[j].first, grids[j].second);
        const int dev = sol.tables[j].device;
        if (dev >= 0 && dev < M) {
            sol.dev_cost_dram[static_cast<std::size_t>(dev)] += sol.tables[j].cost_dram;
            sol.dev_cost_tt[static_cast<std::size_t>(dev)] += sol.tables[j].cost_tt;
            sol.dev_cost_ssd[static_cast<std::size_t>(dev)] += sol.tables[j].cost_ssd;
        }
    }
    int n_mlp = 0;
    for (auto c : sol.core_type) n_mlp += (c == CoreType::mlp) ? 1 : 0;
    const double passes = static_cast<double>(inst.profile.batch) / inst.profile.mini_batch;
    sol.mlp_top_cost = n_mlp > 0 ? inst.profile.t_mlp_top * passes / n_mlp : 0.0;
    sol.mlp_bot_cost = n_mlp > 0 ? inst.profile.t_mlp_bot * passes / n_mlp : 0.0;
    sol.emb_cost = 0.0;
    for (int m = 0; m < M; ++m) {
        const double dev_cost = std::max({sol.dev_cost_dram[static_cast<std::size_t>(m)],
                                          sol.dev_cost_tt[static_cast<std::size_t>(m)],
                                          sol.dev_cost_ssd[static_cast<std::size_t>(m)]});
        sol.emb_cost = std::max(sol.emb_cost, dev_cost);
    }
    sol.frontend_cost = std::max(sol.mlp_bot_cost, sol.emb_cost);
    sol.total_cost = sol.frontend_cost + sol.mlp_top_cost;
    return sol;
}

// ---------------------------------------------------------------------------
// check_plan: replay every constraint; empty result means feasible and
// self-consistent.
// ---------------------------------------------------------------------------

inline std::vector<Violation> check_plan(const PlannerInstance& inst, const PlannerSolution& sol) {
    std::vector<Violation> out;
    const int M = inst.profile.devices;
    const auto add = [&](const char* equation, std::string where, double slack, std::string msg) {
        out.push_back(Violation{equation, std::move(where), slack, std::move(msg)});
    };

    if (static_cast<int>(sol.core_type.size()) != M) {
        add(eq::device_alloc, "devices", 0.0, "core type vector does not cover all devices");
        return out;
    }
    const int n_emb = sol.emb_devices();
    if (n_emb < 1 || n_emb > M - 1) {
        add(eq::device_alloc, "devices", static_cast<double>(n_emb < 1 ? 1 - n_emb : n_emb - (M - 1)),
            "EMB core count " + std::to_string(n_emb) + " outside [1, " + std::to_string(M - 1) + "]");
    }

    if (sol.tables.size() != inst.specs.size()) {
        add(eq::table_assignment, "tables", 0.0, "placement list does not cover all tables");
        return out;
    }

    std::vector<std::int64_t> dev_dram_bytes(static_cast<std::size_t>(M), 0);
    std::vector<std::int64_t> dev_ssd_bytes(static_cast<std::size_t>(M), 0);
    std::vector<double> dev_tt_cap(static_cast<std::size_t>(M), 0.0);
    std::vector<double> dram_sum(static_cast<std::size_t>(M), 0.0), tt_sum(static_cast<std::size_t>(M), 0.0),
        ssd_sum(static_cast<std::size_t>(M), 0.0);

    for (std::size_t j = 0; j < inst.specs.size(); ++j) {
        const auto& spec = inst.specs[j];
        const auto& st = inst.stats[j];
        const auto& p = sol.tables[j];
        const std::string where = "table " + std::to_string(spec.table_id);

        if (p.device < 0 || p.device >= M) {
            add(eq::table_assignment, where, 1.0, "table is not assigned to exactly one device");
        } else if (sol.core_type[static_cast<std::size_t>(p.device)] != CoreType::emb) {
            add(eq::emb_core_only, where, 1.0,
                "table assigned to device " + std::to_string(p.device) + " which hosts an MLP core");
        }

        if (p.dram_grid < 0 || p.ttptr_grid < p.dram_grid || p.ttptr_grid > st.step) {
            add(eq::grid_domain, where, 0.0, "grid cuts outside 0 <= a <= b <= step");
            continue;
        }

        const double hot_used = static_cast<double>(p.ttptr_grid) / st.step;
        if (hot_used > spec.hot_cap + 1e-9) {
            add(eq::hot_cap, where, hot_used - spec.hot_cap,
                "pct_dram + pct_tt = " + std::to_string(hot_used) + " exceeds hot threshold " +
                    std::to_string(spec.hot_cap));
        }

        // Derived-field consistency against an independent re-derivation.
        const TablePlacement ref = detail::make_placement(inst, j, p.device, p.dram_grid, p.ttptr_grid);
        if (p.rows_dram != ref.rows_dram || p.dram_bytes != ref.dram_bytes) {
            add(eq::dram_bytes, where, std::abs(static_cast<double>(p.dram_bytes - ref.dram_bytes)),
                "DRAM rows/bytes do not match the ICDF at the DRAM cut");
        }
        if (p.rows_tt != ref.rows_tt || p.tt_src_bytes != ref.tt_src_bytes) {
            add(eq::tt_bytes, where, std::abs(static_cast<double>(p.tt_src_bytes - ref.tt_src_bytes)),
                "TT region rows/bytes do not match the ICDF between the cuts");
        }
        if (p.rows_ssd != ref.rows_ssd || p.ssd_bytes != ref.ssd_bytes) {
            add(eq::tt_rows, where, std::abs(static_cast<double>(p.ssd_bytes - ref.ssd_bytes)),
                "row split does not cover the table");
        }
        if (std::abs(p.tt_cap_bytes - ref.tt_cap_bytes) > 1e-6 * std::max(1.0, ref.tt_cap_bytes)) {
            add(eq::tt_cap_bytes, where, std::abs(p.tt_cap_bytes - ref.tt_cap_bytes),
                "compressed TT bytes do not match the size curve");
        }
        const double cost_tol = 1e-9 * std::max({1.0, ref.cost_dram, ref.cost_tt, ref.cost_ssd});
        if (std::abs(p.cost_dram - ref.cost_dram) > cost_tol || std::abs(p.cost_tt - ref.cost_tt) > cost_tol ||
            std::abs(p.cost_ssd - ref.cost_ssd) > cost_tol) {
            add(eq::tier_cost_sums, where, 0.0, "per-table tier costs do not match pf * BS * pct * t");
        }

        if (p.device >= 0 && p.device < M) {
            dev_dram_bytes[static_cast<std::size_t>(p.device)] += ref.dram_bytes;
            dev_ssd_bytes[static_cast<std::size_t>(p.device)] += ref.ssd_bytes;
            dev_tt_cap[static_cast<std::size_t>(p.device)] += ref.tt_cap_bytes;
            dram_sum[static_cast<std::size_t>(p.device)] += ref.cost_dram;
            tt_sum[static_cast<std::size_t>(p.device)] += ref.cost_tt;
            ssd_sum[static_cast<std::size_t>(p.device)] += ref.cost_ssd;
        }
    }

    for (int m = 0; m < M; ++m) {
        const std::string where = "device " + std::to_string(m);
        if (dev_dram_bytes[static_cast<std::size_t>(m)] > inst.profile.cap_dram) {
            add(eq::dram_capacity, where,
                static_cast<double>(dev_dram_bytes[static_cast<std::size_t>(m)] - inst.profile.cap_dram),
                "DRAM bytes " + std::to_string(dev_dram_bytes[static_cast<std::size_t>(m)]) + " exceed capacity " +
                    std::to_string(inst.profile.cap_dram));
        }
        if (dev_ssd_bytes[static_cast<std::size_t>(m)] > inst.profile.cap_ssd) {
            add(eq::ssd_capacity, where,
                static_cast<double>(dev_ssd_bytes[static_cast<std::size_t>(m)] - inst.profile.cap_ssd),
                "SSD bytes " + std::to_string(dev_ssd_bytes[static_cast<std::size_t>(m)]) + " exceed capacity " +
                    std::to_string(inst.profile.cap_ssd));
        }
        if (dev_tt_cap[static_cast<std::size_t>(m)] >
            static_cast<double>(inst.profile.cap_bram) + 1e-6 * std::max<double>(1.0, static_cast<double>(inst.profile.cap_bram))) {
            add(eq::bram_capacity, where,
                dev_tt_cap[static_cast<std::size_t>(m)] - static_cast<double>(inst.profile.cap_bram),
                "compressed TT bytes exceed BRAM capacity " + std::to_string(inst.profile.cap_bram));
        }
    }

    // Aggregate-cost consistency.
    if (sol.dev_cost_dram.size() == static_cast<std::size_t>(M)) {
        for (int m = 0; m < M; ++m) {
            const double tol = 1e-9 * std::max(1.0, std::abs(dram_sum[static_cast<std::size_t>(m)]) +
                                                        std::abs(tt_sum[static_cast<std::size_t>(m)]) +
                                                        std::abs(ssd_sum[static_cast<std::size_t>(m)]));
            if (std::abs(sol.dev_cost_dram[static_cast<std::size_t>(m)] - dram_sum[static_cast<std::size_t>(m)]) > tol ||
                std::abs(sol.dev_cost_tt[static_cast<std::size_t>(m)] - tt_sum[static_cast<std::size_t>(m)]) > tol ||
                std::abs(sol.dev_cost_ssd[static_cast<std::size_t>(m)] - ssd_sum[static_cast<std::size_t>(m)]) > tol) {
                add(eq::tier_cost_sums, "device " + std::to_string(m), 0.0,
                    "device tier costs do not equal the sums over assigned tables");
            }
        }
    } else {
        add(eq::tier_cost_sums, "devices", 0.0, "device tier cost vectors malformed");
    }

    const int n_mlp = M - n_emb;
    const double passes = static_cast<double>(inst.profile.batch) / inst.profile.mini_batch;
    const double want_top = n_mlp > 0 ? inst.profile.t_mlp_top * passes / n_mlp : 0.0;
    const double want_bot = n_mlp > 0 ? inst.profile.t_mlp_bot * passes / n_mlp : 0.0;
    if (std::abs(sol.mlp_top_cost - want_top) > 1e-9 * std::max(1.0, want_top)) {
        add(eq::mlp_top_cost, "devices", std::abs(sol.mlp_top_cost - want_top),
            "top MLP cost does not match t_mlp_top * (BS/BS_mini) / n_mlp");
    }
    if (std::abs(sol.mlp_bot_cost - want_bot) > 1e-9 * std::max(1.0, want_bot)) {
        add(eq::mlp_bot_cost, "devices", std::abs(sol.mlp_bot_cost - want_bot),
            "bottom MLP cost does not match t_mlp_bot * (BS/BS_mini) / n_mlp");
    }

    double want_emb = 0.0;
    for (int m = 0; m < M; ++m) {
        want_emb = std::max(want_emb, std::max({dram_sum[static_cast<std::size_t>(m)],
                                                tt_sum[static_cast<std::size_t>(m)],
                                                ssd_sum[static_cast<std::size_t>(m)]}));
    }
    if (std::abs(sol.emb_cost - want_emb) > 1e-9 * std::max(1.0, want_emb)) {
        add(eq::emb_cost, "devices", std::abs(sol.emb_cost - want_emb),
            "embedding cost is not the max tier cost over devices");
    }
    const double want_fnt = std::max(want_bot, want_emb);
    if (std::abs(sol.frontend_cost - want_fnt) > 1e-9 * std::max(1.0, want_fnt)) {
        add(eq::frontend_cost, "devices", std::abs(sol.frontend_cost - want_fnt),
            "frontend cost is not max(mlp_bot, emb)");
    }
    const double want_total = want_fnt + want_top;
    if (std::abs(sol.total_cost - want_total) > 1e-9 * std::max(1.0, want_total)) {
        add(eq::objective, "objective", std::abs(sol.total_cost - want_total),
            "total cost is not frontend + mlp_top");
    }
    return out;
}

// Fill a structural candidate and insist it is feasible.
inline PlannerSolution evaluate(const PlannerInstance& inst, const PlannerSolution& skeleton) {
    inst.validate();
    if (skeleton.core_type.size() != static_cast<std::size_t>(inst.profile.devices))
        throw config_error("evaluate: candidate core types do not cover all devices");
    if (skeleton.tables.size() != inst.specs.size())
        throw config_error("evaluate: candidate placements do not cover all tables");
    std::vector<int> device(inst.specs.size());
    std::vector<std::pair<int, int>> grids(inst.specs.size());
    for (std::size_t j = 0; j < inst.specs.size(); ++j) {
        device[j] = skeleton.tables[j].device;
        grids[j] = {skeleton.tables[j].dram_grid, skeleton.tables[j].ttptr_grid};
    }
    PlannerSolution sol = materialize(inst, skeleton.core_type, device, grids);
    sol.backend = skeleton.backend.empty() ? "evaluate" : skeleton.backend;
    const auto violations = check_plan(inst, sol);
    if (!violations.empty()) {
        std::string msg = "candidate violates " + violations.front().equation + " (" + violations.front().where +
                          "): " + violations.front().message;
        if (violations.size() > 1) msg += " (+" + std::to_string(violations.size() - 1) + " more)";
        throw infeasible_error(msg);
    }
    return sol;
}

// ---------------------------------------------------------------------------
// Exact solver
// ---------------------------------------------------------------------------

namespace detail {

struct GridOption {
    int a, b;
    double c_dram, c_tt, c_ssd;
    std::int64_t dram_bytes, ssd_bytes;
    double tt_cap;
};

struct TableOptions {
    std::vector<GridOption> options;  // lexicographic (a, b)
    double min_ssd_cost = 0.0;
    std::int64_t min_ssd_bytes = 0;
};

inline TableOptions build_options(const PlannerInstance& inst, std::size_t j) {
    const auto& spec = inst.specs[j];
    const auto& st = inst.stats[j];
    TableOptions to;
    const int maxb = max_hot_grid(spec, st);
    to.min_ssd_cost = std::numeric_limits<double>::infinity();
    to.min_ssd_bytes = std::numeric_limits<std::int64_t>::max();
    for (int a = 0; a <= maxb; ++a) {
        for (int b = a; b <= maxb; ++b) {
            const TablePlacement p = make_placement(inst, j, -1, a, b);
            GridOption opt{a, b, p.cost_dram, p.cost_tt, p.cost_ssd, p.dram_bytes, p.ssd_bytes, p.tt_cap_bytes};
            to.min_ssd_cost = std::min(to.min_ssd_cost, opt.c_ssd);
            to.min_ssd_bytes = std::min(to.min_ssd_bytes, opt.ssd_bytes);
            to.options.push_back(opt);
        }
    }
    return to;
}

struct DeviceSearchResult {
    bool feasible = false;
    double cost = std::numeric_limits<double>::infinity();
    std::vector<int> choice;  // option index per table (device-local order)
};

// DFS over the tables assigned to one device, options in lexicographic order.
// In minimize mode returns the cheapest (first in lex order among ties)
// assignment; with a ceiling, returns the lexicographically first assignment
// whose device cost stays at or below the ceiling.
inline DeviceSearchResult search_device(const PlannerInstance& inst, const std::vector<std::size_t>& tables,
                                        const std::vector<TableOptions>& all_options, double ceiling) {
    const bool minimize = !(ceiling < std::numeric_limits<double>::infinity());
    DeviceSearchResult best;
    if (tables.empty()) {
        best.feasible = true;
        best.cost = 0.0;
        return best;
    }

    const std::size_t n = tables.size();
    std::vector<double> tail_min_ssd_cost(n + 1, 0.0);
    std::vector<std::int64_t> tail_min_ssd_bytes(n + 1, 0);
    for (std::size_t i = n; i-- > 0;) {
        tail_min_ssd_cost[i] = tail_min_ssd_cost[i + 1] + all_options[tables[i]].min_ssd_cost;
        tail_min_ssd_bytes[i] = tail_min_ssd_bytes[i + 1] + all_options[tables[i]].min_ssd_bytes;
    }

    std::vector<int> choice(n, 0);
    // Per-depth partial sums; index d holds sums after d tables decided.
    std::vector<double> sum_dram(n + 1, 0.0), sum_tt(n + 1, 0.0), sum_ssd(n + 1, 0.0), sum_cap(n + 1, 0.0);
    std::vector<std::int64_t> bytes_dram(n + 1, 0), bytes_ssd(n + 1, 0);

    double incumbent = minimize ? std::numeric_limits<double>::infinity()
                                : ceiling + 1e-9 * std::max(1.0, ceiling);
    const double cap_bram = static_cast<double>(inst.profile.cap_bram) +
                            1e-6 * std::max<double>(1.0, static_cast<double>(inst.profile.cap_bram));

    std::size_t depth = 0;
    int opt_idx = 0;
    while (true) {
        const auto& topt = all_options[tables[depth]];
        bool descended = false;
        for (int oi = opt_idx; oi < static_cast<int>(topt.options.size()); ++oi) {
            const auto& o = topt.options[static_cast<std::size_t>(oi)];
            const std::int64_t nd_bytes = bytes_dram[depth] + o.dram_bytes;
            if (nd_bytes > inst.profile.cap_dram) continue;
            const double ncap = sum_cap[depth] + o.tt_cap;
            if (ncap > cap_bram) continue;
            const std::int64_t nssd_bytes = bytes_ssd[depth] + o.ssd_bytes;
            if (nssd_bytes + tail_min_ssd_bytes[depth + 1] > inst.profile.cap_ssd) continue;
            const double nd = sum_dram[depth] + o.c_dram;
            const double nt = sum_tt[depth] + o.c_tt;
            const double ns = sum_ssd[depth] + o.c_ssd;
            const double bound = std::max({nd, nt, ns + tail_min_ssd_cost[depth + 1]});
            if (bound >= incumbent) continue;

            choice[depth] = oi;
            sum_dram[depth + 1] = nd;
            sum_tt[depth + 1] = nt;
            sum_ssd[depth + 1] = ns;
            sum_cap[depth + 1] = ncap;
            bytes_dram[depth + 1] = nd_bytes;
            bytes_ssd[depth + 1] = nssd_bytes;

            if (depth + 1 == n) {
                const double cost = std::max({nd, nt, ns});
                best.feasible = true;
                best.cost = cost;
                best.choice = choice;
                if (!minimize) return best;  // first admissible assignment in lex order
                incumbent = cost;
                continue;  // keep scanning siblings under the tighter bound
            }
            ++depth;
            opt_idx = 0;
            descended = true;
            break;
        }
        if (descended) continue;
        if (depth == 0) break;
        --depth;
        opt_idx = choice[depth] + 1;
    }
    return best;
}

struct SolutionKey {
    double cost;
    std::vector<int> core;    // 0 = mlp, 1 = emb
    std::vector<int> device;  // per table
    std::vector<double> pct_dram;
    std::vector<double> pct_tt;

    bool better_than(const SolutionKey& other) const {
        if (cost != other.cost) return cost < other.cost;
        if (core != other.core) return core < other.core;
        if (device != other.device) return device < other.device;
        if (pct_dram != other.pct_dram) return pct_dram < other.pct_dram;
        return pct_tt < other.pct_tt;
    }
};

inline SolutionKey key_of(const PlannerSolution& sol) {
    SolutionKey k;
    k.cost = sol.total_cost;
    k.core.reserve(sol.core_type.size());
    for (auto c : sol.core_type) k.core.push_back(c == CoreType::emb ? 1 : 0);
    for (const auto& t : sol.tables) {
        k.device.push_back(t.device);
        k.pct_dram.push_back(t.pct_dram);
        k.pct_tt.push_back(t.pct_tt);
    }
    return k;
}

inline infeasible_error ssd_infeasibility(const PlannerInstance& inst) {
    std::int64_t total = 0;
    std::int64_t biggest = 0;
    for (const auto& s : inst.specs) {
        total += s.total_bytes();
        biggest = std::max(biggest, s.total_bytes());
    }
    const int k = inst.profile.devices - 1;
    const std::int64_t spread = std::max(biggest, (total + k - 1) / k);
    return infeasible_error(std::string(eq::ssd_capacity) + ": no table assignment fits SSD capacity " +
                            std::to_string(inst.profile.cap_ssd) + " bytes per device (best spread needs ~" +
                            std::to_string(spread) + " bytes on the fullest of " + std::to_string(k) + " devices)");
}

}  // namespace detail

// Globally minimal cost by enumeration of core patterns and table assignments
// with per-device branch-and-bound over the grid cuts. Ties broken
// lexicographically by (core vector, assignment, pct_dram, pct_tt).
inline PlannerSolution solve_exact(const PlannerInstance& inst, const SolverOptions& opts = {}) {
    inst.validate();
    const int M = inst.profile.devices;
    const std::size_t J = inst.specs.size();
    if (M > opts.exact_max_devices)
        throw config_error("solve_exact: " + std::to_string(M) + " devices exceed the exact-search cap " +
                           std::to_string(opts.exact_max_devices) + "; use the heuristic backend");
    if (static_cast<int>(J) > opts.exact_max_tables)
        throw config_error("solve_exact: " + std::to_string(J) + " tables exceed the exact-search cap " +
                           std::to_string(opts.exact_max_tables) + "; use the heuristic backend");
    for (const auto& st : inst.stats) {
        if (st.step > opts.exact_max_step)
            throw config_error("solve_exact: table " + std::to_string(st.table_id) + " step " +
                               std::to_string(st.step) + " exceeds the exact-search cap " +
                               std::to_string(opts.exact_max_step) + "; use the heuristic backend");
    }

    std::vector<detail::TableOptions> options(J);
    for (std::size_t j = 0; j < J; ++j) options[j] = detail::build_options(inst, j);

    std::optional<PlannerSolution> best;
    std::optional<detail::SolutionKey> best_key;
    const double passes = static_cast<double>(inst.profile.batch) / inst.profile.mini_batch;

    for (int mask = 0; mask < (1 << M); ++mask) {
        std::vector<CoreType> core(static_cast<std::size_t>(M));
        std::vector<int> emb_devices;
        for (int m = 0; m < M; ++m) {
            const bool is_emb = (mask >> (M - 1 - m)) & 1;  // lex order over the core vector
            core[static_cast<std::size_t>(m)] = is_emb ? CoreType::emb : CoreType::mlp;
            if (is_emb) emb_devices.push_back(m);
        }
        const int k = static_cast<int>(emb_devices.size());
        if (k < 1 || k > M - 1) continue;
        if (opts.force_emb_devices > 0 && k != opts.force_emb_devices) continue;
        const int n_mlp = M - k;
        const double mlp_top = inst.profile.t_mlp_top * passes / n_mlp;
        const double mlp_bot = inst.profile.t_mlp_bot * passes / n_mlp;

        // Enumerate table -> EMB-device assignments in lexicographic order of
        // the per-table device index vector.
        std::vector<int> digits(J, 0);
        while (true) {
            std::vector<std::vector<std::size_t>> per_device(static_cast<std::size_t>(M));
            std::vector<int> device(J);
            for (std::size_t j = 0; j < J; ++j) {
                device[j] = emb_devices[static_cast<std::size_t>(digits[j])];
                per_device[static_cast<std::size_t>(device[j])].push_back(j);
            }

            bool feasible = true;
            double emb_side = mlp_bot;
            std::vector<detail::DeviceSearchResult> minima(static_cast<std::size_t>(M));
            for (int m : emb_devices) {
                minima[static_cast<std::size_t>(m)] = detail::search_device(
                    inst, per_device[static_cast<std::size_t>(m)], options,
                    std::numeric_limits<double>::infinity());
                if (!minima[static_cast<std::size_t>(m)].feasible) {
                    feasible = false;
                    break;
                }
                emb_side = std::max(emb_side, minima[static_cast<std::size_t>(m)].cost);
            }
            if (feasible) {
                const double candidate_cost = emb_side + mlp_top;
                const bool worth = !best_key || candidate_cost < best_key->cost ||
                                   candidate_cost == best_key->cost;
                if (worth) {
                    // Lexicographic pass: each device independently takes the
                    // first grid vector whose cost stays within the binding
                    // budget.
                    std::vector<std::pair<int, int>> grids(J, {0, 0});
                    for (int m : emb_devices) {
                        const auto& tbls = per_device[static_cast<std::size_t>(m)];
                        if (tbls.empty()) continue;
                        auto lexed = detail::search_device(inst, tbls, options, emb_side);
                        const auto& pick = lexed.feasible ? lexed : minima[static_cast<std::size_t>(m)];
                        for (std::size_t i = 0; i < tbls.size(); ++i) {
                            const auto& o = options[tbls[i]].options[static_cast<std::size_t>(pick.choice[i])];
                            grids[tbls[i]] = {o.a, o.b};
                        }
                    }
                    PlannerSolution cand = materialize(inst, core, device, grids);
                    cand.backend = "exact";
                    auto key = detail::key_of(cand);
                    if (!best_key || key.better_than(*best_key)) {
                        best = std::move(cand);
                        best_key = std::move(key);
                    }
                }
            }

            // next assignment
            std::size_t pos = J;
            while (pos > 0) {
                --pos;
                if (++digits[pos] < k) break;
                digits[pos] = 0;
                if (pos == 0) {
                    pos = SIZE_MAX;
                    break;
                }
            }
            if (pos == SIZE_MAX || (pos == 0 && digits[0] == 0)) break;
        }
    }

    if (!best) throw detail::ssd_infeasibility(inst);
    return *best;
}

// ---------------------------------------------------------------------------
// Heuristic solver: per EMB-device-count sweep, LPT table assignment on the
// all-SSD cost, greedy highest-gain-per-byte tier filling (DRAM first, then
// TT), single-step hill climbing, then single-table relocations.
// ---------------------------------------------------------------------------

namespace detail {

struct DeviceGrid {
    std::vector<std::size_t> tables;        // instance indices, ascending
    std::vector<std::pair<int, int>> cuts;  // (a, b) per local table
    double sum_dram = 0.0, sum_tt = 0.0, sum_ssd = 0.0, sum_cap = 0.0;
    std::int64_t bytes_dram = 0, bytes_ssd = 0;

    double cost() const { return std::max({sum_dram, sum_tt, sum_ssd}); }
};

inline void grid_recompute(const PlannerInstance& inst, DeviceGrid& g) {
    g.sum_dram = g.sum_tt = g.sum_ssd = g.sum_cap = 0.0;
    g.bytes_dram = g.bytes_ssd = 0;
    for (std::size_t i = 0; i < g.tables.size(); ++i) {
        const auto p = make_placement(inst, g.tables[i], -1, g.cuts[i].first, g.cuts[i].second);
        g.sum_dram += p.cost_dram;
        g.sum_tt += p.cost_tt;
        g.sum_ssd += p.cost_ssd;
        g.sum_cap += p.tt_cap_bytes;
        g.bytes_dram += p.dram_bytes;
        g.bytes_ssd += p.ssd_bytes;
    }
}

// Greedy fill of one device. Moves one access-fraction grid step at a time,
// highest latency-reduction-per-byte first, never letting the device cost
// grow and never overflowing a capacity.
inline void grid_greedy(const PlannerInstance& inst, DeviceGrid& g) {
    g.cuts.assign(g.tables.size(), {0, 0});
    grid_recompute(inst, g);
    const auto& prof = inst.profile;
    const double cap_bram = static_cast<double>(prof.cap_bram) +
                            1e-6 * std::max<double>(1.0, static_cast<double>(prof.cap_bram));

    // phase 0: SSD -> DRAM (advances a, dragging b with it), phase 1: SSD -> TT
    for (int phase = 0; phase < 2; ++phase) {
        struct Move {
            double score;
            std::size_t local;
        };
        while (true) {
            Move pick{-1.0, 0};
            for (std::size_t i = 0; i < g.tables.size(); ++i) {
                const std::size_t j = g.tables[i];
                const auto& spec = inst.specs[j];
                const auto& st = inst.stats[j];
                const int maxb = max_hot_grid(spec, st);
                const auto [a, b] = g.cuts[i];
                const double per_step = st.avg_pf * prof.batch / st.step;
                double gain_mass;
                int na = a, nb = b;
                if (phase == 0) {
                    if (a + 1 > maxb) continue;
                    na = a + 1;
                    nb = std::max(b, a + 1);
                    // converts one grid step from its current tier to DRAM
                    const double src_t = (b > a) ? prof.t_tt : prof.t_ssd;
                    gain_mass = per_step * (src_t - prof.t_dram);
                } else {
                    if (b + 1 > maxb) continue;
                    nb = b + 1;
                    gain_mass = per_step * (prof.t_ssd - prof.t_tt);
                }
                if (gain_mass <= 0.0) continue;

                const auto cur = make_placement(inst, j, -1, a, b);
                const auto nxt = make_placement(inst, j, -1, na, nb);
                const std::int64_t d_dram_bytes = nxt.dram_bytes - cur.dram_bytes;
                const double d_cap = nxt.tt_cap_bytes - cur.tt_cap_bytes;
                if (g.bytes_dram + d_dram_bytes > prof.cap_dram) continue;
                if (g.sum_cap + d_cap > cap_bram) continue;

                const double new_cost = std::max({g.sum_dram - cur.cost_dram + nxt.cost_dram,
                                                  g.sum_tt - cur.cost_tt + nxt.cost_tt,
                                                  g.sum_ssd - cur.cost_ssd + nxt.cost_ssd});
                if (new_cost > g.cost() + 1e-12 * std::max(1.0, g.cost())) continue;

                const double denom = phase == 0 ? static_cast<double>(d_dram_bytes) : d_cap;
                const double score = denom > 0.0 ? gain_mass / denom : std::numeric_limits<double>::infinity();
                if (score > pick.score) pick = {score, i};
            }
            if (!(pick.score > 0.0)) break;
            auto& [a, b] = g.cuts[pick.local];
            if (phase == 0) {
                ++a;
                b = std::max(b, a);
            } else {
                ++b;
            }
            grid_recompute(inst, g);
        }
    }

    // Hill climbing over single-step cut adjustments (covers profiles where
    // the greedy phase order is wrong, e.g. t_tt < t_dram).
    bool changed = true;
    int rounds = 0;
    const int max_rounds = 16 + 4 * static_cast<int>(g.tables.size());
    while (changed && rounds++ < max_rounds) {
        changed = false;
        for (std::size_t i = 0; i < g.tables.size(); ++i) {
            const std::size_t j = g.tables[i];
            const int maxb = max_hot_grid(inst.specs[j], inst.stats[j]);
            const auto [a, b] = g.cuts[i];
            const std::pair<int, int> variants[4] = {
                {a + 1, std::max(b, a + 1)}, {a, b + 1}, {a - 1, b}, {a, b - 1}};
            for (const auto& [na, nb] : variants) {
                if (na < 0 || nb < na || nb > maxb) continue;
                const auto cur = make_placement(inst, j, -1, a, b);
                const auto nxt = make_placement(inst, j, -1, na, nb);
                if (g.bytes_dram - cur.dram_bytes + nxt.dram_bytes > inst.profile.cap_dram) continue;
                if (g.sum_cap - cur.tt_cap_bytes + nxt.tt_cap_bytes > cap_bram) continue;
                const double new_cost = std::max({g.sum_dram - cur.cost_dram + nxt.cost_dram,
                                                  g.sum_tt - cur.cost_tt + nxt.cost_tt,
                                                  g.sum_ssd - cur.cost_ssd + nxt.cost_ssd});
                if (new_cost < g.cost() - 1e-12 * std::max(1.0, g.cost())) {
                    g.cuts[i] = {na, nb};
                    grid_recompute(inst, g);
                    changed = true;
                    break;
                }
            }
        }
    }
}

inline bool grid_fits(const PlannerInstance& inst, const DeviceGrid& g) {
    return g.bytes_dram <= inst.profile.cap_dram && g.bytes_ssd <= inst.profile.cap_ssd &&
           g.sum_cap <= static_cast<double>(inst.profile.cap_bram) +
                            1e-6 * std::max<double>(1.0, static_cast<double>(inst.profile.cap_bram));
}

}  // namespace detail

inline PlannerSolution solve_heuristic(const PlannerInstance& inst, const SolverOptions& opts = {}) {
    inst.validate();
    const int M = inst.profile.devices;
    const std::size_t J = inst.specs.size();

    std::optional<PlannerSolution> best;
    std::optional<detail::SolutionKey> best_key;

    const int k_lo = opts.force_emb_devices > 0 ? opts.force_emb_devices : 1;
    const int k_hi = opts.force_emb_devices > 0 ? opts.force_emb_devices : M - 1;

    for (int k = k_lo; k <= k_hi && k <= M - 1; ++k) {
        const int n_mlp = M - k;
        std::vector<CoreType> core(static_cast<std::size_t>(M), CoreType::mlp);
        std::vector<int> emb_devices;
        for (int m = n_mlp; m < M; ++m) {
            core[static_cast<std::size_t>(m)] = CoreType::emb;
            emb_devices.push_back(m);
        }

        // LPT on the all-SSD cost estimate.
        std::vector<std::size_t> order(J);
        for (std::size_t j = 0; j < J; ++j) order[j] = j;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double wa = inst.stats[a].avg_pf * inst.profile.batch * inst.profile.t_ssd;
            const double wb = inst.stats[b].avg_pf * inst.profile.batch * inst.profile.t_ssd;
            if (wa != wb) return wa > wb;
            return a < b;
        });
        std::vector<detail::DeviceGrid> grids(static_cast<std::size_t>(k));
        std::vector<double> load(static_cast<std::size_t>(k), 0.0);
        for (std::size_t j : order) {
            std::size_t target = 0;
            for (std::size_t g = 1; g < grids.size(); ++g) {
                if (load[g] < load[target]) target = g;
            }
            grids[target].tables.push_back(j);
            load[target] += inst.stats[j].avg_pf * inst.profile.batch * inst.profile.t_ssd;
        }
        for (auto& g : grids) std::sort(g.tables.begin(), g.tables.end());
        for (auto& g : grids) detail::grid_greedy(inst, g);

        const auto assemble = [&](const std::vector<detail::DeviceGrid>& gs) {
            std::vector<int> device(J, -1);
            std::vector<std::pair<int, int>> cuts(J, {0, 0});
            for (std::size_t gi = 0; gi < gs.size(); ++gi) {
                for (std::size_t i = 0; i < gs[gi].tables.size(); ++i) {
                    device[gs[gi].tables[i]] = emb_devices[gi];
                    cuts[gs[gi].tables[i]] = gs[gi].cuts[i];
                }
            }
            PlannerSolution sol = materialize(inst, core, device, cuts);
            sol.backend = "heuristic";
            return sol;
        };

        bool fits = true;
        for (const auto& g : grids) fits = fits && detail::grid_fits(inst, g);
        if (!fits) continue;

        PlannerSolution current = assemble(grids);

        // Local search: relocate single tables between EMB devices while the
        // total cost improves.
        const int max_passes = J <= 64 ? 16 : 4;
        for (int pass = 0; pass < max_passes; ++pass) {
            bool improved = false;
            for (std::size_t gi = 0; gi < grids.size() && k > 1; ++gi) {
                for (std::size_t ti = 0; ti < grids[gi].tables.size(); ++ti) {
                    const std::size_t j = grids[gi].tables[ti];
                    for (std::size_t gj = 0; gj < grids.size(); ++gj) {
                        if (gj == gi) continue;
                        detail::DeviceGrid src = grids[gi];
                        detail::DeviceGrid dst = grids[gj];
                        src.tables.erase(std::find(src.tables.begin(), src.tables.end(), j));
                        dst.tables.insert(std::lower_bound(dst.tables.begin(), dst.tables.end(), j), j);
                        detail::grid_greedy(inst, src);
                        detail::grid_greedy(inst, dst);
                        if (!detail::grid_fits(inst, src) || !detail::grid_fits(inst, dst)) continue;
                        auto trial = grids;
                        trial[gi] = src;
                        trial[gj] = dst;
                        PlannerSolution cand = assemble(trial);
                        if (cand.total_cost < current.total_cost - 1e-12 * std::max(1.0, current.total_cost)) {
                            grids = std::move(trial);
                            current = std::move(cand);
                            improved = true;
                            break;
                        }
                    }
                    if (improved) break;
                }
                if (improved) break;
            }
            if (!improved) break;
        }

        auto key = detail::key_of(current);
        if (!best_key || key.better_than(*best_key)) {
            best = std::move(current);
            best_key = std::move(key);
        }
    }

    if (!best) throw detail::ssd_infeasibility(inst);
    return *best;
}

inline PlannerSolution solve(const PlannerInstance& inst, const SolverOptions& opts = {}) {
    return opts.backend == SolverOptions::Backend::exact ? solve_exact(inst, opts) : solve_heuristic(inst, opts);
}

// ---------------------------------------------------------------------------
// Plan file (JSON)
// ---------------------------------------------------------------------------

inline void save_plan(const PlannerSolution& sol, const std::filesystem::path& path) {
    nlohmann::ordered_json doc;
    doc["backend"] = sol.backend;
    doc["devices"] = nlohmann::ordered_json::array();
    for (std::size_t m = 0; m < sol.core_type.size(); ++m) {
        doc["devices"].push_back(
            {{"device", m}, {"core", sol.core_type[m] == CoreType::emb ? "emb" : "mlp"}});
    }
    doc["tables"] = nlohmann::ordered_json::array();
    for (const auto& t : sol.tables) {
        doc["tables"].push_back({{"table_id", t.table_id},
                                 {"device", t.device},
                                 {"dram_grid", t.dram_grid},
                                 {"ttptr_grid", t.ttptr_grid},
                                 {"pct_dram", t.pct_dram},
                                 {"pct_tt", t.pct_tt},
                                 {"rows_dram", t.rows_dram},
                                 {"rows_tt", t.rows_tt},
                                 {"rows_ssd", t.rows_ssd},
                                 {"dram_bytes", t.dram_bytes},
                                 {"tt_src_bytes", t.tt_src_bytes},
                                 {"ssd_bytes", t.ssd_bytes},
                                 {"tt_cap_bytes", t.tt_cap_bytes},
                                 {"cost_dram", t.cost_dram},
                                 {"cost_tt", t.cost_tt},
                                 {"cost_ssd", t.cost_ssd}});
    }
    doc["costs"] = {{"device_dram", sol.dev_cost_dram}, {"device_tt", sol.dev_cost_tt},
                    {"device_ssd", sol.dev_cost_ssd},   {"emb", sol.emb_cost},
                    {"mlp_bot", sol.mlp_bot_cost},      {"mlp_top", sol.mlp_top_cost},
                    {"frontend", sol.frontend_cost},    {"total", sol.total_cost}};
    std::ofstream os(path);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    os << doc.dump(2) << '\n';
}

inline PlannerSolution load_plan(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open " + path.string());
    nlohmann::json doc;
    try {
        is >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(path.string() + ": " + e.what());
    }
    PlannerSolution sol;
    try {
        sol.backend = doc.value("backend", "");
        for (const auto& d : doc.at("devices")) {
            sol.core_type.push_back(d.at("core").get<std::string>() == "emb" ? CoreType::emb : CoreType::mlp);
        }
        for (const auto& t : doc.at("tables")) {
            TablePlacement p;
            p.table_id = t.at("table_id").get<int>();
            p.device = t.at("device").get<int>();
            p.dram_grid = t.at("dram_grid").get<int>();
            p.ttptr_grid = t.at("ttptr_grid").get<int>();
            p.pct_dram = t.at("pct_dram").get<double>();
            p.pct_tt = t.at("pct_tt").get<double>();
            p.rows_dram = t.at("rows_dram").get<std::int64_t>();
            p.rows_tt = t.at("rows_tt").get<std::int64_t>();
            p.rows_ssd = t.at("rows_ssd").get<std::int64_t>();
            p.dram_bytes = t.at("dram_bytes").get<std::int64_t>();
            p.tt_src_bytes = t.at("tt_src_bytes").get<std::int64_t>();
            p.ssd_bytes = t.at("ssd_bytes").get<std::int64_t>();
            p.tt_cap_bytes = t.at("tt_cap_bytes").get<double>();
            p.cost_dram = t.at("cost_dram").get<double>();
            p.cost_tt = t.at("cost_tt").get<double>();
            p.cost_ssd = t.at("cost_ssd").get<double>();
            sol.tables.push_back(p);
        }
        const auto& c = doc.at("costs");
        sol.dev_cost_dram = c.at("device_dram").get<std::vector<double>>();
        sol.dev_cost_tt = c.at("device_tt").get<std::vector<double>>();
        sol.dev_cost_ssd = c.at("device_ssd").get<std::vector<double>>();
        sol.emb_cost = c.at("emb").get<double>();
        sol.mlp_bot_cost = c.at("mlp_bot").get<double>();
        sol.mlp_top_cost = c.at("mlp_top").get<double>();
        sol.frontend_cost = c.at("frontend").get<double>();
        sol.total_cost = c.at("total").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(path.string() + ": " + e.what());
    }
    return sol;
}

// ---------------------------------------------------------------------------
// LP-text export of the full formulation (Gurobi/CPLEX LP dialect, big-M
// linearization for products of binaries with bounded continuous terms).
// ---------------------------------------------------------------------------

inline std::string export_lp(const PlannerInstance& inst) {
    inst.validate();
    const int M = inst.profile.devices;
    const std::size_t J = inst.specs.size();
    const auto& prof = inst.profile;
    std::ostringstream os;
    char buf[64];
    const auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };

    os << "\\ Tiered-sharding placement model: minimize total batch cost C\n";
    os << "Minimize\n obj: C\n";
    os << "Subject To\n";

    os << "\\ " << eq::objective << ": frontend + top MLP bound the objective\n";
    os << " c_obj: c_fnt + c_mlp_top - C <= 0\n";

    os << "\\ " << eq::device_alloc << ": between 1 and M-1 EMB cores\n";
    os << " c_dev_lo:";
    for (int m = 0; m < M; ++m) os << " + d_" << m;
    os << " >= 1\n c_dev_hi:";
    for (int m = 0; m < M; ++m) os << " + d_" << m;
    os << " <= " << (M - 1) << "\n";

    for (std::size_t j = 0; j < J; ++j) {
        os << "\\ " << eq::table_assignment << ": table " << inst.specs[j].table_id
           << " lands on exactly one device\n c_asg_" << j << ":";
        for (int m = 0; m < M; ++m) os << " + p_" << m << "_" << j;
        os << " = 1\n";
        os << "\\ " << eq::emb_core_only << ": only EMB-core devices may host tables\n";
        for (int m = 0; m < M; ++m) {
            os << " c_emb_only_" << m << "_" << j << ": p_" << m << "_" << j << " - d_" << m << " <= 0\n";
        }
    }

    for (std::size_t j = 0; j < J; ++j) {
        const auto& spec = inst.specs[j];
        const auto& st = inst.stats[j];
        const int S = st.step;
        const double row_bytes = static_cast<double>(spec.dim) * spec.elem_bytes;
        const double emb_bytes = static_cast<double>(spec.total_bytes());
        const double volume = st.avg_pf * prof.batch;

        os << "\\ table " << spec.table_id << " grid selectors (one-hot, " << eq::grid_domain << "-12, 14-21)\n";
        for (const char* var : {"xd", "xt", "xp", "xr"}) {
            os << " c_" << var << "_onehot_" << j << ":";
            for (int i = 0; i <= S; ++i) os << " + " << var << "_" << j << "_" << i;
            os << " = 1\n";
        }
        os << " c_pctd_" << j << ": pctd_" << j;
        for (int i = 1; i <= S; ++i) os << " - " << num(static_cast<double>(i) / S) << " xd_" << j << "_" << i;
        os << " = 0\n";
        os << " c_pctt_" << j << ": pctt_" << j;
        for (int i = 1; i <= S; ++i) os << " - " << num(static_cast<double>(i) / S) << " xt_" << j << "_" << i;
        os << " = 0\n";
        os << "\\ DRAM and TT regions are contiguous in hotness order: the TT pointer\n";
        os << "\\ fraction equals pct_dram + pct_tt\n";
        os << " c_ptr_" << j << ": pctd_" << j << " + pctt_" << j;
        for (int i = 1; i <= S; ++i) os << " - " << num(static_cast<double>(i) / S) << " xp_" << j << "_" << i;
        os << " = 0\n";

        os << "\\ " << eq::dram_bytes << ": DRAM byte footprint via the ICDF\n";
        os << " c_memd_" << j << ": memd_" << j;
        for (int i = 1; i <= S; ++i) {
            const double bytes = st.icdf[static_cast<std::size_t>(i)] * static_cast<double>(spec.rows) * row_bytes;
            if (bytes != 0.0) os << " - " << num(bytes) << " xd_" << j << "_" << i;
        }
        os << " = 0\n";
        os << "\\ " << eq::tt_bytes << ": uncompressed TT-region bytes via the ICDF\n";
        os << " c_memtt_" << j << ": memtt_" << j << " + memd_" << j;
        for (int i = 1; i <= S; ++i) {
            const double bytes = st.icdf[static_cast<std::size_t>(i)] * static_cast<double>(spec.rows) * row_bytes;
            if (bytes != 0.0) os << " - " << num(bytes) << " xp_" << j << "_" << i;
        }
        os << " = 0\n";

        os << "\\ " << eq::tt_rows << ": TT-region row fraction selects the size-curve point;\n";
        os << "\\ the grid point brackets the exact fraction from above within 1/step\n";
        os << " c_rowtt_lo_" << j << ":";
        for (int i = 1; i <= S; ++i) os << " + " << num(static_cast<double>(i) / S) << " xr_" << j << "_" << i;
        for (int i = 1; i <= S; ++i) os << " - " << num(st.icdf[static_cast<std::size_t>(i)]) << " xp_" << j << "_" << i;
        for (int i = 1; i <= S; ++i) os << " + " << num(st.icdf[static_cast<std::size_t>(i)]) << " xd_" << j << "_" << i;
        os << " >= 0\n";
        os << " c_rowtt_hi_" << j << ":";
        for (int i = 1; i <= S; ++i) os << " + " << num(static_cast<double>(i) / S) << " xr_" << j << "_" << i;
        for (int i = 1; i <= S; ++i) os << " - " << num(st.icdf[static_cast<std::size_t>(i)]) << " xp_" << j << "_" << i;
        for (int i = 1; i <= S; ++i) os << " + " << num(st.icdf[static_cast<std::size_t>(i)]) << " xd_" << j << "_" << i;
        os << " <= " << num(1.0 / S) << "\n";

        os << "\\ " << eq::tt_cap_bytes << ": compressed TT bytes from the size curve\n";
        os << " c_ttcap_" << j << ": ttcap_" << j;
        for (int i = 1; i <= S; ++i) {
            if (st.tt_cm[static_cast<std::size_t>(i)] != 0.0)
                os << " - " << num(st.tt_cm[static_cast<std::size_t>(i)]) << " xr_" << j << "_" << i;
        }
        os << " = 0\n";

        os << "\\ " << eq::hot_cap << ": hot threshold\n";
        os << " c_hot_" << j << ": pctd_" << j << " + pctt_" << j << " <= " << num(spec.hot_cap) << "\n";

        os << "\\ tier access costs (per-table)\n";
        os << " c_cd_" << j << ": cd_" << j << " - " << num(volume * prof.t_dram) << " pctd_" << j << " = 0\n";
        os << " c_ct_" << j << ": ct_" << j << " - " << num(volume * prof.t_tt) << " pctt_" << j << " = 0\n";
        os << " c_cs_" << j << ": cs_" << j << " + " << num(volume * prof.t_ssd) << " pctd_" << j << " + "
           << num(volume * prof.t_ssd) << " pctt_" << j << " = " << num(volume * prof.t_ssd) << "\n";

        // Big-M products w*_m_j = p_mj * (continuous), bounded by the table's
        // own maxima.
        const double cost_bound = volume * std::max({prof.t_dram, prof.t_tt, prof.t_ssd});
        for (int m = 0; m < M; ++m) {
            const auto prod = [&](const std::string& w, const std::string& x, double bound) {
                os << " c_" << w << "_ub1_" << m << "_" << j << ": " << w << "_" << m << "_" << j << " - " << x
                   << "_" << j << " <= 0\n";
                os << " c_" << w << "_ub2_" << m << "_" << j << ": " << w << "_" << m << "_" << j << " - "
                   << num(bound) << " p_" << m << "_" << j << " <= 0\n";
                os << " c_" << w << "_lb_" << m << "_" << j << ": " << w << "_" << m << "_" << j << " - " << x
                   << "_" << j << " - " << num(bound) << " p_" << m << "_" << j << " >= " << num(-bound) << "\n";
            };
            prod("wmemd", "memd", emb_bytes);
            prod("wmemtt", "memtt", emb_bytes);
            prod("wttcap", "ttcap", st.tt_cm[static_cast<std::size_t>(st.step)]);
            prod("wcd", "cd", cost_bound);
            prod("wct", "ct", cost_bound);
            prod("wcs", "cs", cost_bound);
        }
    }

    for (int m = 0; m < M; ++m) {
        os << "\\ " << eq::dram_capacity << " / " << eq::ssd_capacity << " / " << eq::bram_capacity
           << ": device " << m << " capacities\n";
        os << " c_cap_dram_" << m << ":";
        for (std::size_t j = 0; j < J; ++j) os << " + wmemd_" << m << "_" << j;
        os << " <= " << prof.cap_dram << "\n";
        os << " c_cap_ssd_" << m << ":";
        for (std::size_t j = 0; j < J; ++j) {
            os << " + " << num(static_cast<double>(inst.specs[j].total_bytes())) << " p_" << m << "_" << j
               << " - wmemd_" << m << "_" << j << " - wmemtt_" << m << "_" << j;
        }
        os << " <= " << prof.cap_ssd << "\n";
        os << " c_cap_bram_" << m << ":";
        for (std::size_t j = 0; j < J; ++j) os << " + wttcap_" << m << "_" << j;
        os << " <= " << prof.cap_bram << "\n";

        os << "\\ " << eq::tier_cost_sums << "-30: device tier costs, " << eq::emb_cost
           << ": embedding cost dominates each tier\n";
        os << " c_emb_dram_" << m << ": c_emb";
        for (std::size_t j = 0; j < J; ++j) os << " - wcd_" << m << "_" << j;
        os << " >= 0\n";
        os << " c_emb_tt_" << m << ": c_emb";
        for (std::size_t j = 0; j < J; ++j) os << " - wct_" << m << "_" << j;
        os << " >= 0\n";
        os << " c_emb_ssd_" << m << ": c_emb";
        for (std::size_t j = 0; j < J; ++j) os << " - wcs_" << m << "_" << j;
        os << " >= 0\n";
    }

    // MLP costs: t * (BS/BS_mini) = c * n_mlp, linearized via per-device
    // shares y_m <= c restricted to MLP devices.
    const double passes = static_cast<double>(prof.batch) / prof.mini_batch;
    const double top_total = prof.t_mlp_top * passes;
    const double bot_total = prof.t_mlp_bot * passes;
    os << "\\ " << eq::mlp_top_cost << " / " << eq::mlp_bot_cost
       << ": per-core MLP cost shares over the MLP devices\n";
    for (int m = 0; m < M; ++m) {
        os << " c_ytop_ub1_" << m << ": ytop_" << m << " - c_mlp_top <= 0\n";
        os << " c_ytop_ub2_" << m << ": ytop_" << m << " + " << num(top_total) << " d_" << m << " <= "
           << num(top_total) << "\n";
        os << " c_ytop_lb_" << m << ": ytop_" << m << " - c_mlp_top + " << num(top_total) << " d_" << m
           << " >= 0\n";
        os << " c_ybot_ub1_" << m << ": ybot_" << m << " - c_mlp_bot <= 0\n";
        os << " c_ybot_ub2_" << m << ": ybot_" << m << " + " << num(bot_total) << " d_" << m << " <= "
           << num(bot_total) << "\n";
        os << " c_ybot_lb_" << m << ": ybot_" << m << " - c_mlp_bot + " << num(bot_total) << " d_" << m
           << " >= 0\n";
    }
    os << " c_mlp_top_sum:";
    for (int m = 0; m < M; ++m) os << " + ytop_" << m;
    os << " = " << num(top_total) << "\n";
    os << " c_mlp_bot_sum:";
    for (int m = 0; m < M; ++m) os << " + ybot_" << m;
    os << " = " << num(bot_total) << "\n";

    os << "\\ " << eq::frontend_cost << ": frontend dominates bottom MLP and embedding\n";
    os << " c_fnt_bot: c_fnt - c_mlp_bot >= 0\n";
    os << " c_fnt_emb: c_fnt - c_emb >= 0\n";

    os << "Bounds\n";
    for (std::size_t j = 0; j < J; ++j) {
        os << " 0 <= pctd_" << j << " <= 1\n 0 <= pctt_" << j << " <= 1\n";
    }
    os << "Binary\n";
    for (int m = 0; m < M; ++m) os << " d_" << m << "\n";
    for (int m = 0; m < M; ++m) {
        for (std::size_t j = 0; j < J; ++j) os << " p_" << m << "_" << j << "\n";
    }
    for (std::size_t j = 0; j < J; ++j) {
        for (int i = 0; i <= inst.stats[j].step; ++i) {
            os << " xd_" << j << "_" << i << " xt_" << j << "_" << i << " xp_" << j << "_" << i << " xr_" << j
               << "_" << i << "\n";
        }
    }
    os << "End\n";
    return os.str();
}

}  // namespace tiershard
