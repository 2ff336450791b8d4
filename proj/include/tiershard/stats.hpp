#pragma once

// Per-table access statistics feeding the placement cost model: inverse CDF
// of row hotness sampled on a fixed grid, average pooling factor, and the
// compressed-size curve for tensor-train regions.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "tiershard/common.hpp"
#include "tiershard/trace.hpp"
#include "tiershard/tt.hpp"

namespace tiershard {

struct TableStats {
    int table_id = 0;
    int step = 1;                     // grid resolution: min(rows, 100)
    std::vector<double> icdf;         // step+1 row fractions; icdf[i] covers access fraction i/step
    double avg_pf = 0.0;              // mean lookups per sample
    std::vector<double> tt_cm;        // step+1 compressed byte sizes for a region of row fraction i/step
    std::uint64_t total_accesses = 0;
    bool cold = false;                // no accesses observed

    // icdf values are exact row counts over rows, so this recovers integers.
    std::int64_t icdf_rows(int i, std::int64_t rows) const {
        return std::llround(icdf[static_cast<std::size_t>(i)] * static_cast<double>(rows));
    }
};

struct HardwareProfile {
    int devices = 2;                  // M
    std::int64_t cap_bram = 1;        // bytes per device
    std::int64_t cap_dram = 1;
    std::int64_t cap_ssd = 1;
    double t_dram = 1.0;              // ns per lookup
    double t_ssd = 1.0;
    double t_tt = 1.0;
    double t_mlp_top = 1.0;           // ns per mini-batch pass
    double t_mlp_bot = 1.0;
    int batch = 1;                    // BS
    int mini_batch = 1;               // BS_mini
    double transfer_ns = 0.0;         // additive host/all-to-all constant

    void validate() const {
        if (devices < 2) throw config_error("profile: at least 2 devices required");
        if (cap_bram < 0 || cap_dram < 0 || cap_ssd < 0) throw config_error("profile: negative capacity");
        if (!(t_dram > 0.0) || !(t_ssd > 0.0) || !(t_tt > 0.0) || !(t_mlp_top > 0.0) || !(t_mlp_bot > 0.0))
            throw config_error("profile: latencies must be positive");
        if (batch < 1 || mini_batch < 1 || mini_batch > batch)
            throw config_error("profile: need 1 <= mini_batch <= batch");
        if (transfer_ns < 0.0) throw config_error("profile: negative transfer latency");
    }
};

namespace detail {

struct HotnessCounts {
    std::vector<std::uint64_t> sorted_counts;   // descending
    std::vector<std::uint64_t> prefix;          // prefix[k] = accesses covered by k hottest rows
    std::uint64_t total = 0;
    std::int64_t distinct = 0;
};

inline std::size_t table_slot(const AccessTrace& trace, int table_id) {
    for (std::size_t t = 0; t < trace.tables.size(); ++t) {
        if (trace.tables[t].table_id == table_id) return t;
    }
    throw config_error("table " + std::to_string(table_id) + " not present in trace");
}

inline std::vector<std::uint64_t> access_counts(const AccessTrace& trace, std::size_t slot) {
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(trace.tables[slot].rows), 0);
    for (const auto& sample : trace.samples) {
        for (std::uint32_t idx : sample[slot]) ++counts[idx];
    }
    return counts;
}

inline HotnessCounts hotness_counts(const AccessTrace& trace, std::size_t slot) {
    HotnessCounts h;
    h.sorted_counts = access_counts(trace, slot);
    std::sort(h.sorted_counts.begin(), h.sorted_counts.end(), std::greater<>());
    h.prefix.resize(h.sorted_counts.size() + 1, 0);
    for (std::size_t k = 0; k < h.sorted_counts.size(); ++k) {
        h.prefix[k + 1] = h.prefix[k] + h.sorted_counts[k];
        if (h.sorted_counts[k] > 0) ++h.distinct;
    }
    h.total = h.prefix.back();
    return h;
}

// Minimal k such that the k hottest rows cover at least `need` accesses
// (prefix is non-decreasing).
inline std::int64_t min_rows_covering(const HotnessCounts& h, double need) {
    auto it = std::lower_bound(h.prefix.begin(), h.prefix.end(), need,
                               [](std::uint64_t lhs, double rhs) { return static_cast<double>(lhs) < rhs; });
    return it - h.prefix.begin();
}

}  // namespace detail

// Rows ordered hottest first: by descending access count, ties and
// never-accessed rows by ascending row index.
inline std::vector<std::uint32_t> hotness_order(const AccessTrace& trace, int table_id) {
    const std::size_t slot = detail::table_slot(trace, table_id);
    const auto counts = detail::access_counts(trace, slot);
    std::vector<std::uint32_t> order(counts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return counts[a] > counts[b]; });
    return order;
}

// Exact inverse CDF: the minimal fraction of hottest rows whose accesses
// cover at least `coverage` of all accesses.
inline double icdf_fraction(const AccessTrace& trace, int table_id, double coverage) {
    if (!(coverage >= 0.0) || coverage > 1.0) throw config_error("icdf_fraction: coverage must be in [0, 1]");
    const std::size_t slot = detail::table_slot(trace, table_id);
    const auto h = detail::hotness_counts(trace, slot);
    if (h.total == 0) return 0.0;
    const double need = coverage * static_cast<double>(h.total) * (1.0 - 1e-12);
    const std::int64_t k = detail::min_rows_covering(h, need);
    return static_cast<double>(k) / static_cast<double>(trace.tables[slot].rows);
}

// ICDF sampled on the grid i/step, step = min(rows, 100). Grid thresholds are
// compared in integer arithmetic so the sampled values are exact row counts.
inline TableStats compute_cdf(const AccessTrace& trace, int table_id) {
    const std::size_t slot = detail::table_slot(trace, table_id);
    const auto& spec = trace.tables[slot];
    TableStats stats;
    stats.table_id = table_id;
    stats.step = static_cast<int>(std::min<std::int64_t>(spec.rows, 100));
    stats.icdf.assign(static_cast<std::size_t>(stats.step) + 1, 0.0);

    const auto h = detail::hotness_counts(trace, slot);
    stats.total_accesses = h.total;
    stats.cold = (h.total == 0);
    if (stats.cold) return stats;

    for (int i = 1; i <= stats.step; ++i) {
        // minimal k with prefix[k] * step >= i * total
        const std::uint64_t need = static_cast<std::uint64_t>(i) * h.total;
        std::int64_t lo = 0;
        std::int64_t hi = static_cast<std::int64_t>(h.prefix.size()) - 1;
        while (lo < hi) {
            const std::int64_t mid = (lo + hi) / 2;
            if (h.prefix[static_cast<std::size_t>(mid)] * static_cast<std::uint64_t>(stats.step) >= need) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        stats.icdf[static_cast<std::size_t>(i)] = static_cast<double>(lo) / static_cast<double>(spec.rows);
    }
    return stats;
}

inline double compute_pf(const AccessTrace& trace, int table_id) {
    if (trace.samples.empty()) throw config_error("compute_pf: empty trace");
    const std::size_t slot = detail::table_slot(trace, table_id);
    std::uint64_t lookups = 0;
    for (const auto& sample : trace.samples) lookups += sample[slot].size();
    return static_cast<double>(lookups) / static_cast<double>(trace.samples.size());
}

// Compressed byte size of a region spanning row fraction i/step, for every
// grid point. Depends only on the region's row count: the region is padded to
// the canonical factorization and the cores sized by the clamped ranks.
inline void compute_tt_cm_curve(const EmbTableSpec& spec, TableStats& stats, std::int64_t rank, int tt_dims) {
    if (rank < 1) throw config_error("tt_cm curve: rank must be >= 1");
    if (tt_dims < 2) throw config_error("tt_cm curve: need at least 2 cores");
    stats.tt_cm.assign(static_cast<std::size_t>(stats.step) + 1, 0.0);
    for (int i = 1; i <= stats.step; ++i) {
        const std::int64_t region_rows =
            (static_cast<std::int64_t>(i) * spec.rows + stats.step - 1) / stats.step;  // ceil
        const TTShape shape = make_tt_shape(region_rows, spec.dim, tt_dims, rank);
        stats.tt_cm[static_cast<std::size_t>(i)] =
            static_cast<double>(shape.param_count()) * static_cast<double>(spec.elem_bytes);
    }
}

inline std::vector<TableStats> analyze_trace(const AccessTrace& trace, std::int64_t tt_rank, int tt_dims) {
    std::vector<TableStats> all;
    all.reserve(trace.tables.size());
    for (const auto& spec : trace.tables) {
        TableStats s = compute_cdf(trace, spec.table_id);
        s.avg_pf = compute_pf(trace, spec.table_id);
        compute_tt_cm_curve(spec, s, tt_rank, tt_dims);
        all.push_back(std::move(s));
    }
    return all;
}

// ---------------------------------------------------------------------------
// Stats file (JSON): the planner's sole statistical input.
// ---------------------------------------------------------------------------

inline void save_stats(const std::vector<TableStats>& stats, const std::filesystem::path& path) {
    nlohmann::ordered_json doc;
    doc["tables"] = nlohmann::ordered_json::array();
    for (const auto& s : stats) {
        doc["tables"].push_back({{"table_id", s.table_id},
                                 {"step", s.step},
                                 {"icdf", s.icdf},
                                 {"avg_pf", s.avg_pf},
                                 {"tt_cm", s.tt_cm},
                                 {"total_accesses", s.total_accesses},
                                 {"cold", s.cold}});
    }
    std::ofstream os(path);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    os << doc.dump(2) << '\n';
}

inline std::vector<TableStats> load_stats(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open " + path.string());
    nlohmann::json doc;
    try {
        is >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(path.string() + ": " + e.what());
    }
    std::vector<TableStats> stats;
    try {
        for (const auto& item : doc.at("tables")) {
            TableStats s;
            s.table_id = item.at("table_id").get<int>();
            s.step = item.at("step").get<int>();
            s.icdf = item.at("icdf").get<std::vector<double>>();
            s.avg_pf = item.at("avg_pf").get<double>();
            s.tt_cm = item.at("tt_cm").get<std::vector<double>>();
            s.total_accesses = item.at("total_accesses").get<std::uint64_t>();
            s.cold = item.value("cold", false);
            if (s.icdf.size() != static_cast<std::size_t>(s.step) + 1 ||
                s.tt_cm.size() != static_cast<std::size_t>(s.step) + 1)
                throw parse_error(path.string() + ": grid arrays must have step+1 entries");
            stats.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(path.string() + ": " + e.what());
    }
    return stats;
}

inline nlohmann::ordered_json profile_to_json(const HardwareProfile& p) {
    return {{"devices", p.devices},
            {"cap_bram_bytes", p.cap_bram},
            {"cap_dram_bytes", p.cap_dram},
            {"cap_ssd_bytes", p.cap_ssd},
            {"t_dram_ns", p.t_dram},
            {"t_ssd_ns", p.t_ssd},
            {"t_tt_ns", p.t_tt},
            {"t_mlp_top_ns", p.t_mlp_top},
            {"t_mlp_bot_ns", p.t_mlp_bot},
            {"batch", p.batch},
            {"mini_batch", p.mini_batch},
            {"transfer_ns", p.transfer_ns}};
}

inline HardwareProfile profile_from_json(const nlohmann::json& j) {
    HardwareProfile p;
    p.devices = j.at("devices").get<int>();
    p.cap_bram = j.at("cap_bram_bytes").get<std::int64_t>();
    p.cap_dram = j.at("cap_dram_bytes").get<std::int64_t>();
    p.cap_ssd = j.at("cap_ssd_bytes").get<std::int64_t>();
    p.t_dram = j.at("t_dram_ns").get<double>();
    p.t_ssd = j.at("t_ssd_ns").get<double>();
    p.t_tt = j.at("t_tt_ns").get<double>();
    p.t_mlp_top = j.at("t_mlp_top_ns").get<double>();
    p.t_mlp_bot = j.at("t_mlp_bot_ns").get<double>();
    p.batch = j.at("batch").get<int>();
    p.mini_batch = j.at("mini_batch").get<int>();
    p.transfer_ns = j.value("transfer_ns", 0.0);
    p.validate();
    return p;
}

}  // namespace tiershard
