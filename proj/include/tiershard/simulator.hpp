#pragma once

// Trace-driven simulator of the multi-device pipeline. Embedding lookups are
// routed through the remap tables to per-device DRAM/TT/SSD tiers; tiers of a
// device run in parallel (max of tier times), devices run in parallel, and
// the batch finishes after max(bottom MLP, embedding) + top MLP. Also hosts
// the analytic cycle models for the EMB and MLP cores used to calibrate
// per-lookup and per-pass latencies.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tiershard/common.hpp"
#include "tiershard/planner.hpp"
#include "tiershard/remap.hpp"
#include "tiershard/tt.hpp"
#include "tiershard/trace.hpp"

namespace tiershard {

struct CoreGeometry {
    int emb_tile_rows = 16;  // output-stationary tile of the EMB core
    int emb_tile_cols = 32;
    int mlp_pe_rows = 8;     // PE array of one MLP compute unit
    int mlp_pe_cols = 16;
    int mlp_cus = 4;
    double clock_ns = 5.0;   // 200 MHz

    void validate() const {
        if (emb_tile_rows < 1 || emb_tile_cols < 1 || mlp_pe_rows < 1 || mlp_pe_cols < 1 || mlp_cus < 1)
            throw config_error("core geometry: extents must be >= 1");
        if (!(clock_ns > 0.0)) throw config_error("core geometry: clock period must be positive");
    }
};

enum class MlpMode { latency_opt, throughput_opt };

namespace detail {

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace detail

// Cycle count for rebuilding one embedding vector from TT cores: the chain of
// slice products runs on the output-stationary array tile by tile, one cycle
// per inner-dim element per tile; reshape overhead is hidden by the
// dual-channel input memory.
inline std::int64_t estimate_tt_cycles(const TTShape& shape, const CoreGeometry& geom) {
    geom.validate();
    shape.validate();
    const int d = shape.order();
    std::int64_t cycles = 0;
    std::int64_t out_rows = shape.col_factors[0];
    for (int k = 1; k < d; ++k) {
        const std::int64_t cols = shape.col_factors[static_cast<std::size_t>(k)] *
                                  shape.ranks[static_cast<std::size_t>(k) + 1];
        const std::int64_t inner = shape.ranks[static_cast<std::size_t>(k)];
        cycles += detail::ceil_div(out_rows, geom.emb_tile_rows) * detail::ceil_div(cols, geom.emb_tile_cols) *
                  inner;
        out_rows *= shape.col_factors[static_cast<std::size_t>(k)];
    }
    return cycles;
}

// Cycle count for one mini-batch through the MLP stack. Throughput mode feeds
// a different slice of the mini-batch to each CU (weights broadcast); latency
// mode broadcasts the input and splits the output columns across CUs.
inline std::int64_t estimate_mlp_cycles(std::span<const int> layer_dims, const CoreGeometry& geom,
                                        int mini_batch, MlpMode mode) {
    geom.validate();
    if (layer_dims.size() < 2) throw config_error("estimate_mlp_cycles: need at least one layer (two dims)");
    if (mini_batch < 1) throw config_error("estimate_mlp_cycles: mini_batch must be >= 1");
    std::int64_t cycles = 0;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const std::int64_t in = layer_dims[l];
        const std::int64_t out = layer_dims[l + 1];
        if (in < 1 || out < 1) throw config_error("estimate_mlp_cycles: layer dims must be >= 1");
        std::int64_t rows, cols;
        if (mode == MlpMode::throughput_opt) {
            rows = detail::ceil_div(mini_batch, geom.mlp_cus);
            cols = out;
        } else {
            rows = mini_batch;
            cols = detail::ceil_div(out, geom.mlp_cus);
        }
        cycles += detail::ceil_div(rows, geom.mlp_pe_rows) * detail::ceil_div(cols, geom.mlp_pe_cols) * in;
    }
    return cycles;
}

// Replace the core-dependent latencies with analytic cycle estimates times
// the clock period; DRAM/SSD latencies and batch geometry stay as supplied.
inline HardwareProfile calibrate_latencies(HardwareProfile profile, const CoreGeometry& geom,
                                           const TTShape& tt_shape, std::span<const int> mlp_top_dims,
                                           std::span<const int> mlp_bot_dims, MlpMode mode) {
    profile.t_tt = static_cast<double>(estimate_tt_cycles(tt_shape, geom)) * geom.clock_ns;
    profile.t_mlp_top =
        static_cast<double>(estimate_mlp_cycles(mlp_top_dims, geom, profile.mini_batch, mode)) * geom.clock_ns;
    profile.t_mlp_bot =
        static_cast<double>(estimate_mlp_cycles(mlp_bot_dims, geom, profile.mini_batch, mode)) * geom.clock_ns;
    profile.validate();
    return profile;
}

// ---------------------------------------------------------------------------
// Trace-driven simulation
// ---------------------------------------------------------------------------

struct BatchRecord {
    std::int64_t batch_id = 0;
    double latency_ns = 0.0;
    std::uint64_t dram_lookups = 0;
    std::uint64_t tt_lookups = 0;
    std::uint64_t ssd_lookups = 0;
    std::vector<double> device_time_ns;  // EMB devices: tier-parallel service time; MLP devices: compute time
    double emb_time_ns = 0.0;
    double mlp_bot_ns = 0.0;
    double mlp_top_ns = 0.0;
};

struct SimReport {
    int batch_size = 0;
    std::int64_t total_samples = 0;
    std::vector<BatchRecord> batches;
    double mean_latency_ns = 0.0;
    double p50_latency_ns = 0.0;
    double p99_latency_ns = 0.0;
    double mean_emb_time_ns = 0.0;
    double ips = 0.0;
    std::uint64_t dram_lookups = 0;
    std::uint64_t tt_lookups = 0;
    std::uint64_t ssd_lookups = 0;
};

inline BatchRecord simulate_batch(const PlannerSolution& plan, const std::vector<RemapTable>& remaps,
                                  const AccessTrace& trace, std::size_t first_sample, std::size_t count,
                                  const HardwareProfile& profile) {
    if (count == 0) throw config_error("simulate_batch: empty window");
    if (first_sample + count > trace.sample_count()) throw config_error("simulate_batch: window escapes trace");
    if (trace.table_count() != plan.tables.size() || remaps.size() != plan.tables.size())
        throw config_error("simulate_batch: plan/remap/trace table counts differ");
    for (std::size_t t = 0; t < plan.tables.size(); ++t) {
        if (trace.tables[t].table_id != plan.tables[t].table_id)
            throw config_error("simulate_batch: trace table " + std::to_string(trace.tables[t].table_id) +
                               " does not match plan table " + std::to_string(plan.tables[t].table_id));
    }

    const int M = static_cast<int>(plan.core_type.size());
    std::vector<std::uint64_t> dram_cnt(static_cast<std::size_t>(M), 0), tt_cnt(static_cast<std::size_t>(M), 0),
        ssd_cnt(static_cast<std::size_t>(M), 0);

    BatchRecord rec;
    for (std::size_t s = first_sample; s < first_sample + count; ++s) {
        for (std::size_t t = 0; t < plan.tables.size(); ++t) {
            const int dev = plan.tables[t].device;
            for (std::uint32_t idx : trace.samples[s][t]) {
                const auto [tier, local] = resolve(remaps[t], idx);
                (void)local;
                switch (tier) {
                    case Tier::dram:
                        ++dram_cnt[static_cast<std::size_t>(dev)];
                        ++rec.dram_lookups;
                        break;
                    case Tier::tt:
                        ++tt_cnt[static_cast<std::size_t>(dev)];
                        ++rec.tt_lookups;
                        break;
                    default:
                        ++ssd_cnt[static_cast<std::size_t>(dev)];
                        ++rec.ssd_lookups;
                        break;
                }
            }
        }
    }

    int n_mlp = 0;
    for (auto c : plan.core_type) n_mlp += (c == CoreType::mlp) ? 1 : 0;
    const double passes = static_cast<double>(detail::ceil_div(static_cast<std::int64_t>(count), profile.mini_batch));
    rec.mlp_bot_ns = n_mlp > 0 ? profile.t_mlp_bot * passes / n_mlp : 0.0;
    rec.mlp_top_ns = n_mlp > 0 ? profile.t_mlp_top * passes / n_mlp : 0.0;

    rec.device_time_ns.assign(static_cast<std::size_t>(M), 0.0);
    for (int m = 0; m < M; ++m) {
        if (plan.core_type[static_cast<std::size_t>(m)] == CoreType::emb) {
            const double service = std::max({static_cast<double>(dram_cnt[static_cast<std::size_t>(m)]) * profile.t_dram,
                                             static_cast<double>(tt_cnt[static_cast<std::size_t>(m)]) * profile.t_tt,
                                             static_cast<double>(ssd_cnt[static_cast<std::size_t>(m)]) * profile.t_ssd});
            rec.device_time_ns[static_cast<std::size_t>(m)] = service;
            rec.emb_time_ns = std::max(rec.emb_time_ns, service);
        } else {
            rec.device_time_ns[static_cast<std::size_t>(m)] = rec.mlp_bot_ns + rec.mlp_top_ns;
        }
    }
    rec.latency_ns = std::max(rec.mlp_bot_ns, rec.emb_time_ns) + rec.mlp_top_ns + profile.transfer_ns;
    return rec;
}

// Consecutive full batches; a trailing partial window is dropped.
inline SimReport simulate_trace(const PlannerSolution& plan, const std::vector<RemapTable>& remaps,
                                const AccessTrace& trace, const HardwareProfile& profile) {
    const std::size_t bs = static_cast<std::size_t>(profile.batch);
    if (trace.sample_count() < bs)
        throw config_error("simulate_trace: trace has " + std::to_string(trace.sample_count()) +
                           " samples, shorter than one batch of " + std::to_string(bs));
    SimReport report;
    report.batch_size = profile.batch;
    for (std::size_t start = 0; start + bs <= trace.sample_count(); start += bs) {
        BatchRecord rec = simulate_batch(plan, remaps, trace, start, bs, profile);
        rec.batch_id = static_cast<std::int64_t>(report.batches.size());
        report.total_samples += static_cast<std::int64_t>(bs);
        report.dram_lookups += rec.dram_lookups;
        report.tt_lookups += rec.tt_lookups;
        report.ssd_lookups += rec.ssd_lookups;
        report.batches.push_back(std::move(rec));
    }

    std::vector<double> lat;
    lat.reserve(report.batches.size());
    double sum = 0.0;
    double emb_sum = 0.0;
    for (const auto& b : report.batches) {
        lat.push_back(b.latency_ns);
        sum += b.latency_ns;
        emb_sum += b.emb_time_ns;
    }
    std::sort(lat.begin(), lat.end());
    const auto pct = [&](double q) {
        const std::size_t n = lat.size();
        const std::size_t k = std::min(n - 1, static_cast<std::size_t>(std::ceil(q * n)) - (q > 0.0 ? 1 : 0));
        return lat[k];
    };
    report.mean_latency_ns = sum / static_cast<double>(report.batches.size());
    report.p50_latency_ns = pct(0.50);
    report.p99_latency_ns = pct(0.99);
    report.mean_emb_time_ns = emb_sum / static_cast<double>(report.batches.size());
    report.ips = sum > 0.0 ? static_cast<double>(report.total_samples) * 1e9 / sum : 0.0;
    return report;
}

// Ablation profiles: level 1 keeps only SSD, level 2 adds DRAM, level 3 is
// the full hierarchy.
inline HardwareProfile ablation_profile(HardwareProfile profile, int level) {
    if (level < 1 || level > 3) throw config_error("ablation level must be 1, 2, or 3");
    if (level <= 2) profile.cap_bram = 0;
    if (level <= 1) profile.cap_dram = 0;
    return profile;
}

// ---------------------------------------------------------------------------
// Report files: per-batch CSV plus a JSON summary.
// ---------------------------------------------------------------------------

inline void save_report_csv(const SimReport& report, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    const std::size_t devices = report.batches.empty() ? 0 : report.batches.front().device_time_ns.size();
    os << "batch_id,latency_ns,dram_lookups,tt_lookups,ssd_lookups,emb_time_ns,mlp_bot_ns,mlp_top_ns";
    for (std::size_t m = 0; m < devices; ++m) os << ",device_" << m << "_ns";
    os << '\n';
    char buf[64];
    const auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        return std::string(buf);
    };
    for (const auto& b : report.batches) {
        os << b.batch_id << ',' << num(b.latency_ns) << ',' << b.dram_lookups << ',' << b.tt_lookups << ','
           << b.ssd_lookups << ',' << num(b.emb_time_ns) << ',' << num(b.mlp_bot_ns) << ',' << num(b.mlp_top_ns);
        for (double t : b.device_time_ns) os << ',' << num(t);
        os << '\n';
    }
}

inline void save_report_json(const SimReport& report, const std::filesystem::path& path) {
    nlohmann::ordered_json doc{{"batch_size", report.batch_size},
                               {"batches", report.batches.size()},
                               {"total_samples", report.total_samples},
                               {"mean_latency_ns", report.mean_latency_ns},
                               {"p50_latency_ns", report.p50_latency_ns},
                               {"p99_latency_ns", report.p99_latency_ns},
                               {"mean_emb_time_ns", report.mean_emb_time_ns},
                               {"ips", report.ips},
                               {"dram_lookups", report.dram_lookups},
                               {"tt_lookups", report.tt_lookups},
                               {"ssd_lookups", report.ssd_lookups}};
    std::ofstream os(path);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    os << doc.dump(2) << '\n';
}

inline SimReport load_report_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open " + path.string());
    nlohmann::json doc;
    try {
        is >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(path.string() + ": " + e.what());
    }
    SimReport r;
    try {
        r.batch_size = doc.at("batch_size").get<int>();
        r.total_samples = doc.at("total_samples").get<std::int64_t>();
        r.mean_latency_ns = doc.at("mean_latency_ns").get<double>();
        r.p50_latency_ns = doc.at("p50_latency_ns").get<double>();
        r.p99_latency_ns = doc.at("p99_latency_ns").get<double>();
        r.mean_emb_time_ns = doc.at("mean_emb_time_ns").get<double>();
        r.ips = doc.at("ips").get<double>();
        r.dram_lookups = doc.at("dram_lookups").get<std::uint64_t>();
        r.tt_lookups = doc.at("tt_lookups").get<std::uint64_t>();
        r.ssd_lookups = doc.at("ssd_lookups").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(path.string() + ": " + e.what());
    }
    return r;
}

}  // namespace tiershard
