#pragma once

// Embedding access-trace data model: table descriptions, per-sample multi-hot
// row lookups, loading/saving in a text and a compact binary format, and a
// seeded power-law synthesizer for workload studies without real datasets.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tiershard/common.hpp"

namespace tiershard {

struct EmbTableSpec {
    int table_id = 0;
    std::int64_t rows = 1;    // row count
    int dim = 1;              // embedding dimension (elements per row)
    int elem_bytes = 4;       // bytes per element
    double hot_cap = 1.0;     // cap on the access fraction eligible for DRAM+TT

    std::int64_t total_bytes() const { return rows * dim * elem_bytes; }

    void validate() const {
        if (rows < 1) throw config_error("table " + std::to_string(table_id) + ": rows must be >= 1");
        if (dim < 1) throw config_error("table " + std::to_string(table_id) + ": dim must be >= 1");
        if (elem_bytes < 1) throw config_error("table " + std::to_string(table_id) + ": elem_bytes must be >= 1");
        if (!(hot_cap > 0.0) || hot_cap > 1.0)
            throw config_error("table " + std::to_string(table_id) + ": hot_cap must be in (0, 1]");
    }
};

// Small tables may be cached in full; large tables must keep a cold tail on
// SSD. The cutoff is 0.01% of the largest row count.
inline void apply_hot_cap_policy(std::vector<EmbTableSpec>& tables) {
    std::int64_t max_rows = 1;
    for (const auto& t : tables) max_rows = std::max(max_rows, t.rows);
    for (auto& t : tables) {
        t.hot_cap = (static_cast<double>(t.rows) < 1e-4 * static_cast<double>(max_rows)) ? 1.0 : 0.99;
    }
}

using Lookups = std::vector<std::uint32_t>;

struct AccessTrace {
    std::vector<EmbTableSpec> tables;
    // samples[s][t] = row indices looked up in table t by sample s. Sample
    // order is preserved end-to-end so replays are deterministic.
    std::vector<std::vector<Lookups>> samples;

    std::size_t table_count() const { return tables.size(); }
    std::size_t sample_count() const { return samples.size(); }

    void validate() const {
        for (const auto& t : tables) t.validate();
        for (std::size_t s = 0; s < samples.size(); ++s) {
            if (samples[s].size() != tables.size())
                throw config_error("sample " + std::to_string(s) + ": table slot count mismatch");
            for (std::size_t t = 0; t < tables.size(); ++t) {
                for (std::uint32_t idx : samples[s][t]) {
                    if (static_cast<std::int64_t>(idx) >= tables[t].rows)
                        throw bounds_error("sample " + std::to_string(s) + ", table " + std::to_string(t) +
                                           ": row index " + std::to_string(idx) + " >= rows " +
                                           std::to_string(tables[t].rows));
                }
            }
        }
    }

    bool operator==(const AccessTrace& other) const {
        if (samples != other.samples || tables.size() != other.tables.size()) return false;
        for (std::size_t t = 0; t < tables.size(); ++t) {
            const auto& a = tables[t];
            const auto& b = other.tables[t];
            if (a.table_id != b.table_id || a.rows != b.rows || a.dim != b.dim ||
                a.elem_bytes != b.elem_bytes || a.hot_cap != b.hot_cap)
                return false;
        }
        return true;
    }
};

struct SyntheticTableConfig {
    std::int64_t rows = 1;
    int dim = 64;
    int elem_bytes = 4;
    double mean_pf = 1.0;     // mean lookups per sample
    double hot_cap = 1.0;
};

struct SyntheticTraceConfig {
    std::vector<SyntheticTableConfig> tables;
    double alpha = 1.05;              // power-law exponent
    std::int64_t num_samples = 0;
    std::uint64_t seed = 0;
    bool auto_hot_cap = false;        // derive hot_cap from relative row counts

    void validate() const {
        if (tables.empty()) throw config_error("synthetic config: at least one table required");
        if (!(alpha > 0.0)) throw config_error("synthetic config: alpha must be positive");
        if (num_samples < 0) throw config_error("synthetic config: negative sample count");
        for (const auto& t : tables) {
            if (t.rows < 1) throw config_error("synthetic config: rows must be >= 1");
            if (t.mean_pf < 0.0) throw config_error("synthetic config: mean_pf must be >= 0");
        }
    }
};

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

// Popularity ranks follow Zipf(alpha); rank->row is a seeded permutation so
// hot rows are scattered across the index space. Per-sample lookup counts are
// Poisson around mean_pf, clamped to [0, 4*mean]. Each table uses its own
// RNG stream derived from (seed, table_id), so per-table generation can run
// in parallel without changing the output.
inline AccessTrace generate_trace(const SyntheticTraceConfig& cfg) {
    cfg.validate();
    AccessTrace trace;
    trace.tables.resize(cfg.tables.size());
    for (std::size_t t = 0; t < cfg.tables.size(); ++t) {
        const auto& tc = cfg.tables[t];
        trace.tables[t] = EmbTableSpec{static_cast<int>(t), tc.rows, tc.dim, tc.elem_bytes, tc.hot_cap};
    }
    if (cfg.auto_hot_cap) apply_hot_cap_policy(trace.tables);

    const std::size_t n_samples = static_cast<std::size_t>(cfg.num_samples);
    trace.samples.assign(n_samples, std::vector<Lookups>(cfg.tables.size()));

    for (std::size_t t = 0; t < cfg.tables.size(); ++t) {
        const auto& tc = cfg.tables[t];
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(t)));

        std::vector<std::uint32_t> rank_to_row(static_cast<std::size_t>(tc.rows));
        for (std::size_t r = 0; r < rank_to_row.size(); ++r) rank_to_row[r] = static_cast<std::uint32_t>(r);
        rng.shuffle(rank_to_row);

        ZipfSampler zipf(tc.rows, cfg.alpha);
        const std::int64_t pf_cap =
            tc.mean_pf > 0.0 ? std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(4.0 * tc.mean_pf))) : 0;

        for (std::size_t s = 0; s < n_samples; ++s) {
            std::int64_t pf = std::min(poisson(rng, tc.mean_pf), pf_cap);
            Lookups& lk = trace.samples[s][t];
            lk.reserve(static_cast<std::size_t>(pf));
            for (std::int64_t i = 0; i < pf; ++i) {
                lk.push_back(rank_to_row[static_cast<std::size_t>(zipf.sample(rng))]);
            }
        }
    }
    return trace;
}

// Uniform sample of round(rate*N) samples without replacement, original order
// preserved. Deterministic per seed.
inline AccessTrace subsample(const AccessTrace& trace, double rate, std::uint64_t seed) {
    if (!(rate > 0.0) || rate > 1.0) throw config_error("subsample: rate must be in (0, 1]");
    const std::int64_t n = static_cast<std::int64_t>(trace.sample_count());
    const std::int64_t k = std::llround(rate * static_cast<double>(n));
    if (k == 0) throw config_error("subsample: rate " + std::to_string(rate) + " of " + std::to_string(n) +
                                   " samples selects nothing");

    std::vector<std::uint64_t> idx(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(mix_seed(seed, 0x5ab5a3b1eULL));
    rng.shuffle(idx);
    idx.resize(static_cast<std::size_t>(k));
    std::sort(idx.begin(), idx.end());

    AccessTrace out;
    out.tables = trace.tables;
    out.samples.reserve(idx.size());
    for (std::uint64_t i : idx) out.samples.push_back(trace.samples[static_cast<std::size_t>(i)]);
    return out;
}

// ---------------------------------------------------------------------------
// Table-spec sidecar (JSON)
// ---------------------------------------------------------------------------

inline void save_table_specs(const std::vector<EmbTableSpec>& specs, const std::filesystem::path& path) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& s : specs) {
        arr.push_back({{"table_id", s.table_id},
                       {"row_len", s.rows},
                       {"dim", s.dim},
                       {"df", s.elem_bytes},
                       {"hot_thr", s.hot_cap}});
    }
    std::ofstream os(path);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    os << arr.dump(2) << '\n';
}

inline std::vector<EmbTableSpec> load_table_specs(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open " + path.string());
    nlohmann::json arr;
    try {
        is >> arr;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(path.string() + ": " + e.what());
    }
    if (!arr.is_array()) throw parse_error(path.string() + ": expected a JSON array of table specs");
    std::vector<EmbTableSpec> specs;
    for (const auto& item : arr) {
        EmbTableSpec s;
        try {
            s.table_id = item.at("table_id").get<int>();
            s.rows = item.at("row_len").get<std::int64_t>();
            s.dim = item.at("dim").get<int>();
            s.elem_bytes = item.at("df").get<int>();
            s.hot_cap = item.at("hot_thr").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(path.string() + ": " + e.what());
        }
        s.validate();
        specs.push_back(s);
    }
    return specs;
}

// ---------------------------------------------------------------------------
// Trace files
//
// Text format: one record per non-empty (sample, table) pair:
//   sample_id,table_id,idx0;idx1;...
// Table specs travel in the JSON sidecar. Binary format is self-contained:
//   "SCTR" | version u32 | table count u32 | per table
//   {table_id u32, row_len u64, dim u32, df u32, hot_thr f64} | per sample,
//   per table: count u32 followed by count u32 indices. Little-endian.
// ---------------------------------------------------------------------------

enum class TraceFormat { text, binary };

inline constexpr char kTraceMagic[4] = {'S', 'C', 'T', 'R'};
inline constexpr std::uint32_t kTraceVersion = 1;

inline void save_trace(const AccessTrace& trace, const std::filesystem::path& path, TraceFormat fmt) {
    if (fmt == TraceFormat::text) {
        std::ofstream os(path);
        if (!os) throw io_error("cannot open " + path.string() + " for writing");
        for (std::size_t s = 0; s < trace.samples.size(); ++s) {
            for (std::size_t t = 0; t < trace.samples[s].size(); ++t) {
                const Lookups& lk = trace.samples[s][t];
                if (lk.empty()) continue;
                os << s << ',' << t << ',';
                for (std::size_t i = 0; i < lk.size(); ++i) {
                    if (i) os << ';';
                    os << lk[i];
                }
                os << '\n';
            }
        }
        return;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    os.write(kTraceMagic, 4);
    detail::put_le<std::uint32_t>(os, kTraceVersion);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(trace.tables.size()));
    for (const auto& t : trace.tables) {
        detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.table_id));
        detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(t.rows));
        detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.dim));
        detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.elem_bytes));
        detail::put_le<double>(os, t.hot_cap);
    }
    for (const auto& sample : trace.samples) {
        for (const Lookups& lk : sample) {
            detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(lk.size()));
            for (std::uint32_t idx : lk) detail::put_le<std::uint32_t>(os, idx);
        }
    }
}

namespace detail {

inline AccessTrace load_trace_text(const std::filesystem::path& path, const std::filesystem::path& specs_path) {
    AccessTrace trace;
    trace.tables = load_table_specs(specs_path);
    std::ifstream is(path);
    if (!is) throw io_error("cannot open " + path.string());

    std::string line;
    std::size_t line_no = 0;
    std::int64_t max_sample = -1;
    struct Record {
        std::int64_t sample;
        std::size_t table;
        Lookups lookups;
    };
    std::vector<Record> records;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto where = [&] { return path.string() + " record " + std::to_string(line_no); };
        std::int64_t sample_id = 0;
        std::int64_t table_id = 0;
        std::size_t pos1 = line.find(',');
        std::size_t pos2 = pos1 == std::string::npos ? std::string::npos : line.find(',', pos1 + 1);
        if (pos1 == std::string::npos || pos2 == std::string::npos)
            throw parse_error(where() + ": expected sample_id,table_id,indices");
        try {
            sample_id = std::stoll(line.substr(0, pos1));
            table_id = std::stoll(line.substr(pos1 + 1, pos2 - pos1 - 1));
        } catch (const std::exception&) {
            throw parse_error(where() + ": malformed integer field");
        }
        if (sample_id < 0) throw parse_error(where() + ": negative sample id");
        if (table_id < 0 || static_cast<std::size_t>(table_id) >= trace.tables.size())
            throw parse_error(where() + ": unknown table " + std::to_string(table_id));

        Record rec;
        rec.sample = sample_id;
        rec.table = static_cast<std::size_t>(table_id);
        const std::string rest = line.substr(pos2 + 1);
        std::size_t start = 0;
        while (start < rest.size()) {
            std::size_t end = rest.find(';', start);
            if (end == std::string::npos) end = rest.size();
            const std::string tok = rest.substr(start, end - start);
            if (!tok.empty()) {
                std::int64_t idx;
                try {
                    idx = std::stoll(tok);
                } catch (const std::exception&) {
                    throw parse_error(where() + ": malformed index '" + tok + "'");
                }
                if (idx < 0 || idx >= trace.tables[rec.table].rows)
                    throw bounds_error(where() + ": sample " + std::to_string(sample_id) + " index " +
                                       std::to_string(idx) + " out of range for table " + std::to_string(table_id) +
                                       " (rows " + std::to_string(trace.tables[rec.table].rows) + ")");
                rec.lookups.push_back(static_cast<std::uint32_t>(idx));
            }
            start = end + 1;
        }
        max_sample = std::max(max_sample, sample_id);
        records.push_back(std::move(rec));
    }
    trace.samples.assign(static_cast<std::size_t>(max_sample + 1), std::vector<Lookups>(trace.tables.size()));
    for (auto& rec : records) {
        Lookups& dst = trace.samples[static_cast<std::size_t>(rec.sample)][rec.table];
        dst.insert(dst.end(), rec.lookups.begin(), rec.lookups.end());
    }
    return trace;
}

inline AccessTrace load_trace_binary(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kTraceMagic, 4) != 0)
        throw parse_error(path.string() + ": bad magic, not a binary trace");
    const auto version = get_le<std::uint32_t>(is);
    if (version != kTraceVersion)
        throw parse_error(path.string() + ": unsupported version " + std::to_string(version));
    const auto n_tables = get_le<std::uint32_t>(is);
    AccessTrace trace;
    trace.tables.resize(n_tables);
    for (auto& t : trace.tables) {
        t.table_id = static_cast<int>(get_le<std::uint32_t>(is));
        t.rows = static_cast<std::int64_t>(get_le<std::uint64_t>(is));
        t.dim = static_cast<int>(get_le<std::uint32_t>(is));
        t.elem_bytes = static_cast<int>(get_le<std::uint32_t>(is));
        t.hot_cap = get_le<double>(is);
        t.validate();
    }
    if (n_tables == 0) return trace;
    std::vector<Lookups> sample(n_tables);
    std::size_t slot = 0;
    std::int64_t record = 0;
    while (true) {
        is.peek();
        if (is.eof()) break;
        const auto count = get_le<std::uint32_t>(is);
        ++record;
        Lookups lk(count);
        for (auto& idx : lk) {
            idx = get_le<std::uint32_t>(is);
            if (static_cast<std::int64_t>(idx) >= trace.tables[slot].rows)
                throw bounds_error(path.string() + " record " + std::to_string(record) + ": sample " +
                                   std::to_string(trace.samples.size()) + " index " + std::to_string(idx) +
                                   " out of range for table " + std::to_string(slot));
        }
        sample[slot] = std::move(lk);
        if (++slot == n_tables) {
            trace.samples.push_back(std::move(sample));
            sample.assign(n_tables, {});
            slot = 0;
        }
    }
    if (slot != 0) throw parse_error(path.string() + ": truncated trailing sample");
    return trace;
}

}  // namespace detail

inline AccessTrace load_trace(const std::filesystem::path& path, TraceFormat fmt,
                              const std::optional<std::filesystem::path>& specs_path = std::nullopt) {
    if (fmt == TraceFormat::text) {
        if (!specs_path) throw config_error("text trace format requires a table-spec sidecar path");
        return detail::load_trace_text(path, *specs_path);
    }
    return detail::load_trace_binary(path);
}

}  // namespace tiershard
