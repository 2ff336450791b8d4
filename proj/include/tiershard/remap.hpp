#pragma once

// Remapping layer: translates raw sparse-feature row indices into packed
// 32-bit tier-local addresses, {device_id[1:0], emb_idx[29:0]}. device_id 0
// reads DRAM, 1 the TT region, 2 SSD. One entry per table row.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include "tiershard/common.hpp"
#include "tiershard/planner.hpp"

namespace tiershard {

enum class Tier : std::uint32_t { dram = 0, tt = 1, ssd = 2 };

inline constexpr std::uint32_t kTierShift = 30;
inline constexpr std::uint32_t kIndexMask = (1u << kTierShift) - 1;

inline std::uint32_t pack_address(Tier tier, std::uint32_t index) {
    if (index > kIndexMask)
        throw bounds_error("pack_address: tier-local index " + std::to_string(index) + " needs more than 30 bits");
    return (static_cast<std::uint32_t>(tier) << kTierShift) | index;
}

inline Tier address_tier(std::uint32_t packed) { return static_cast<Tier>(packed >> kTierShift); }
inline std::uint32_t address_index(std::uint32_t packed) { return packed & kIndexMask; }

struct RemapTable {
    std::uint32_t table_id = 0;
    std::vector<std::uint32_t> entries;  // packed word per raw row index

    bool operator==(const RemapTable&) const = default;
};

// Rows in hotness order land on DRAM first, then the TT region, then SSD;
// within each tier the local index counts up from 0.
inline RemapTable build_remap(std::uint32_t table_id, std::int64_t rows_dram, std::int64_t rows_tt,
                              std::span<const std::uint32_t> hotness) {
    const std::int64_t rows = static_cast<std::int64_t>(hotness.size());
    if (rows_dram < 0 || rows_tt < 0 || rows_dram + rows_tt > rows)
        throw config_error("build_remap: tier row counts exceed the table");
    RemapTable table;
    table.table_id = table_id;
    table.entries.assign(hotness.size(), 0);
    for (std::int64_t rank = 0; rank < rows; ++rank) {
        Tier tier;
        std::int64_t local;
        if (rank < rows_dram) {
            tier = Tier::dram;
            local = rank;
        } else if (rank < rows_dram + rows_tt) {
            tier = Tier::tt;
            local = rank - rows_dram;
        } else {
            tier = Tier::ssd;
            local = rank - rows_dram - rows_tt;
        }
        table.entries[hotness[static_cast<std::size_t>(rank)]] =
            pack_address(tier, static_cast<std::uint32_t>(local));
    }
    return table;
}

// One remap table per planned table; hotness orders are positionally aligned
// with the plan's table list.
inline std::vector<RemapTable> build_remap(const PlannerSolution& plan,
                                           const std::vector<std::vector<std::uint32_t>>& hotness_orders) {
    if (plan.tables.size() != hotness_orders.size())
        throw config_error("build_remap: hotness orders do not cover all planned tables");
    std::vector<RemapTable> tables;
    tables.reserve(plan.tables.size());
    for (std::size_t j = 0; j < plan.tables.size(); ++j) {
        const auto& p = plan.tables[j];
        tables.push_back(build_remap(static_cast<std::uint32_t>(p.table_id), p.rows_dram, p.rows_tt,
                                     hotness_orders[j]));
    }
    return tables;
}

inline std::pair<Tier, std::uint32_t> resolve(const RemapTable& table, std::uint32_t raw_index) {
    if (raw_index >= table.entries.size())
        throw bounds_error("resolve: row " + std::to_string(raw_index) + " out of range for table " +
                           std::to_string(table.table_id) + " (rows " + std::to_string(table.entries.size()) + ")");
    const std::uint32_t packed = table.entries[raw_index];
    return {address_tier(packed), address_index(packed)};
}

// File layout per table: {table_id u32, row_len u32} then row_len packed
// words, little-endian throughout. Bit-exact so independent implementations
// interoperate.
inline void save_remap(const std::vector<RemapTable>& tables, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    for (const auto& t : tables) {
        detail::put_le<std::uint32_t>(os, t.table_id);
        detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.entries.size()));
        for (std::uint32_t word : t.entries) detail::put_le<std::uint32_t>(os, word);
    }
}

inline std::vector<RemapTable> load_remap(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path.string());
    std::vector<RemapTable> tables;
    while (true) {
        is.peek();
        if (is.eof()) break;
        RemapTable t;
        t.table_id = detail::get_le<std::uint32_t>(is);
        const auto rows = detail::get_le<std::uint32_t>(is);
        t.entries.resize(rows);
        for (auto& word : t.entries) word = detail::get_le<std::uint32_t>(is);
        tables.push_back(std::move(t));
    }
    return tables;
}

}  // namespace tiershard
