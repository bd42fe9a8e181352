#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "iro/iro_loop.hpp"
#include "iro/policy.hpp"
#include "iro/value_fn.hpp"

namespace iro::io {

/**
 * Full-precision, locale-independent double formatting ("%.17g" family):
 * parse_double(format_double(x)) == x bit-for-bit for finite x, and
 * nan/inf round-trip through their spelled-out names.
 */
std::string format_double(double v);
double parse_double(const std::string& s);

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a(std::string_view bytes);
/// The same digest as 16 lowercase hex digits.
std::string checksum_hex(std::string_view bytes);

/// Whole-file helpers; both throw IoError with the path in the message.
/// write_file creates missing parent directories.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------
// All serializers produce canonical output: object keys are alphabetical,
// doubles use the shortest round-tripping decimal form, NaN becomes null.
// Identical values therefore serialize to identical bytes.

nlohmann::json ledger_to_json(const CostLedger& ledger);
CostLedger ledger_from_json(const nlohmann::json& j);

nlohmann::json record_to_json(const IterationRecord& record);
IterationRecord record_from_json(const nlohmann::json& j);

nlohmann::json value_fn_to_json(const ValueFn& fn);
ValueFn value_fn_from_json(const nlohmann::json& j);

nlohmann::json stack_to_json(const GuidanceStack& stack);
GuidanceStack stack_from_json(const nlohmann::json& j);

/// One JSON object per line, newline-terminated.
std::string records_to_jsonl(const std::vector<IterationRecord>& records);
std::vector<IterationRecord> records_from_jsonl(const std::string& text);

/// Plot-ready per-iteration table: metrics plus the cumulative ledger.
std::string records_to_csv(const std::vector<IterationRecord>& records);

}  // namespace iro::io
