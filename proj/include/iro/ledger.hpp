#pragma once

#include <cstdint>

namespace iro {

/// Running cost counters shared by generators, scorers, and the outer loop.
/// Token and query counts are the currencies the cost model compares.
struct CostLedger {
  std::int64_t tokens_generated = 0;
  std::int64_t value_queries = 0;
  std::int64_t reward_queries = 0;
  std::int64_t nodes_expanded = 0;
  std::int64_t default_value_hits = 0;

  void merge(const CostLedger& o) {
    tokens_generated += o.tokens_generated;
    value_queries += o.value_queries;
    reward_queries += o.reward_queries;
    nodes_expanded += o.nodes_expanded;
    default_value_hits += o.default_value_hits;
  }

  bool operator==(const CostLedger&) const = default;
};

}  // namespace iro
