#pragma once

#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include "iro/ledger.hpp"
#include "iro/mdp.hpp"
#include "iro/prefix_map.hpp"

namespace iro {

/// Monte-Carlo regression data: scored complete trajectories. Training
/// pairs are derived by matching every prefix of a trajectory (empty through
/// full length) with its terminal reward.
struct FitDataset {
  std::vector<ScoredTrajectory> items;

  struct Example {
    Prefix prefix;
    double target;
  };
  std::vector<Example> examples() const;
};

enum class ValueReprKind { Zero, Tabular, Linear };

/// Per-prefix running (sum, count); the fitted value is the mean, which is
/// exactly the least-squares minimizer over the visited cell.
struct TabularRepr {
  PrefixMap<std::pair<double, std::int64_t>> cells;
};

/// Ridge regression over fixed prefix features; evaluation clamps into
/// [0, r_max] so fitted values stay inside the reward range.
struct LinearRepr {
  std::int32_t vocab_size = 2;
  std::int32_t horizon = 1;
  double r_max = 1.0;
  std::vector<double> weights;
};

struct ZeroRepr {};

struct ValueFn {
  std::variant<ZeroRepr, TabularRepr, LinearRepr> repr = ZeroRepr{};
  /// Returned by Tabular lookups that miss; such hits are tallied on the
  /// ledger so runs can report how often the guide was flying blind.
  double default_value = 0.0;

  /**
   * Point evaluation. When a ledger is supplied the call counts as one
   * value query; oracle-side evaluations pass nullptr so instrument costs
   * reflect only the algorithm under study.
   */
  double evaluate(const Prefix& s, CostLedger* ledger = nullptr) const;

  /// Number of fitted parameters (table cells or weight entries).
  std::int64_t cell_count() const;

  ValueReprKind kind() const {
    if (std::holds_alternative<TabularRepr>(repr)) return ValueReprKind::Tabular;
    if (std::holds_alternative<LinearRepr>(repr)) return ValueReprKind::Linear;
    return ValueReprKind::Zero;
  }
};

struct FitOptions {
  ValueReprKind repr = ValueReprKind::Tabular;
  double ridge_lambda = 1e-6;
  double default_value = 0.0;
};

/// Fixed feature map used by the Linear representation: bias, relative
/// depth, one-hot of the last token, and per-token frequency.
std::vector<double> linear_features(std::int32_t vocab_size,
                                    std::int32_t horizon, const Prefix& s);

/**
 * Least-squares fit of values to terminal returns. Tabular stores the mean
 * return through every visited prefix; Linear solves the ridge normal
 * equations. Throws EmptyDataset on no data, SingularSystem for a
 * rank-deficient system with ridge_lambda == 0.
 */
ValueFn fit_value_fn(const MdpSpec& spec, const FitDataset& data,
                     const FitOptions& options);

/**
 * Infinite-sample limit of the tabular fit: exact on-policy values V^pi at
 * every prefix reachable under pi, stored as a tabular function.
 */
ValueFn expected_fit(const MdpSpec& spec, const RewardSpec& reward,
                     const PolicyFn& pi,
                     std::int64_t node_cap = kDefaultNodeCap);

}  // namespace iro
