#pragma once

#include <unordered_map>

#include "iro/rng.hpp"
#include "iro/types.hpp"

namespace iro {

struct PrefixHasher {
  std::size_t operator()(const Prefix& p) const {
    return static_cast<std::size_t>(hash_prefix(0x5eedu, p));
  }
};

template <typename V>
using PrefixMap = std::unordered_map<Prefix, V, PrefixHasher>;

}  // namespace iro
