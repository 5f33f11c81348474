#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "legit/graph.hpp"

namespace legit::metrics {

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t a = 0;  // true edges
    std::size_t i = 0;  // true non-adjacent unordered pairs
};

/// Additions + deletions + reversals. Per unordered pair the cost is 0 when
/// both graphs agree, 2 when one has no edge and the other has both
/// directions, and 1 otherwise (a reversal counts once).
/// Throws std::invalid_argument on a size mismatch.
std::size_t shd(const graph::Digraph& truth, const graph::Digraph& learned);

/// Ordered pairs (x, y) whose p(y | do(x)), estimated by adjusting for the
/// learned parents of x, is not guaranteed to equal the truth. Pairs touching
/// a node on a learned cycle count as wrong. Throws std::invalid_argument on a
/// size mismatch or a cyclic truth.
std::size_t sid(const graph::Digraph& truth, const graph::Digraph& learned);

/// TP: true edge learned with its direction. FN = a - TP. A pair that is
/// non-adjacent in truth is FP if the learned graph has either direction, TN otherwise.
ConfusionCounts confusion_counts(const graph::Digraph& truth, const graph::Digraph& learned);

/// 1/2 (TP/a + TN/i - FP/i - FN/a); nullopt when a = 0 or i = 0.
std::optional<double> bsf(const graph::Digraph& truth, const graph::Digraph& learned);
std::optional<double> bsf(const ConfusionCounts& c);

/// x and y d-separated by `z` in the DAG `g` (moralized ancestral graph test).
bool d_separated(const graph::Digraph& g, std::size_t x, std::size_t y, const std::vector<std::size_t>& z);

}  // namespace legit::metrics
