#pragma once

#include <optional>
#include <vector>

#include "mivec/seqdata.hpp"

namespace mivec {

struct ViewSelection {
    int basic_view_index = 0;
    std::vector<double> score_per_view; // empty when overridden
};

// Picks the most central camera: score(j) = -mean over k!=j of the squared
// camera-position distance, argmax with lowest-index tie-breaking. An override
// skips scoring entirely.
ViewSelection select_basic_view(const MultiViewSequence& seq, std::optional<int> override_index);

} // namespace mivec
