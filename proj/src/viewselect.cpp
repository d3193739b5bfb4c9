#include "mivec/viewselect.hpp"

#include "mivec/errors.hpp"

namespace mivec {

ViewSelection select_basic_view(const MultiViewSequence& seq, std::optional<int> override_index) {
    if (override_index) {
        int i = *override_index;
        if (i < 0 || i >= seq.N)
            throw ValidationError("basic-view override " + std::to_string(i) +
                                  " out of range [0," + std::to_string(seq.N) + ")");
        return {i, {}};
    }
    ViewSelection sel;
    sel.score_per_view.resize(seq.N);
    for (int j = 0; j < seq.N; ++j) {
        double sum = 0.0;
        for (int k = 0; k < seq.N; ++k) {
            if (k == j) continue;
            double d2 = 0.0;
            for (int a = 0; a < 3; ++a) {
                double d = seq.cameras[j].position[a] - seq.cameras[k].position[a];
                d2 += d * d;
            }
            sum += d2;
        }
        sel.score_per_view[j] = -sum / (seq.N - 1);
        if (sel.score_per_view[j] > sel.score_per_view[sel.basic_view_index])
            sel.basic_view_index = j;
    }
    return sel;
}

} // namespace mivec
