// =============================================================================
// FunctionalPanel: N subjects x T time points x G grid points.
//
// Dense row-major storage, one row per (subject, time), one column per grid
// point. Subject i's series occupies the contiguous row block [i*T, (i+1)*T).
// Subject and time indices are 0-based throughout the library; serialization
// converts to 1-based subject labels at the boundary.
// =============================================================================
#pragma once

#include <utility>

#include "pecusum/grid.hpp"
#include "pecusum/types.hpp"

namespace pecusum {

class FunctionalPanel {
public:
    // Zero-filled panel. Throws std::invalid_argument for n < 1, t < 2 or an
    // invalid grid.
    FunctionalPanel(int n_subjects, int n_times, Grid grid);

    int n_subjects() const { return n_subjects_; }
    int n_times() const { return n_times_; }
    const Grid& grid() const { return grid_; }

    // Row view of curve (i, t); mutable counterpart for construction.
    Eigen::Ref<const Eigen::RowVectorXd> curve(int i, int t) const {
        return data_.row(row_index(i, t));
    }
    Eigen::Ref<Eigen::RowVectorXd> curve(int i, int t) {
        return data_.row(row_index(i, t));
    }

    // Contiguous T x G block holding subject i's full series.
    Eigen::Ref<const MatRM> subject(int i) const {
        check_subject(i);
        return data_.middleRows(static_cast<Eigen::Index>(i) * n_times_, n_times_);
    }
    Eigen::Ref<MatRM> subject(int i) {
        check_subject(i);
        return data_.middleRows(static_cast<Eigen::Index>(i) * n_times_, n_times_);
    }

    const MatRM& data() const { return data_; }
    MatRM& data() { return data_; }

    // Throws std::invalid_argument if any stored value is non-finite.
    void validate() const;

private:
    Eigen::Index row_index(int i, int t) const;
    void check_subject(int i) const;

    int n_subjects_;
    int n_times_;
    Grid grid_;
    MatRM data_;  // (N*T) x G
};

// T x G matrix of cross-sectional mean curves: row t = average over subjects.
MatRM cross_sectional_mean(const FunctionalPanel& panel);

}  // namespace pecusum
