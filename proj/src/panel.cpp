#include "pecusum/panel.hpp"

#include <stdexcept>

namespace pecusum {

FunctionalPanel::FunctionalPanel(int n_subjects, int n_times, Grid grid)
    : n_subjects_(n_subjects), n_times_(n_times), grid_(std::move(grid)) {
    if (n_subjects_ < 1) throw std::invalid_argument("panel: need at least 1 subject");
    if (n_times_ < 2) throw std::invalid_argument("panel: need at least 2 time points");
    pecusum::validate(grid_);
    data_ = MatRM::Zero(static_cast<Eigen::Index>(n_subjects_) * n_times_, grid_.size());
}

Eigen::Index FunctionalPanel::row_index(int i, int t) const {
    check_subject(i);
    if (t < 0 || t >= n_times_) throw std::invalid_argument("panel: time index out of range");
    return static_cast<Eigen::Index>(i) * n_times_ + t;
}

void FunctionalPanel::check_subject(int i) const {
    if (i < 0 || i >= n_subjects_)
        throw std::invalid_argument("panel: subject index out of range");
}

void FunctionalPanel::validate() const {
    if (!data_.allFinite())
        throw std::invalid_argument("panel: non-finite curve value");
}

MatRM cross_sectional_mean(const FunctionalPanel& panel) {
    const int t_len = panel.n_times();
    MatRM mean = MatRM::Zero(t_len, panel.grid().size());
    for (int i = 0; i < panel.n_subjects(); ++i) mean += panel.subject(i);
    mean /= static_cast<double>(panel.n_subjects());
    return mean;
}

}  // namespace pecusum
