#include "pecusum/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pecusum {

namespace {

int intersection_size(const std::vector<int>& a, const std::vector<int>& b) {
    int count = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) {
            ++ia;
        } else if (*ib < *ia) {
            ++ib;
        } else {
            ++count;
            ++ia;
            ++ib;
        }
    }
    return count;
}

}  // namespace

ClassificationMetrics metrics_tp_f1(const std::vector<int>& est,
                                    const std::vector<int>& truth, int n) {
    if (n < 1) throw std::invalid_argument("metrics_tp_f1: n must be >= 1");
    ClassificationMetrics m;
    m.tp = intersection_size(est, truth);
    m.fp = static_cast<int>(est.size()) - m.tp;
    m.fn = static_cast<int>(truth.size()) - m.tp;
    const int tn = n - m.tp - m.fp - m.fn;
    if (tn < 0) throw std::invalid_argument("metrics_tp_f1: sets exceed n");

    m.tp_rate = static_cast<double>(m.tp + tn) / static_cast<double>(n);
    m.recall = truth.empty()
                   ? 1.0
                   : static_cast<double>(m.tp) / static_cast<double>(truth.size());
    const double denom = m.tp + 0.5 * (m.fp + m.fn);
    m.f1 = denom == 0.0 ? 1.0 : static_cast<double>(m.tp) / denom;
    return m;
}

std::pair<double, double> metrics_clustering(
    const std::vector<std::vector<int>>& est,
    const std::vector<std::vector<int>>& truth, int n) {
    if (n < 1) throw std::invalid_argument("metrics_clustering: n must be >= 1");

    std::size_t est_total = 0, truth_total = 0;
    for (const auto& c : est) est_total += c.size();
    for (const auto& c : truth) truth_total += c.size();
    if (est_total == 0 || truth_total == 0)
        throw std::invalid_argument("metrics_clustering: empty partition");

    // Contingency counts over sorted member lists.
    const std::size_t ke = est.size();
    const std::size_t kt = truth.size();
    std::vector<std::vector<int>> joint(ke, std::vector<int>(kt, 0));
    for (std::size_t a = 0; a < ke; ++a)
        for (std::size_t b = 0; b < kt; ++b)
            joint[a][b] = intersection_size(est[a], truth[b]);

    double purity = 0.0;
    for (std::size_t a = 0; a < ke; ++a)
        purity += *std::max_element(joint[a].begin(), joint[a].end());
    purity /= static_cast<double>(n);

    const double dn = static_cast<double>(n);
    auto entropy = [&](const std::vector<double>& sizes) {
        double h = 0.0;
        for (double s : sizes)
            if (s > 0.0) h -= (s / dn) * std::log2(s / dn);
        return h;
    };
    std::vector<double> est_sizes(ke, 0.0), truth_sizes(kt, 0.0);
    for (std::size_t a = 0; a < ke; ++a)
        for (std::size_t b = 0; b < kt; ++b) {
            est_sizes[a] += joint[a][b];
            truth_sizes[b] += joint[a][b];
        }
    const double h_est = entropy(est_sizes);
    const double h_truth = entropy(truth_sizes);

    double mi = 0.0;
    for (std::size_t a = 0; a < ke; ++a)
        for (std::size_t b = 0; b < kt; ++b) {
            const double p = joint[a][b] / dn;
            if (p > 0.0)
                mi += p * std::log2(p * dn * dn / (est_sizes[a] * truth_sizes[b]));
        }

    const double nmi = (h_est + h_truth) == 0.0 ? 1.0 : 2.0 * mi / (h_est + h_truth);
    return {purity, nmi};
}

double metric_msd(const std::vector<int>& b_hat, const std::vector<int>& b_true) {
    if (b_hat.size() != b_true.size())
        throw std::invalid_argument("metric_msd: length mismatch");
    if (b_hat.empty()) throw std::invalid_argument("metric_msd: empty input");
    double acc = 0.0;
    for (std::size_t k = 0; k < b_hat.size(); ++k) {
        const double d = b_hat[k] - b_true[k];
        acc += d * d;
    }
    return acc / static_cast<double>(b_hat.size());
}

}  // namespace pecusum
