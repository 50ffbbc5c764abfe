#include "mtlab/metrics/metrics.hpp"

#include "mtlab/common/numformat.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mtlab {

std::string format_double(double v) {
    char buf[40];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc())
        throw std::invalid_argument("format_double failed");
    return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw std::invalid_argument("not a number: '" + s + "'");
    return v;
}

} // namespace mtlab

namespace mtlab::metrics {

nlohmann::json snapshot_to_json(const MetricSnapshot& snap) {
    nlohmann::json out = nlohmann::json::array();
    for (const TaskMetrics& tm : snap) {
        nlohmann::json vals = nlohmann::json::array();
        for (const MetricValue& mv : tm.values)
            vals.push_back({{"name", mv.name},
                            {"higher_better", mv.higher_better},
                            {"value", mv.value}});
        out.push_back({{"task", tm.task_id}, {"metrics", vals}});
    }
    return out;
}

MetricSnapshot snapshot_from_json(const nlohmann::json& j) {
    MetricSnapshot snap;
    for (const auto& tj : j) {
        TaskMetrics tm;
        tm.task_id = tj.at("task").get<int>();
        for (const auto& vj : tj.at("metrics"))
            tm.values.push_back({vj.at("name").get<std::string>(),
                                 vj.at("higher_better").get<bool>(),
                                 vj.at("value").get<double>()});
        snap.push_back(std::move(tm));
    }
    return snap;
}

double adversarial_relative_accuracy(std::span<const double> attacked,
                                     std::span<const double> baseline) {
    if (attacked.size() != baseline.size() || attacked.empty())
        throw std::invalid_argument("adversarial_relative_accuracy: mismatched task counts");
    double acc = 0.0;
    for (std::size_t i = 0; i < attacked.size(); ++i) {
        if (baseline[i] == 0.0)
            throw std::invalid_argument("adversarial_relative_accuracy: baseline accuracy of task " +
                                        std::to_string(i) + " is zero");
        acc += (attacked[i] - baseline[i]) / baseline[i];
    }
    return acc / static_cast<double>(attacked.size());
}

ArpResult adversarial_relative_performance(const MetricSnapshot& clean,
                                           const MetricSnapshot& attacked) {
    if (clean.size() != attacked.size() || clean.empty())
        throw std::invalid_argument("arp: snapshots list different task counts");
    ArpResult res;
    res.per_task.reserve(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const TaskMetrics& c = clean[i];
        const TaskMetrics& a = attacked[i];
        if (c.task_id != a.task_id || c.values.size() != a.values.size() || c.values.empty())
            throw std::invalid_argument("arp: snapshots disagree about task " +
                                        std::to_string(c.task_id));
        double task_sum = 0.0;
        for (std::size_t j = 0; j < c.values.size(); ++j) {
            const MetricValue& m = c.values[j];
            const MetricValue& mp = a.values[j];
            if (m.name != mp.name || m.higher_better != mp.higher_better)
                throw std::invalid_argument("arp: metric mismatch on task " +
                                            std::to_string(c.task_id) + ": " + m.name +
                                            " vs " + mp.name);
            if (m.value == 0.0)
                throw std::invalid_argument("arp: clean value of metric '" + m.name +
                                            "' on task " + std::to_string(c.task_id) +
                                            " is zero");
            double rel = (mp.value - m.value) / m.value;
            task_sum += m.higher_better ? -rel : rel;
        }
        res.per_task.push_back(100.0 * task_sum / static_cast<double>(c.values.size()));
    }
    res.overall = std::accumulate(res.per_task.begin(), res.per_task.end(), 0.0) /
                  static_cast<double>(res.per_task.size());
    return res;
}

double relative_loss_change_sum(std::span<const double> initial,
                                std::span<const double> current) {
    if (initial.size() != current.size() || initial.empty())
        throw std::invalid_argument("relative_loss_change: mismatched loss vectors");
    double acc = 0.0;
    for (std::size_t i = 0; i < initial.size(); ++i) {
        if (!(initial[i] > 0.0))
            throw std::invalid_argument("relative_loss_change: initial loss of task " +
                                        std::to_string(i) + " must be positive");
        acc += (current[i] - initial[i]) / initial[i];
    }
    return acc;
}

double relative_loss_change_mean(std::span<const double> initial,
                                 std::span<const double> current) {
    return relative_loss_change_sum(initial, current) / static_cast<double>(initial.size());
}

TransferabilityReport transferability(std::span<const double> per_task_arp, int attacked_task) {
    if (per_task_arp.size() < 2)
        throw std::invalid_argument("transferability needs at least two tasks");
    if (attacked_task < 0 || static_cast<std::size_t>(attacked_task) >= per_task_arp.size())
        throw std::invalid_argument("transferability: attacked task " +
                                    std::to_string(attacked_task) + " out of range");
    double own = per_task_arp[static_cast<std::size_t>(attacked_task)];
    if (own == 0.0)
        throw std::domain_error("transferability: attacked task " +
                                std::to_string(attacked_task) + " has zero ARP");
    TransferabilityReport rep;
    rep.attacked_task = attacked_task;
    rep.per_task_arp.assign(per_task_arp.begin(), per_task_arp.end());
    double acc = 0.0;
    for (std::size_t j = 0; j < per_task_arp.size(); ++j)
        if (j != static_cast<std::size_t>(attacked_task))
            acc += per_task_arp[j] / own;
    rep.raw = acc / static_cast<double>(per_task_arp.size() - 1);
    rep.value = std::max(rep.raw, 0.0);
    return rep;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]])
            ++j;
        double r = 0.5 * static_cast<double>(i + j) + 1.0; // average 1-based rank
        for (std::size_t k = i; k <= j; ++k)
            ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

} // namespace

std::optional<double> spearman_rank_correlation(std::span<const double> xs,
                                                std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("spearman: need two equal-length samples");
    std::vector<double> rx = average_ranks(xs);
    std::vector<double> ry = average_ranks(ys);
    double n = static_cast<double>(xs.size());
    double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double dx = rx[i] - mx, dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

} // namespace mtlab::metrics
