#include "bic/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "bic/error.hpp"
#include "bic/util.hpp"

namespace bic {

std::uint64_t ConfusionMatrix::total() const noexcept
{
    std::uint64_t t = 0;
    for (const auto& row : counts)
        for (auto c : row) t += c;
    return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t row) const noexcept
{
    std::uint64_t t = 0;
    for (auto c : counts[row]) t += c;
    return t;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t col) const noexcept
{
    std::uint64_t t = 0;
    for (const auto& row : counts) t += row[col];
    return t;
}

std::uint64_t ConfusionMatrix::diagonal() const noexcept
{
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < kNumBuildingClasses; ++i) t += counts[i][i];
    return t;
}

ConfusionMatrix confusion(std::span<const LabelPair> pairs)
{
    ConfusionMatrix m;
    for (const auto& [truth, predicted] : pairs) ++m.counts[index_of(truth)][index_of(predicted)];
    return m;
}

RealGrid normalize_rows(const ConfusionMatrix& m)
{
    RealGrid out{};
    for (std::size_t r = 0; r < kNumBuildingClasses; ++r) {
        const auto sum = m.row_sum(r);
        if (sum == 0) continue;
        for (std::size_t c = 0; c < kNumBuildingClasses; ++c)
            out[r][c] = static_cast<double>(m.counts[r][c]) / static_cast<double>(sum);
    }
    return out;
}

double f1_score(double precision, double recall) noexcept
{
    const double denom = precision + recall;
    return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

MetricRow weighted_overall(std::span<const MetricRow> rows) noexcept
{
    MetricRow out;
    for (const auto& r : rows) out.support += r.support;
    if (out.support == 0) return out;
    for (const auto& r : rows) {
        const double w = static_cast<double>(r.support);
        out.precision += w * r.precision;
        out.recall += w * r.recall;
        out.f1 += w * r.f1;
    }
    const double total = static_cast<double>(out.support);
    out.precision /= total;
    out.recall /= total;
    out.f1 /= total;
    return out;
}

ClassMetrics class_metrics(const ConfusionMatrix& m)
{
    ClassMetrics out;
    std::size_t macro_classes = 0;
    for (std::size_t c = 0; c < kNumBuildingClasses; ++c) {
        const auto hit = static_cast<double>(m.counts[c][c]);
        const auto rows = m.row_sum(c);
        const auto cols = m.col_sum(c);
        MetricRow& row = out.per_class[c];
        row.precision = cols ? hit / static_cast<double>(cols) : 0.0;
        row.recall = rows ? hit / static_cast<double>(rows) : 0.0;
        row.f1 = f1_score(row.precision, row.recall);
        row.support = rows;
        if (rows || cols) {
            ++macro_classes;
            out.macro.precision += row.precision;
            out.macro.recall += row.recall;
            out.macro.f1 += row.f1;
        }
    }
    out.weighted = weighted_overall(out.per_class);
    out.macro.support = out.weighted.support;
    if (macro_classes) {
        out.macro.precision /= static_cast<double>(macro_classes);
        out.macro.recall /= static_cast<double>(macro_classes);
        out.macro.f1 /= static_cast<double>(macro_classes);
    }
    const auto total = m.total();
    out.accuracy = total ? static_cast<double>(m.diagonal()) / static_cast<double>(total) : 0.0;
    return out;
}

ClassProportions class_proportions(std::span<const BuildingClass> labels)
{
    ClassProportions out;
    for (auto l : labels) ++out.count[index_of(l)];
    out.total = labels.size();
    out.empty = labels.empty();
    if (out.empty) return out;
    for (std::size_t c = 0; c < kNumBuildingClasses; ++c)
        out.fraction[c] = static_cast<double>(out.count[c]) / static_cast<double>(out.total);
    return out;
}

std::vector<std::int64_t> sample_for_audit(std::vector<std::int64_t> population, std::size_t n, std::uint64_t seed)
{
    std::sort(population.begin(), population.end());
    population.erase(std::unique(population.begin(), population.end()), population.end());
    if (n > population.size())
        throw InsufficientPopulation(strprintf("asked for %zu of %zu", n, population.size()));

    // Partial Fisher-Yates: the first n slots end up a uniform sample.
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, population.size() - 1);
        std::swap(population[i], population[pick(rng)]);
    }
    population.resize(n);
    std::sort(population.begin(), population.end());
    return population;
}

double round_half_up(double value, int digits) noexcept
{
    const double scale = std::pow(10.0, digits);
    // The nudge keeps decimal ties such as 0.745 (stored as 0.74499...) on
    // the side a reader expects.
    const double scaled = std::abs(value) * scale;
    const double rounded = std::floor(scaled + 0.5 + 1e-9) / scale;
    return std::copysign(rounded, value);
}

std::string render_metrics_table(const ClassMetrics& metrics, Averaging mode)
{
    std::string out = strprintf("%-16s %9s %9s %9s %9s\n", "", "precision", "recall", "F1 score", "support");
    auto line = [&](const char* name, const MetricRow& r) {
        out += strprintf("%-16s %9.2f %9.2f %9.2f %9llu\n", name, round_half_up(r.precision),
                         round_half_up(r.recall), round_half_up(r.f1), static_cast<unsigned long long>(r.support));
    };
    for (std::size_t c = 0; c < kNumBuildingClasses; ++c) {
        std::string name(kBuildingClassNames[c]);
        std::replace(name.begin(), name.end(), '_', ' ');
        line(name.c_str(), metrics.per_class[c]);
    }
    out += "\n";
    line("overall", metrics.overall(mode));
    return out;
}

}  // namespace bic
