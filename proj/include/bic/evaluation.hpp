#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bic/building_class.hpp"

namespace bic {

/// Rows are the true class, columns the predicted class.
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, kNumBuildingClasses>, kNumBuildingClasses> counts{};

    std::uint64_t total() const noexcept;
    std::uint64_t row_sum(std::size_t row) const noexcept;
    std::uint64_t col_sum(std::size_t col) const noexcept;
    std::uint64_t diagonal() const noexcept;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

using RealGrid = std::array<std::array<double, kNumBuildingClasses>, kNumBuildingClasses>;

using LabelPair = std::pair<BuildingClass, BuildingClass>;  // (truth, predicted)

ConfusionMatrix confusion(std::span<const LabelPair> pairs);

/// Each row divided by its sum; rows without support stay zero.
RealGrid normalize_rows(const ConfusionMatrix& m);

/// Harmonic mean of precision and recall; 0 when both are 0.
double f1_score(double precision, double recall) noexcept;

struct MetricRow {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;
};

enum class Averaging { weighted, macro };

struct ClassMetrics {
    std::array<MetricRow, kNumBuildingClasses> per_class{};
    MetricRow weighted;  // support-weighted means
    MetricRow macro;     // unweighted means over classes seen as truth or prediction
    double accuracy = 0.0;

    const MetricRow& overall(Averaging mode) const noexcept { return mode == Averaging::weighted ? weighted : macro; }
};

/// Support-weighted mean of per-class rows; the support of the result is
/// the total support. All zeros when the total support is zero.
MetricRow weighted_overall(std::span<const MetricRow> rows) noexcept;

ClassMetrics class_metrics(const ConfusionMatrix& m);

struct ClassProportions {
    std::array<double, kNumBuildingClasses> fraction{};
    std::array<std::uint64_t, kNumBuildingClasses> count{};
    std::uint64_t total = 0;
    bool empty = true;
};

ClassProportions class_proportions(std::span<const BuildingClass> labels);

/// Seeded uniform sample of `n` ids without replacement. The population is
/// sorted first, so the result depends only on the set of ids, `n` and
/// `seed`. Throws InsufficientPopulation when n exceeds the population.
std::vector<std::int64_t> sample_for_audit(std::vector<std::int64_t> population, std::size_t n, std::uint64_t seed);

/// Round half away from zero to `digits` decimals, for rendering.
double round_half_up(double value, int digits = 2) noexcept;

/// Plain-text table in the layout "class precision recall F1 support".
std::string render_metrics_table(const ClassMetrics& metrics, Averaging mode = Averaging::weighted);

}  // namespace bic
