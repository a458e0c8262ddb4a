#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bic/building_class.hpp"
#include "bic/fusion.hpp"
#include "bic/osm.hpp"

namespace bic {

/// Fixed display colour per class; "unclassified" gets grey.
std::string_view class_color(BuildingClass c) noexcept;
inline constexpr std::string_view kUnclassifiedColor = "#999999";

inline constexpr double kDefaultOpacityFloor = 0.15;

/// Confidence rendered as opacity: clamp(confidence, floor, 1).
double confidence_opacity(double confidence, double floor = kDefaultOpacityFloor) noexcept;

/// One Polygon feature per building (sorted by id). Buildings without a
/// prediction are emitted with class "unclassified" at the floor opacity.
nlohmann::json footprint_map(std::span<const BuildingRecord> buildings,
                             std::span<const BuildingPrediction> predictions,
                             std::span<const UnclassifiedBuilding> unclassified,
                             double opacity_floor = kDefaultOpacityFloor);

/// One Point feature per classified building at its footprint centroid.
nlohmann::json point_map(std::span<const BuildingRecord> buildings, std::span<const BuildingPrediction> predictions);

struct DensityGrid {
    BBox bbox;
    double cell_size = 0.0;
    std::size_t rows = 0;  // along latitude, row 0 at the south edge
    std::size_t cols = 0;  // along longitude, col 0 at the west edge
    std::vector<std::uint64_t> counts;  // row-major

    std::uint64_t at(std::size_t row, std::size_t col) const { return counts.at(row * cols + col); }
    std::uint64_t total() const noexcept;
};

/// Bins points by floor((coord - origin) / cell_size). Points on the north
/// or east edge land in the last cell; points outside the bbox are ignored.
/// Throws EmptyBbox for a bbox without area and InvalidArgument for a
/// non-positive cell size.
DensityGrid density_grid(std::span<const GeoPoint> points, const BBox& bbox, double cell_size);

/// Centroids of the predictions of one class.
std::vector<GeoPoint> class_points(std::span<const BuildingRecord> buildings,
                                   std::span<const BuildingPrediction> predictions, BuildingClass cls);

nlohmann::json density_grid_json(const DensityGrid& grid, BuildingClass cls);

/// Smallest bbox around all footprint vertices.
BBox buildings_bbox(std::span<const BuildingRecord> buildings);

/// Writes a JSON document followed by a newline. Throws IoError.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc, int indent = -1);

}  // namespace bic
