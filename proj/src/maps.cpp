#include "bic/maps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "bic/error.hpp"
#include "bic/util.hpp"

namespace bic {

using json = nlohmann::json;

std::string_view class_color(BuildingClass c) noexcept
{
    static constexpr std::string_view kColors[kNumBuildingClasses] = {
        "#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#ffd92f", "#a65628", "#f781bf",
    };
    return kColors[index_of(c)];
}

double confidence_opacity(double confidence, double floor) noexcept { return std::clamp(confidence, floor, 1.0); }

namespace {

json ring_coordinates(const std::vector<GeoPoint>& ring)
{
    json coords = json::array();
    for (const auto& p : ring) coords.push_back({p.lon, p.lat});
    return coords;
}

// GeoJSON wants exterior rings counter-clockwise.
json exterior_ring(const std::vector<GeoPoint>& ring)
{
    double twice_area = 0.0;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i)
        twice_area += ring[i].lon * ring[i + 1].lat - ring[i + 1].lon * ring[i].lat;
    if (twice_area >= 0.0) return ring_coordinates(ring);
    return ring_coordinates(std::vector<GeoPoint>(ring.rbegin(), ring.rend()));
}

json feature_collection(json features)
{
    return {{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

}  // namespace

json footprint_map(std::span<const BuildingRecord> buildings, std::span<const BuildingPrediction> predictions,
                   std::span<const UnclassifiedBuilding> unclassified, double opacity_floor)
{
    std::map<std::int64_t, const BuildingPrediction*> by_id;
    for (const auto& p : predictions) by_id.emplace(p.building_id, &p);
    std::map<std::int64_t, UnclassifiedReason> reasons;
    for (const auto& u : unclassified) reasons.emplace(u.building_id, u.reason);

    std::vector<const BuildingRecord*> ordered;
    for (const auto& b : buildings) ordered.push_back(&b);
    std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

    json features = json::array();
    for (const auto* b : ordered) {
        json props;
        props["building_id"] = b->id;
        if (auto it = by_id.find(b->id); it != by_id.end()) {
            props["class"] = to_string(it->second->label);
            props["confidence"] = it->second->confidence;
            props["opacity"] = confidence_opacity(it->second->confidence, opacity_floor);
            props["color"] = class_color(it->second->label);
        } else {
            props["class"] = "unclassified";
            props["confidence"] = nullptr;
            props["opacity"] = opacity_floor;
            props["color"] = kUnclassifiedColor;
            if (auto r = reasons.find(b->id); r != reasons.end()) props["reason"] = to_string(r->second);
        }
        if (b->truth_label) props["truth"] = to_string(*b->truth_label);
        features.push_back({{"type", "Feature"},
                            {"geometry", {{"type", "Polygon"}, {"coordinates", json::array({exterior_ring(b->footprint.ring())})}}},
                            {"properties", std::move(props)}});
    }
    return feature_collection(std::move(features));
}

json point_map(std::span<const BuildingRecord> buildings, std::span<const BuildingPrediction> predictions)
{
    std::map<std::int64_t, const BuildingRecord*> by_id;
    for (const auto& b : buildings) by_id.emplace(b.id, &b);

    json features = json::array();
    for (const auto& p : predictions) {
        auto it = by_id.find(p.building_id);
        if (it == by_id.end()) continue;
        const GeoPoint c = it->second->footprint.centroid();
        features.push_back({{"type", "Feature"},
                            {"geometry", {{"type", "Point"}, {"coordinates", {c.lon, c.lat}}}},
                            {"properties",
                             {{"building_id", p.building_id},
                              {"class", to_string(p.label)},
                              {"confidence", p.confidence},
                              {"color", class_color(p.label)}}}});
    }
    return feature_collection(std::move(features));
}

std::uint64_t DensityGrid::total() const noexcept
{
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
}

DensityGrid density_grid(std::span<const GeoPoint> points, const BBox& bbox, double cell_size)
{
    if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw InvalidArgument("cell size must be positive");
    if (!(bbox.north > bbox.south) || !(bbox.east > bbox.west)) throw EmptyBbox("bounding box has no area");

    DensityGrid g;
    g.bbox = bbox;
    g.cell_size = cell_size;
    g.rows = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((bbox.north - bbox.south) / cell_size)));
    g.cols = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((bbox.east - bbox.west) / cell_size)));
    g.counts.assign(g.rows * g.cols, 0);

    auto bin = [&](double offset, std::size_t n) {
        const auto i = static_cast<std::size_t>(std::floor(offset / cell_size));
        return std::min(i, n - 1);
    };
    for (const auto& p : points) {
        if (!bbox.contains(p)) continue;
        ++g.counts[bin(p.lat - bbox.south, g.rows) * g.cols + bin(p.lon - bbox.west, g.cols)];
    }
    return g;
}

std::vector<GeoPoint> class_points(std::span<const BuildingRecord> buildings,
                                   std::span<const BuildingPrediction> predictions, BuildingClass cls)
{
    std::map<std::int64_t, const BuildingRecord*> by_id;
    for (const auto& b : buildings) by_id.emplace(b.id, &b);
    std::vector<GeoPoint> out;
    for (const auto& p : predictions) {
        if (p.label != cls) continue;
        if (auto it = by_id.find(p.building_id); it != by_id.end()) out.push_back(it->second->footprint.centroid());
    }
    return out;
}

json density_grid_json(const DensityGrid& grid, BuildingClass cls)
{
    json rows = json::array();
    for (std::size_t r = 0; r < grid.rows; ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < grid.cols; ++c) row.push_back(grid.at(r, c));
        rows.push_back(std::move(row));
    }
    return {{"class", to_string(cls)},
            {"bbox", {grid.bbox.south, grid.bbox.west, grid.bbox.north, grid.bbox.east}},
            {"cell_size", grid.cell_size},
            {"rows", grid.rows},
            {"cols", grid.cols},
            {"total", grid.total()},
            {"counts", std::move(rows)}};
}

BBox buildings_bbox(std::span<const BuildingRecord> buildings)
{
    BBox b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& rec : buildings)
        for (const auto& p : rec.footprint.ring()) {
            b.south = std::min(b.south, p.lat);
            b.north = std::max(b.north, p.lat);
            b.west = std::min(b.west, p.lon);
            b.east = std::max(b.east, p.lon);
        }
    if (buildings.empty()) return {};
    return b;
}

void write_json(const std::filesystem::path& path, const json& doc, int indent)
{
    write_file_atomic(path, doc.dump(indent) + "\n");
}

}  // namespace bic
