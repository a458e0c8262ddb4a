#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bic/building_class.hpp"
#include "bic/geo.hpp"

namespace bic {

/// Latitude/longitude bounds, inclusive on every edge.
struct BBox {
    double south = 0.0;
    double west = 0.0;
    double north = 0.0;
    double east = 0.0;

    bool contains(const GeoPoint& p) const noexcept
    {
        return p.lat >= south && p.lat <= north && p.lon >= west && p.lon <= east;
    }

    /// Parses "S,W,N,E". Throws InvalidArgument.
    static BBox parse(const std::string& text);
};

struct BuildingRecord {
    std::int64_t id = 0;  // OSM way id
    FootprintPolygon footprint;
    std::optional<BuildingClass> truth_label;
    std::string raw_tag;
};

struct ParseReport {
    std::size_t nodes = 0;
    std::size_t building_ways = 0;
    std::size_t parsed = 0;
    std::size_t skipped_unclosed = 0;
    std::size_t skipped_unresolved = 0;
    std::size_t skipped_invalid_geometry = 0;
    std::size_t skipped_outside_bbox = 0;
    std::size_t skipped_relations = 0;
    std::size_t unmapped = 0;
    std::map<std::string, std::size_t> unmapped_tags;

    friend bool operator==(const ParseReport&, const ParseReport&) = default;
};

struct ParseResult {
    std::vector<BuildingRecord> records;  // sorted by id
    ParseReport report;
};

/// Streams an OSM XML document and extracts one record per closed way
/// carrying a building tag. With a bbox, a building is kept when its
/// centroid lies inside. Throws MalformedXml on XML errors; unresolved node
/// references, unclosed ways and multipolygon relations are counted in the
/// report and skipped.
ParseResult parse_osm(std::istream& xml, const std::optional<BBox>& bbox = std::nullopt);

}  // namespace bic
