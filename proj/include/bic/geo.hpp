#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace bic {

/// Mean Earth radius (IUGG), meters.
inline constexpr double kEarthRadiusM = 6371008.8;

/// WGS84 latitude/longitude in degrees.
struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    /// Throws InvalidArgument for non-finite or out-of-range values.
    static GeoPoint checked(double lat, double lon);

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

bool is_valid(const GeoPoint& p) noexcept;

/// Great-circle distance in meters on a sphere of radius kEarthRadiusM.
double haversine_distance(const GeoPoint& a, const GeoPoint& b) noexcept;

/// Initial great-circle bearing in degrees, [0, 360), clockwise from north.
/// Throws CoincidentPoints when from == to.
double initial_bearing(const GeoPoint& from, const GeoPoint& to);

/// Point reached after travelling `distance_m` from `origin` along the
/// great circle with the given initial bearing.
GeoPoint destination_point(const GeoPoint& origin, double bearing_deg, double distance_m) noexcept;

/// Wraps an angle in degrees into [0, 360).
double normalize_degrees(double deg) noexcept;

/// Closed building outline. The ring is stored explicitly closed
/// (first == last); area and centroid are derived once at construction
/// in an equirectangular plane centred on the mean vertex.
class FootprintPolygon {
public:
    /// Accepts open or closed rings; an open ring is closed by repeating
    /// its first vertex. Throws InvalidPolygon when fewer than three
    /// distinct vertices or invalid coordinates are supplied, and
    /// DegeneratePolygon when the planar area underflows.
    static FootprintPolygon from_ring(std::vector<GeoPoint> ring);

    const std::vector<GeoPoint>& ring() const noexcept { return ring_; }
    double area_m2() const noexcept { return area_m2_; }
    const GeoPoint& centroid() const noexcept { return centroid_; }

private:
    FootprintPolygon() = default;

    std::vector<GeoPoint> ring_;
    double area_m2_ = 0.0;
    GeoPoint centroid_;
};

/// Area-weighted centroid of the polygon.
inline GeoPoint polygon_centroid(const FootprintPolygon& poly) noexcept { return poly.centroid(); }

/// Ray-casting containment test. Points on an edge or vertex count as inside.
bool point_in_polygon(const GeoPoint& p, const FootprintPolygon& poly) noexcept;
bool point_in_ring(const GeoPoint& p, std::span<const GeoPoint> closed_ring) noexcept;

struct NearestHit {
    std::int64_t id = 0;
    double distance_m = 0.0;

    friend bool operator==(const NearestHit&, const NearestHit&) = default;
};

/// Build-once, query-many nearest-neighbour index over geo points.
///
/// Entries are kept sorted by latitude. A query walks outwards from the
/// query latitude in both directions and stops once the meridional
/// distance alone exceeds the best candidate, which is a lower bound on the
/// great-circle distance. Ties on distance resolve to the smaller id.
class SpatialIndex {
public:
    struct Entry {
        std::int64_t id;
        GeoPoint point;
    };

    SpatialIndex() = default;
    explicit SpatialIndex(std::vector<Entry> entries);

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    std::span<const Entry> entries() const noexcept { return entries_; }

    std::optional<NearestHit> nearest(const GeoPoint& q, double max_radius_m) const;

private:
    std::vector<Entry> entries_;
};

}  // namespace bic
