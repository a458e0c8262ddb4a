#include "bic/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <tuple>

#include "bic/error.hpp"

namespace bic {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

// Tolerance in degrees for the on-edge test (~1 mm at the equator).
constexpr double kEdgeEpsDeg = 1e-8;

// Area below this many square meters is treated as degenerate.
constexpr double kMinAreaM2 = 1e-10;

struct LocalPlane {
    GeoPoint origin;
    double cos_lat;

    double x(const GeoPoint& p) const { return (p.lon - origin.lon) * kDegToRad * kEarthRadiusM * cos_lat; }
    double y(const GeoPoint& p) const { return (p.lat - origin.lat) * kDegToRad * kEarthRadiusM; }

    GeoPoint back(double x, double y) const
    {
        return {origin.lat + y / kEarthRadiusM * kRadToDeg,
                origin.lon + x / (kEarthRadiusM * cos_lat) * kRadToDeg};
    }
};

bool on_segment(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b)
{
    const double dx = b.lon - a.lon;
    const double dy = b.lat - a.lat;
    const double len = std::hypot(dx, dy);
    const double cross = (p.lon - a.lon) * dy - (p.lat - a.lat) * dx;
    if (std::abs(cross) > kEdgeEpsDeg * std::max(len, 1.0)) return false;
    return p.lon >= std::min(a.lon, b.lon) - kEdgeEpsDeg && p.lon <= std::max(a.lon, b.lon) + kEdgeEpsDeg &&
           p.lat >= std::min(a.lat, b.lat) - kEdgeEpsDeg && p.lat <= std::max(a.lat, b.lat) + kEdgeEpsDeg;
}

}  // namespace

bool is_valid(const GeoPoint& p) noexcept
{
    return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 && p.lat <= 90.0 && p.lon >= -180.0 &&
           p.lon <= 180.0;
}

GeoPoint GeoPoint::checked(double lat, double lon)
{
    GeoPoint p{lat, lon};
    if (!is_valid(p))
        throw InvalidArgument("coordinate out of range: " + std::to_string(lat) + "," + std::to_string(lon));
    return p;
}

double normalize_degrees(double deg) noexcept
{
    double r = std::fmod(deg, 360.0);
    if (r < 0.0) r += 360.0;
    // fmod of a tiny negative value can round up to exactly 360.
    if (r >= 360.0) r = 0.0;
    return r;
}

double haversine_distance(const GeoPoint& a, const GeoPoint& b) noexcept
{
    const double phi1 = a.lat * kDegToRad;
    const double phi2 = b.lat * kDegToRad;
    const double s_phi = std::sin((phi2 - phi1) / 2.0);
    const double s_lam = std::sin((b.lon - a.lon) * kDegToRad / 2.0);
    const double h = s_phi * s_phi + std::cos(phi1) * std::cos(phi2) * s_lam * s_lam;
    return 2.0 * kEarthRadiusM * std::asin(std::sqrt(std::clamp(h, 0.0, 1.0)));
}

double initial_bearing(const GeoPoint& from, const GeoPoint& to)
{
    if (from == to) throw CoincidentPoints("bearing undefined between identical points");
    const double phi1 = from.lat * kDegToRad;
    const double phi2 = to.lat * kDegToRad;
    const double d_lam = (to.lon - from.lon) * kDegToRad;
    const double y = std::sin(d_lam) * std::cos(phi2);
    const double x = std::cos(phi1) * std::sin(phi2) - std::sin(phi1) * std::cos(phi2) * std::cos(d_lam);
    return normalize_degrees(std::atan2(y, x) * kRadToDeg);
}

GeoPoint destination_point(const GeoPoint& origin, double bearing_deg, double distance_m) noexcept
{
    const double delta = distance_m / kEarthRadiusM;
    const double theta = bearing_deg * kDegToRad;
    const double phi1 = origin.lat * kDegToRad;
    const double lam1 = origin.lon * kDegToRad;
    const double sin_phi2 = std::sin(phi1) * std::cos(delta) + std::cos(phi1) * std::sin(delta) * std::cos(theta);
    const double phi2 = std::asin(std::clamp(sin_phi2, -1.0, 1.0));
    const double lam2 = lam1 + std::atan2(std::sin(theta) * std::sin(delta) * std::cos(phi1),
                                          std::cos(delta) - std::sin(phi1) * sin_phi2);
    double lon = lam2 * kRadToDeg;
    lon = normalize_degrees(lon + 180.0) - 180.0;
    return {phi2 * kRadToDeg, lon};
}

FootprintPolygon FootprintPolygon::from_ring(std::vector<GeoPoint> ring)
{
    for (const auto& p : ring)
        if (!is_valid(p)) throw InvalidPolygon("ring contains an invalid coordinate");
    if (!ring.empty() && ring.front() != ring.back()) ring.push_back(ring.front());

    std::vector<GeoPoint> distinct(ring.begin(), ring.empty() ? ring.end() : ring.end() - 1);
    std::sort(distinct.begin(), distinct.end(),
              [](const GeoPoint& a, const GeoPoint& b) { return std::tie(a.lat, a.lon) < std::tie(b.lat, b.lon); });
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (ring.size() < 4 || distinct.size() < 3)
        throw InvalidPolygon("ring needs at least 3 distinct vertices, got " + std::to_string(distinct.size()));

    double lat0 = 0.0, lon0 = 0.0;
    const std::size_t n = ring.size() - 1;
    for (std::size_t i = 0; i < n; ++i) {
        lat0 += ring[i].lat;
        lon0 += ring[i].lon;
    }
    const LocalPlane plane{{lat0 / n, lon0 / n}, std::cos(lat0 / n * kDegToRad)};

    // Shoelace over the closed ring.
    double twice_area = 0.0, cx = 0.0, cy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x0 = plane.x(ring[i]), y0 = plane.y(ring[i]);
        const double x1 = plane.x(ring[i + 1]), y1 = plane.y(ring[i + 1]);
        const double cross = x0 * y1 - x1 * y0;
        twice_area += cross;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    const double area = twice_area / 2.0;
    if (!(std::abs(area) >= kMinAreaM2)) throw DegeneratePolygon("footprint area below 1e-10 m^2");

    FootprintPolygon poly;
    poly.ring_ = std::move(ring);
    poly.area_m2_ = std::abs(area);
    poly.centroid_ = plane.back(cx / (6.0 * area), cy / (6.0 * area));
    return poly;
}

bool point_in_ring(const GeoPoint& p, std::span<const GeoPoint> ring) noexcept
{
    if (ring.size() < 2) return false;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i)
        if (on_segment(p, ring[i], ring[i + 1])) return true;

    bool inside = false;
    for (std::size_t i = 0, j = ring.size() - 2; i + 1 < ring.size(); j = i++) {
        const GeoPoint& a = ring[i];
        const GeoPoint& b = ring[j];
        if ((a.lat > p.lat) != (b.lat > p.lat)) {
            const double lon_at = (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon;
            if (p.lon < lon_at) inside = !inside;
        }
    }
    return inside;
}

bool point_in_polygon(const GeoPoint& p, const FootprintPolygon& poly) noexcept
{
    return point_in_ring(p, poly.ring());
}

SpatialIndex::SpatialIndex(std::vector<Entry> entries) : entries_(std::move(entries))
{
    for (const auto& e : entries_)
        if (!is_valid(e.point)) throw InvalidArgument("spatial index entry " + std::to_string(e.id) + " is invalid");
    std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
        return std::tie(a.point.lat, a.id) < std::tie(b.point.lat, b.id);
    });
}

std::optional<NearestHit> SpatialIndex::nearest(const GeoPoint& q, double max_radius_m) const
{
    std::optional<NearestHit> best;
    auto consider = [&](const Entry& e) {
        const double d = haversine_distance(q, e.point);
        if (d > max_radius_m) return;
        if (!best || d < best->distance_m || (d == best->distance_m && e.id < best->id)) best = NearestHit{e.id, d};
    };
    auto bound = [&]() { return best ? best->distance_m : max_radius_m; };
    // Great-circle distance is never shorter than the meridional arc; the
    // small slack absorbs rounding so equal-distance ties are still visited.
    auto lat_gap = [&](const Entry& e) { return std::abs(e.point.lat - q.lat) * kDegToRad * kEarthRadiusM * (1.0 - 1e-12); };

    const auto mid = std::lower_bound(entries_.begin(), entries_.end(), q.lat,
                                      [](const Entry& e, double lat) { return e.point.lat < lat; });
    auto up = mid;
    auto down = mid;
    bool go_up = up != entries_.end();
    bool go_down = down != entries_.begin();
    while (go_up || go_down) {
        if (go_up) {
            if (lat_gap(*up) > bound()) {
                go_up = false;
            } else {
                consider(*up);
                go_up = ++up != entries_.end();
            }
        }
        if (go_down) {
            const Entry& e = *(down - 1);
            if (lat_gap(e) > bound()) {
                go_down = false;
            } else {
                consider(e);
                go_down = --down != entries_.begin();
            }
        }
    }
    return best;
}

}  // namespace bic
