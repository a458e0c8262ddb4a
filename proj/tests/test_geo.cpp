#include <doctest.h>

#include <random>

#include "bic/error.hpp"
#include "bic/geo.hpp"
#include "oracles.hpp"

using namespace bic;
using doctest::Approx;

namespace {

FootprintPolygon unit_square()
{
    return FootprintPolygon::from_ring({{0, 0}, {0, 1}, {1, 1}, {1, 0}, {0, 0}});
}

}  // namespace

TEST_CASE("haversine examples")
{
    CHECK(haversine_distance({0, 0}, {0, 0}) == 0.0);
    // R * 1 degree in radians
    CHECK(haversine_distance({0, 0}, {0, 1}) == Approx(111195.0802335329).epsilon(1e-12));
    CHECK(haversine_distance({0, 0}, {0, 180}) == haversine_distance({0, 180}, {0, 0}));
    CHECK(haversine_distance({0, 0}, {0, 180}) == Approx(kEarthRadiusM * std::numbers::pi));
    CHECK(haversine_distance({90, 0}, {-90, 0}) == Approx(kEarthRadiusM * std::numbers::pi));
}

TEST_CASE("bearing examples")
{
    CHECK(initial_bearing({0, 0}, {1, 0}) == Approx(0.0));
    CHECK(initial_bearing({0, 0}, {0, 1}) == Approx(90.0));
    CHECK(initial_bearing({0, 0}, {-1, 0}) == Approx(180.0));
    CHECK(initial_bearing({0, 0}, {0, -1}) == Approx(270.0));
    // Munich: fixed from a separate evaluation of the spherical formula.
    CHECK(initial_bearing({48.1374, 11.5755}, {48.1450, 11.5580}) == Approx(303.0631209143355).epsilon(1e-9));
    CHECK_THROWS_AS(initial_bearing({10, 10}, {10, 10}), CoincidentPoints);
}

TEST_CASE("normalize_degrees")
{
    CHECK(normalize_degrees(0) == 0);
    CHECK(normalize_degrees(360) == 0);
    CHECK(normalize_degrees(-90) == 270);
    CHECK(normalize_degrees(725) == Approx(5));
    CHECK(normalize_degrees(-1e-20) < 360.0);
}

TEST_CASE("GeoPoint validation")
{
    CHECK(is_valid({90, 180}));
    CHECK_FALSE(is_valid({90.5, 0}));
    CHECK_FALSE(is_valid({0, -180.01}));
    CHECK_FALSE(is_valid({std::nan(""), 0}));
    CHECK_THROWS_AS(GeoPoint::checked(100, 0), InvalidArgument);
    CHECK(GeoPoint::checked(1, 2) == GeoPoint{1, 2});
}

TEST_CASE("destination_point inverts distance and bearing")
{
    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        const GeoPoint a = oracle::random_point(rng, -60, 60);
        std::uniform_real_distribution<double> brg(0, 360), dist(1, 20000);
        const double b = brg(rng), d = dist(rng);
        const GeoPoint c = destination_point(a, b, d);
        CHECK(haversine_distance(a, c) == Approx(d).epsilon(1e-9));
        CHECK(oracle::angle_gap(initial_bearing(a, c), b) < 1e-6);
    }
}

TEST_CASE("centroid examples")
{
    const auto sq = unit_square();
    CHECK(sq.centroid().lat == Approx(0.5).epsilon(1e-6));
    CHECK(sq.centroid().lon == Approx(0.5).epsilon(1e-6));
    const auto tri = FootprintPolygon::from_ring({{0, 0}, {0, 3}, {3, 0}, {0, 0}});
    CHECK(tri.centroid().lat == Approx(1.0).epsilon(1e-3));
    CHECK(tri.centroid().lon == Approx(1.0).epsilon(1e-3));
    CHECK(polygon_centroid(tri) == tri.centroid());
}

TEST_CASE("footprint construction")
{
    const auto open = FootprintPolygon::from_ring({{0, 0}, {0, 1e-4}, {1e-4, 1e-4}});
    CHECK(open.ring().size() == 4);
    CHECK(open.ring().front() == open.ring().back());
    CHECK(open.area_m2() == Approx(0.5 * 11.1195 * 11.1195).epsilon(1e-3));
    // orientation does not change area sign
    const auto cw = FootprintPolygon::from_ring({{0, 0}, {1e-4, 1e-4}, {0, 1e-4}});
    CHECK(cw.area_m2() == Approx(open.area_m2()));

    CHECK_THROWS_AS(FootprintPolygon::from_ring({{0, 0}, {0, 1}}), InvalidPolygon);
    CHECK_THROWS_AS(FootprintPolygon::from_ring({{0, 0}, {0, 1}, {0, 1}, {0, 0}}), InvalidPolygon);
    CHECK_THROWS_AS(FootprintPolygon::from_ring({{0, 0}, {0, 1}, {95, 1}}), InvalidPolygon);
    CHECK_THROWS_AS(FootprintPolygon::from_ring({{0, 0}, {0, 1}, {0, 2}}), DegeneratePolygon);
}

TEST_CASE("point in polygon examples")
{
    const auto sq = unit_square();
    CHECK(point_in_polygon({0.5, 0.5}, sq));
    CHECK_FALSE(point_in_polygon({2, 2}, sq));
    CHECK(point_in_polygon({0, 0.5}, sq));
    CHECK(point_in_polygon({1, 1}, sq));
    CHECK(point_in_polygon({0.5, 1}, sq));
    CHECK_FALSE(point_in_polygon({0.5, 1.0001}, sq));
    CHECK_FALSE(point_in_polygon({-0.0001, 0.5}, sq));

    // concave L shape
    const auto ell = FootprintPolygon::from_ring({{0, 0}, {0, 2}, {1, 2}, {1, 1}, {2, 1}, {2, 0}});
    CHECK(point_in_polygon({0.5, 1.5}, ell));
    CHECK(point_in_polygon({1.5, 0.5}, ell));
    CHECK_FALSE(point_in_polygon({1.5, 1.5}, ell));
}

TEST_CASE("convex polygon centroids lie inside")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> radius(5, 60), jitter(0, 1);
    for (int t = 0; t < 500; ++t) {
        const GeoPoint c = oracle::random_point(rng, -70, 70, -179, 179);
        // points on an ellipse at increasing angles form a convex ring
        const int n = 3 + t % 9;
        const double rx = radius(rng), ry = radius(rng);
        std::vector<GeoPoint> ring;
        for (int k = 0; k < n; ++k) {
            const double a = 2 * std::numbers::pi * (k + 0.8 * jitter(rng)) / n;
            const GeoPoint east = destination_point(c, 90.0, rx * std::cos(a));
            ring.push_back(destination_point(east, 0.0, ry * std::sin(a)));
        }
        const auto poly = FootprintPolygon::from_ring(ring);
        CHECK(point_in_polygon(poly.centroid(), poly));
    }
}

TEST_CASE("distance is a metric and matches the vector oracle")
{
    std::mt19937_64 rng(3);
    for (int i = 0; i < 1000; ++i) {
        const auto a = oracle::random_point(rng), b = oracle::random_point(rng), c = oracle::random_point(rng);
        const double ab = haversine_distance(a, b), bc = haversine_distance(b, c), ac = haversine_distance(a, c);
        CHECK(haversine_distance(a, a) == 0.0);
        CHECK(ab == haversine_distance(b, a));
        CHECK(ac <= (ab + bc) * (1 + 1e-6));
        CHECK(ab == Approx(oracle::vector_distance(a, b)).epsilon(1e-6));
    }
}

TEST_CASE("bearing range, oracle agreement and reciprocity")
{
    std::mt19937_64 rng(5);
    for (int i = 0; i < 1000; ++i) {
        const auto a = oracle::random_point(rng, -80, 80);
        const auto b = oracle::random_nearby(rng, a, 10000.0);
        if (a == b) continue;
        const double ab = initial_bearing(a, b), ba = initial_bearing(b, a);
        CHECK(ab >= 0.0);
        CHECK(ab < 360.0);
        CHECK(oracle::angle_gap(ab, oracle::vector_bearing(a, b)) < 1e-6);
        CHECK(oracle::angle_gap(ab, ba + 180.0) <= 0.5);
    }
}

TEST_CASE("spatial index examples")
{
    CHECK_FALSE(SpatialIndex{}.nearest({0, 0}, 1e9));
    const SpatialIndex one(std::vector<SpatialIndex::Entry>{{7, {10, 20}}});
    const auto hit = one.nearest({10, 20}, 0.0);
    REQUIRE(hit);
    CHECK(hit->id == 7);
    CHECK(hit->distance_m == 0.0);
    CHECK_FALSE(one.nearest({10, 20.001}, 50.0));

    // equidistant entries resolve to the smaller id
    const SpatialIndex tie(std::vector<SpatialIndex::Entry>{{9, {0, 1}}, {4, {0, -1}}});
    CHECK(tie.nearest({0, 0}, 1e9)->id == 4);
}

TEST_CASE("spatial index agrees with a linear scan")
{
    std::mt19937_64 rng(17);
    for (int fixture = 0; fixture < 5; ++fixture) {
        std::vector<SpatialIndex::Entry> entries;
        const GeoPoint city = oracle::random_point(rng, -60, 60);
        for (int i = 0; i < 1000; ++i) entries.push_back({i, oracle::random_nearby(rng, city, 5000.0)});
        // duplicates to force ties
        entries.push_back({2000, entries[3].point});
        const SpatialIndex index(entries);
        CHECK(index.size() == entries.size());
        for (int q = 0; q < 200; ++q) {
            const GeoPoint p = oracle::random_nearby(rng, city, 6000.0);
            for (double radius : {50.0, 500.0, 1e7}) {
                const auto got = index.nearest(p, radius);
                const auto want = oracle::linear_nearest(entries, p, radius);
                REQUIRE(got.has_value() == want.has_value());
                if (got) CHECK(*got == *want);
            }
        }
        CHECK(index.nearest(entries[3].point, 1.0)->id == 3);
    }
    // whole-globe scatter, including near the poles and the antimeridian
    std::vector<SpatialIndex::Entry> global;
    for (int i = 0; i < 1000; ++i) global.push_back({i, oracle::random_point(rng, -89.9, 89.9)});
    const SpatialIndex index(global);
    for (int q = 0; q < 500; ++q) {
        const auto p = oracle::random_point(rng, -90, 90);
        CHECK(*index.nearest(p, 1e9) == *oracle::linear_nearest(global, p, 1e9));
    }
}
