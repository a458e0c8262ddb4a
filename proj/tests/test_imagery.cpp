#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <thread>
#include <set>
#include <sstream>

#include "bic/imagery.hpp"
#include "bic/osm.hpp"
#include "bic/util.hpp"
#include "fakes.hpp"
#include "oracles.hpp"
#include "synthetic_city.hpp"
#include "tempdir.hpp"

using namespace bic;
using namespace std::chrono_literals;
using bic::testing::CountingTransport;
using bic::testing::FakeClock;
using bic::testing::ScriptedTransport;
using bic::testing::TempDir;
using doctest::Approx;
using json = nlohmann::json;

namespace {

BuildingRecord building_at(std::int64_t id, GeoPoint c)
{
    const double d = 5e-5;
    return {id,
            FootprintPolygon::from_ring(
                {{c.lat - d, c.lon - d}, {c.lat - d, c.lon + d}, {c.lat + d, c.lon + d}, {c.lat + d, c.lon - d}}),
            BuildingClass::house, "house"};
}

std::map<std::string, std::string> tree_digest(const std::filesystem::path& root)
{
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[std::filesystem::relative(e.path(), root).string()] = file_digest(e.path());
    return out;
}

HttpResponse ok_metadata(const std::string& pano)
{
    return {200, json{{"status", "OK"}, {"pano_id", pano}, {"location", {{"lat", 1.0}, {"lng", 2.0}}}}.dump(),
            "application/json"};
}

}  // namespace

TEST_CASE("viewpoint sampling")
{
    const auto b = building_at(1, {45.0, 7.0});
    const auto one = sample_viewpoints(b, 1, 30.0);
    REQUIRE(one.size() == 1);
    CHECK(initial_bearing(b.footprint.centroid(), one[0].query_location) == Approx(0.0).epsilon(1e-9));
    CHECK(one[0].heading == Approx(180.0).epsilon(1e-6));
    CHECK(one[0].pitch == 10.0);
    CHECK(one[0].width == 512);
    CHECK(one[0].height == 512);
    CHECK(one[0].fov == 90.0);

    const auto four = sample_viewpoints(b, 4, 30.0);
    const double headings[] = {180, 270, 0, 90};
    const double azimuths[] = {0, 90, 180, 270};
    for (int i = 0; i < 4; ++i) {
        CHECK(oracle::angle_gap(four[i].heading, headings[i]) <= 0.5);
        CHECK(oracle::angle_gap(initial_bearing(b.footprint.centroid(), four[i].query_location), azimuths[i]) < 1e-6);
        CHECK(haversine_distance(b.footprint.centroid(), four[i].query_location) == Approx(30.0).epsilon(1e-9));
    }

    CHECK_THROWS_AS(sample_viewpoints(b, 0, 30.0), InvalidArgument);
    CHECK_THROWS_AS(sample_viewpoints(b, 4, 0.0), InvalidArgument);
    CHECK_THROWS_AS(sample_viewpoints(b, 4, 30.0, CameraDefaults{10, 0, 512, 90}), InvalidArgument);
}

TEST_CASE("every heading points at the centroid")
{
    std::mt19937_64 rng(21);
    for (int t = 0; t < 300; ++t) {
        const auto b = building_at(t, oracle::random_point(rng, -70, 70));
        const int k = 1 + t % 12;
        for (const auto& v : sample_viewpoints(b, k, 5.0 + t % 100)) {
            CHECK(v.heading >= 0.0);
            CHECK(v.heading < 360.0);
            CHECK(oracle::angle_gap(v.heading, oracle::vector_bearing(v.query_location, b.footprint.centroid())) < 1e-6);
        }
    }
}

TEST_CASE("request urls")
{
    ViewpointSpec v{{40.0, -75.0}, 90.0};
    CHECK(build_image_request(v, "K", "https://example.test/sv") ==
          "https://example.test/sv?size=512x512&location=40.000000,-75.000000&heading=90.0&pitch=10.0&fov=90.0&key=K");
    CHECK(build_image_request(v, "K") ==
          std::string(kStreetViewImageUrl) +
              "?size=512x512&location=40.000000,-75.000000&heading=90.0&pitch=10.0&fov=90.0&key=K");
    CHECK(build_image_request(v, "K") == build_image_request(ViewpointSpec{{40.0, -75.0}, 90.0}, "K"));
    v.query_location.lat = 40.0000004;
    CHECK(build_image_request(v, "K").find("location=40.000000,") != std::string::npos);
    CHECK(build_metadata_request(v, "K", "https://example.test/meta") ==
          "https://example.test/meta?location=40.000000,-75.000000&key=K");
}

TEST_CASE("api key stripping")
{
    CHECK(strip_api_key("http://x/a?size=1&key=SECRET&fov=2") == "http://x/a?size=1&fov=2");
    CHECK(strip_api_key("http://x/a?key=S") == "http://x/a");
    CHECK(strip_api_key("http://x/a?monkey=1&key=S") == "http://x/a?monkey=1");
    CHECK(strip_api_key("http://x/a") == "http://x/a");
    CHECK(replay_key("http://x/a?b=1&key=A") == replay_key("http://x/a?b=1&key=B"));
    CHECK(replay_key("http://x/a?b=1") != replay_key("http://x/a?b=2"));
}

TEST_CASE("metadata parsing and replay")
{
    TempDir tmp;
    const ViewpointSpec v{{40.0, -75.0}, 90.0};
    const std::string url = build_metadata_request(v, "K");
    ReplayTransport::record(tmp.path(), url, ok_metadata("abc"));
    ReplayTransport replay(tmp.path());
    const auto m = fetch_metadata(v, replay, "OTHER-KEY");
    CHECK(m.status == PanoStatus::ok);
    CHECK(m.pano_id == "abc");
    CHECK(m.pano_location == GeoPoint{1.0, 2.0});

    const ViewpointSpec w{{41.0, -75.0}, 90.0};
    ReplayTransport::record(tmp.path(), build_metadata_request(w, "K"), {200, R"({"status":"ZERO_RESULTS"})", ""});
    CHECK(fetch_metadata(w, replay, "K").status == PanoStatus::zero_results);

    // not recorded: 404 without retry
    ScriptedTransport never([](const std::string&, int) { return HttpResponse{404, {}, {}}; });
    FakeClock clock;
    CHECK(fetch_metadata({{0, 0}, 0}, never, "K", {}, clock).status == PanoStatus::error);
    CHECK(never.calls() == 1);
    CHECK(replay.get("http://nowhere/?a=1").status == 404);

    CHECK(parse_metadata("nonsense").status == PanoStatus::error);
    CHECK(parse_metadata(R"({"status":"OVER_QUERY_LIMIT"})").status == PanoStatus::error);
    CHECK(parse_metadata(R"({"status":"OK","pano_id":"x"})").status == PanoStatus::error);
    CHECK(parse_metadata(R"({"status":"OK","pano_id":"","location":{"lat":1,"lng":2}})").status == PanoStatus::error);
    CHECK(parse_metadata(R"({"status":"OK","pano_id":"x","location":{"lat":100,"lng":2}})").status ==
          PanoStatus::error);
}

TEST_CASE("recording transport writes replayable fixtures")
{
    TempDir tmp;
    ScriptedTransport inner([](const std::string& url, int) { return HttpResponse{200, "body:" + url, "text/plain"}; });
    RecordingTransport rec(inner, tmp.path());
    rec.get("http://x/a?q=1&key=SECRET");
    ReplayTransport replay(tmp.path());
    const auto r = replay.get("http://x/a?q=1&key=other");
    CHECK(r.status == 200);
    CHECK(r.body == "body:http://x/a?q=1&key=SECRET");
    CHECK(r.content_type == "text/plain");
    // the credential never lands in the metadata file
    for (const auto& e : std::filesystem::directory_iterator(tmp.path()))
        if (e.path().extension() == ".json") CHECK(read_file(e.path()).find("SECRET") == std::string::npos);
}

TEST_CASE("retry policy")
{
    FakeClock clock;
    SUBCASE("server errors are retried with doubling backoff")
    {
        ScriptedTransport t([](const std::string&, int n) { return HttpResponse{n < 2 ? 503 : 200, "ok", ""}; });
        CHECK(get_with_retry(t, "u", {}, clock).status == 200);
        CHECK(t.calls() == 3);
        REQUIRE(clock.sleeps.size() == 2);
        CHECK(clock.sleeps[0] == 500ms);
        CHECK(clock.sleeps[1] == 1000ms);
    }
    SUBCASE("connection failures are retried, then surface")
    {
        ScriptedTransport t([](const std::string&, int) -> HttpResponse { throw TransportError("refused"); });
        CHECK_THROWS_AS(get_with_retry(t, "http://h/p?key=S", {}, clock), TransportError);
        CHECK(t.calls() == 3);
        try {
            get_with_retry(t, "http://h/p?key=S", {}, clock);
        } catch (const TransportError& e) {
            CHECK(std::string(e.what()).find("refused") != std::string::npos);
            CHECK(std::string(e.what()).find("key=S") == std::string::npos);
        }
    }
    SUBCASE("client errors are not retried")
    {
        ScriptedTransport t([](const std::string&, int) { return HttpResponse{403, {}, {}}; });
        CHECK(get_with_retry(t, "u", {}, clock).status == 403);
        CHECK(t.calls() == 1);
        CHECK(clock.sleeps.empty());
    }
}

TEST_CASE("rate limiter keeps every one-second window within the limit")
{
    for (std::size_t limit : {1u, 3u, 10u}) {
        FakeClock clock;
        RateLimiter limiter(limit, clock);
        ScriptedTransport inner([](const std::string&, int) { return HttpResponse{200, {}, {}}; }, &clock);
        RateLimitedTransport t(inner, limiter);
        std::mt19937_64 rng(limit);
        std::uniform_int_distribution<int> gap_ms(0, 300);
        for (int i = 0; i < 200; ++i) {
            t.get("u");
            clock.advance(std::chrono::milliseconds(gap_ms(rng)));
        }
        const auto& times = inner.times;
        // Slide a half-open window starting at every observed call.
        for (std::size_t i = 0; i < times.size(); ++i) {
            std::size_t in_window = 0;
            for (std::size_t j = i; j < times.size() && times[j] - times[i] < 1s; ++j) ++in_window;
            CHECK(in_window <= limit);
        }
        CHECK(times.size() == 200);
    }
    FakeClock clock;
    CHECK_THROWS_AS(RateLimiter(0, clock), InvalidArgument);
}

TEST_CASE("rate limiter under concurrency")
{
    FakeClock clock;
    RateLimiter limiter(5, clock);
    ScriptedTransport inner([](const std::string&, int) { return HttpResponse{200, {}, {}}; }, &clock);
    RateLimitedTransport t(inner, limiter);
    std::vector<std::jthread> threads;
    for (int w = 0; w < 4; ++w)
        threads.emplace_back([&] {
            for (int i = 0; i < 25; ++i) t.get("u");
        });
    threads.clear();
    auto times = inner.times;
    std::sort(times.begin(), times.end());
    REQUIRE(times.size() == 100);
    for (std::size_t i = 0; i + 5 < times.size(); ++i) CHECK(times[i + 5] - times[i] >= 1s);
}

TEST_CASE("cache layout")
{
    CHECK(ImageCache::relative_path("abc", 90.0) == "cache/abc/90.png");
    CHECK(ImageCache::relative_path("abc", 359.6) == "cache/abc/0.png");
    CHECK(ImageCache::relative_path("a/../b", 12.4) == "cache/a____b/12.png");
    const ImageCache c("/base");
    CHECK(c.resolve("cache/x/1.png") == "/base/cache/x/1.png");
}

TEST_CASE("image fetch and cache contract")
{
    TempDir tmp;
    const ImageCache cache(tmp.path());
    FakeClock clock;
    const ViewpointSpec v{{40.0, -75.0}, 90.0};
    ScriptedTransport t([](const std::string&, int) { return HttpResponse{200, "PNGDATA", "image/png"}; });
    const FetchContext ctx{t, cache, "K", {}, &clock};
    const PanoMetadata meta{PanoStatus::ok, "pano1", GeoPoint{1, 2}};

    const auto first = fetch_image(5, 0, v, meta, ctx);
    CHECK(first.fetch_status == FetchStatus::fetched);
    CHECK(first.cache_path == "cache/pano1/90.png");
    CHECK(read_file(cache.resolve(first.cache_path)) == "PNGDATA");
    CHECK(t.calls() == 1);
    CHECK(t.urls[0] == build_image_request(v, "K"));

    const auto second = fetch_image(5, 0, v, meta, ctx);
    CHECK(t.calls() == 1);
    CHECK(second.cache_path == first.cache_path);
    CHECK(second.fetch_status == FetchStatus::fetched);
    CHECK(second.key() == "5/0");

    const auto none = fetch_image(5, 1, v, {PanoStatus::zero_results, {}, {}}, ctx);
    CHECK(none.fetch_status == FetchStatus::no_pano);
    CHECK(none.cache_path.empty());
    CHECK(t.calls() == 1);

    const auto broken = fetch_image(5, 2, v, {}, ctx);
    CHECK(broken.fetch_status == FetchStatus::failed);

    ScriptedTransport down([](const std::string&, int) { return HttpResponse{500, "x", ""}; });
    const FetchContext bad{down, cache, "K", {}, &clock};
    const auto failed = fetch_image(5, 3, v, {PanoStatus::ok, "pano2", GeoPoint{1, 2}}, bad);
    CHECK(failed.fetch_status == FetchStatus::failed);
    CHECK(down.calls() == 3);
    CHECK_FALSE(std::filesystem::exists(cache.resolve("cache/pano2/90.png")));
    ScriptedTransport missing([](const std::string&, int) { return HttpResponse{404, "", ""}; });
    const FetchContext gone{missing, cache, "K", {}, &clock};
    CHECK(fetch_image(5, 3, v, {PanoStatus::ok, "pano3", GeoPoint{1, 2}}, gone).fetch_status == FetchStatus::failed);
}

TEST_CASE("duplicate panoramas are fetched once per building")
{
    TempDir tmp;
    const ImageCache cache(tmp.path());
    FakeClock clock;
    ScriptedTransport t([](const std::string& url, int) {
        if (url.find("metadata") != std::string::npos) return ok_metadata("same");
        return HttpResponse{200, "img", "image/png"};
    });
    const FetchContext ctx{t, cache, "K", {}, &clock};
    const auto recs = acquire_building_imagery(building_at(1, {10, 10}), 4, 30.0, {}, ctx);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].viewpoint_index == 0);
    CHECK(t.calls() == 5);  // four lookups, one image

    ScriptedTransport flaky([](const std::string& url, int) -> HttpResponse {
        if (url.find("metadata") != std::string::npos) throw TransportError("down");
        return {200, "img", ""};
    });
    const FetchContext fctx{flaky, cache, "K", {}, &clock};
    const auto failed = acquire_building_imagery(building_at(2, {10, 10}), 2, 30.0, {}, fctx);
    REQUIRE(failed.size() == 2);
    for (const auto& r : failed) CHECK(r.fetch_status == FetchStatus::failed);
}

TEST_CASE("synthetic city acquisition")
{
    TempDir tmp;
    const auto files = synth::write_city(tmp / "city");
    const auto plan = synth::plan_city();
    std::ifstream in(files.osm);
    const auto buildings = parse_osm(in).records;
    FakeClock clock;
    ReplayTransport replay(files.replay_dir);
    CountingTransport counting(replay);

    auto run = [&](const std::filesystem::path& base, std::size_t workers) {
        const ImageCache cache(base);
        const FetchContext ctx{counting, cache, "K", {}, &clock};
        return acquire_imagery(buildings, synth::kViewpoints, synth::kOffsetM, {}, ctx, workers);
    };

    const auto a = run(tmp / "a", 4);
    std::size_t fetched = 0;
    std::map<std::int64_t, std::set<std::string>> panos;
    for (const auto& r : a) {
        if (r.fetch_status != FetchStatus::fetched) continue;
        ++fetched;
        CHECK(panos[r.building_id].insert(r.pano_id).second);
    }
    CHECK(fetched == plan.archive_images);
    std::size_t files_on_disk = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(tmp / "a" / "cache"))
        files_on_disk += e.is_regular_file();
    CHECK(files_on_disk == plan.archive_images);
    CHECK(std::is_sorted(a.begin(), a.end(), [](const ImageRecord& x, const ImageRecord& y) {
        return std::tie(x.building_id, x.viewpoint_index) < std::tie(y.building_id, y.viewpoint_index);
    }));

    // cache idempotence: a second pass over a warm cache changes nothing and
    // only repeats metadata lookups and the failing downloads
    const auto before = tree_digest(tmp / "a");
    const int calls_before = counting.calls;
    const auto again = run(tmp / "a", 2);
    CHECK(tree_digest(tmp / "a") == before);
    CHECK(again.size() == a.size());
    const int second_pass = counting.calls - calls_before;
    CHECK(second_pass == static_cast<int>(buildings.size() * synth::kViewpoints + 2 * 3));

    // a cold run with other worker counts builds the same tree
    run(tmp / "b", 1);
    CHECK(tree_digest(tmp / "b") == before);

    // skip set and completion callback
    std::vector<std::int64_t> done;
    const ImageCache cache(tmp / "c");
    const FetchContext ctx{counting, cache, "K", {}, &clock};
    const std::set<std::int64_t> skip = {buildings[0].id, buildings[1].id};
    const auto partial = acquire_imagery(buildings, synth::kViewpoints, synth::kOffsetM, {}, ctx, 3, skip,
                                         [&](std::int64_t id, const std::vector<ImageRecord>&) { done.push_back(id); });
    CHECK(done.size() == buildings.size() - 2);
    for (const auto& r : partial) CHECK_FALSE(skip.contains(r.building_id));
}
