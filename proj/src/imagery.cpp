#include "bic/imagery.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include <nlohmann/json.hpp>

#include "bic/error.hpp"
#include "bic/util.hpp"
#include "http_client.hpp"

namespace bic {

using json = nlohmann::json;

void CameraDefaults::validate() const
{
    if (width <= 0 || height <= 0) throw InvalidArgument("image size must be positive");
    if (!(pitch >= -90.0 && pitch <= 90.0)) throw InvalidArgument("pitch must lie in [-90, 90]");
    if (!(fov > 0.0 && fov <= 120.0)) throw InvalidArgument("fov must lie in (0, 120]");
}

std::vector<ViewpointSpec> sample_viewpoints(const BuildingRecord& building, int k, double offset_m,
                                             const CameraDefaults& camera)
{
    if (k < 1) throw InvalidArgument("viewpoint count must be at least 1");
    if (!(offset_m > 0.0)) throw InvalidArgument("viewpoint offset must be positive");
    camera.validate();

    const GeoPoint centre = polygon_centroid(building.footprint);
    std::vector<ViewpointSpec> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const double azimuth = 360.0 * i / k;
        const GeoPoint query = destination_point(centre, azimuth, offset_m);
        out.push_back({query, initial_bearing(query, centre), camera.pitch, camera.width, camera.height, camera.fov});
    }
    return out;
}

std::string build_image_request(const ViewpointSpec& v, std::string_view api_key, std::string_view endpoint)
{
    return std::string(endpoint) +
           strprintf("?size=%dx%d&location=%.6f,%.6f&heading=%.1f&pitch=%.1f&fov=%.1f&key=", v.width, v.height,
                     v.query_location.lat, v.query_location.lon, v.heading, v.pitch, v.fov) +
           std::string(api_key);
}

std::string build_metadata_request(const ViewpointSpec& v, std::string_view api_key, std::string_view endpoint)
{
    return std::string(endpoint) + strprintf("?location=%.6f,%.6f&key=", v.query_location.lat, v.query_location.lon) +
           std::string(api_key);
}

// --- transport ------------------------------------------------------------

HttpResponse HttpTransport::get(const std::string& url)
{
    auto reply = http::get(url, timeout_);
    if (!reply) throw TransportError("connection failed: " + strip_api_key(url));
    return {reply->status, std::move(reply->body), std::move(reply->content_type)};
}

std::string strip_api_key(std::string_view url)
{
    const auto q = url.find('?');
    if (q == std::string_view::npos) return std::string(url);
    std::string out(url.substr(0, q));
    std::string_view query = url.substr(q + 1);
    char sep = '?';
    while (!query.empty()) {
        const auto amp = query.find('&');
        const auto param = query.substr(0, amp);
        if (param.substr(0, 4) != "key=" && param != "key") {
            out += sep;
            out += param;
            sep = '&';
        }
        if (amp == std::string_view::npos) break;
        query.remove_prefix(amp + 1);
    }
    return out;
}

std::string replay_key(std::string_view url) { return sha256_hex(strip_api_key(url)); }

HttpResponse ReplayTransport::get(const std::string& url)
{
    const std::string key = replay_key(url);
    const auto meta_path = dir_ / (key + ".meta.json");
    if (!std::filesystem::exists(meta_path)) return {404, {}, {}};
    const json meta = json::parse(read_file(meta_path));
    HttpResponse r;
    r.status = meta.value("status", 200);
    r.content_type = meta.value("content_type", std::string{});
    const auto body_path = dir_ / (key + ".body");
    if (std::filesystem::exists(body_path)) r.body = read_file(body_path);
    return r;
}

void ReplayTransport::record(const std::filesystem::path& dir, std::string_view url, const HttpResponse& response)
{
    const std::string key = replay_key(url);
    const json meta = {{"url", strip_api_key(url)}, {"status", response.status}, {"content_type", response.content_type}};
    write_file_atomic(dir / (key + ".meta.json"), meta.dump(2) + "\n");
    write_file_atomic(dir / (key + ".body"), response.body);
}

HttpResponse RecordingTransport::get(const std::string& url)
{
    HttpResponse r = inner_.get(url);
    ReplayTransport::record(dir_, url, r);
    return r;
}

// --- rate limiting and retries ---------------------------------------------

namespace {

class SystemClock final : public Clock {
public:
    time_point now() override { return std::chrono::steady_clock::now(); }
    void sleep_for(duration d) override { std::this_thread::sleep_for(d); }
};

}  // namespace

Clock& Clock::system()
{
    static SystemClock clock;
    return clock;
}

RateLimiter::RateLimiter(std::size_t per_second, Clock& clock) : limit_(per_second), clock_(clock)
{
    if (per_second == 0) throw InvalidArgument("rate limit must be positive");
}

void RateLimiter::acquire()
{
    constexpr auto window = std::chrono::seconds(1);
    std::lock_guard lock(mutex_);
    for (;;) {
        const auto now = clock_.now();
        while (!recent_.empty() && now - recent_.front() >= window) recent_.pop_front();
        if (recent_.size() < limit_) {
            recent_.push_back(now);
            return;
        }
        clock_.sleep_for(recent_.front() + window - now);
    }
}

HttpResponse get_with_retry(Transport& transport, const std::string& url, const RetryPolicy& policy, Clock& clock)
{
    std::string last_error = "no attempts made";
    auto delay = std::chrono::duration_cast<Clock::duration>(policy.base_delay);
    for (int attempt = 1; attempt <= policy.attempts; ++attempt) {
        try {
            HttpResponse r = transport.get(url);
            if (r.status < 500) return r;
            last_error = strprintf("HTTP %d", r.status);
        } catch (const TransportError& e) {
            last_error = e.what();
        }
        if (attempt < policy.attempts) {
            clock.sleep_for(delay);
            delay *= 2;
        }
    }
    throw TransportError(strprintf("%d attempts failed for %s: ", policy.attempts, strip_api_key(url).c_str()) +
                         last_error);
}

// --- metadata and images -----------------------------------------------------

PanoMetadata parse_metadata(std::string_view body)
{
    const json doc = json::parse(body, nullptr, /*allow_exceptions=*/false);
    PanoMetadata m;
    if (!doc.is_object() || !doc.contains("status") || !doc["status"].is_string()) return m;
    const auto status = doc["status"].get<std::string>();
    if (status == "ZERO_RESULTS") {
        m.status = PanoStatus::zero_results;
    } else if (status == "OK") {
        const auto& loc = doc.value("location", json::object());
        if (!doc.contains("pano_id") || !doc["pano_id"].is_string() || !loc.contains("lat") || !loc.contains("lng") ||
            !loc["lat"].is_number() || !loc["lng"].is_number())
            return m;
        const GeoPoint p{loc["lat"].get<double>(), loc["lng"].get<double>()};
        if (!is_valid(p) || doc["pano_id"].get<std::string>().empty()) return m;
        m.status = PanoStatus::ok;
        m.pano_id = doc["pano_id"].get<std::string>();
        m.pano_location = p;
    }
    return m;
}

PanoMetadata fetch_metadata(const ViewpointSpec& v, Transport& transport, std::string_view api_key,
                            const RetryPolicy& retry, Clock& clock, std::string_view endpoint)
{
    const HttpResponse r = get_with_retry(transport, build_metadata_request(v, api_key, endpoint), retry, clock);
    if (r.status != 200) return {};
    return parse_metadata(r.body);
}

std::string_view to_string(FetchStatus s) noexcept
{
    switch (s) {
    case FetchStatus::fetched: return "fetched";
    case FetchStatus::no_pano: return "no_pano";
    case FetchStatus::failed: return "failed";
    }
    return "failed";
}

std::string_view to_string(StageStatus s) noexcept
{
    switch (s) {
    case StageStatus::raw: return "raw";
    case StageStatus::kept: return "kept";
    case StageStatus::rejected_outlier: return "rejected_outlier";
    }
    return "raw";
}

std::optional<FetchStatus> fetch_status_from_string(std::string_view s) noexcept
{
    for (auto v : {FetchStatus::fetched, FetchStatus::no_pano, FetchStatus::failed})
        if (to_string(v) == s) return v;
    return std::nullopt;
}

std::optional<StageStatus> stage_status_from_string(std::string_view s) noexcept
{
    for (auto v : {StageStatus::raw, StageStatus::kept, StageStatus::rejected_outlier})
        if (to_string(v) == s) return v;
    return std::nullopt;
}

std::string ImageRecord::key() const { return strprintf("%lld/%d", static_cast<long long>(building_id), viewpoint_index); }

std::string ImageCache::relative_path(std::string_view pano_id, double heading)
{
    std::string safe(pano_id);
    for (char& c : safe)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    const long rounded = std::lround(heading) % 360;
    return "cache/" + safe + "/" + std::to_string(rounded) + ".png";
}

ImageRecord fetch_image(std::int64_t building_id, int viewpoint_index, const ViewpointSpec& v,
                        const PanoMetadata& metadata, const FetchContext& ctx)
{
    ImageRecord rec;
    rec.building_id = building_id;
    rec.viewpoint_index = viewpoint_index;
    rec.viewpoint = v;
    if (metadata.status == PanoStatus::zero_results) {
        rec.fetch_status = FetchStatus::no_pano;
        return rec;
    }
    if (metadata.status != PanoStatus::ok) {
        rec.fetch_status = FetchStatus::failed;
        rec.error = "metadata lookup failed";
        return rec;
    }
    rec.pano_id = metadata.pano_id;

    const std::string relative = ImageCache::relative_path(metadata.pano_id, v.heading);
    const auto target = ctx.cache.resolve(relative);
    if (std::filesystem::exists(target)) {
        rec.cache_path = relative;
        rec.fetch_status = FetchStatus::fetched;
        return rec;
    }
    try {
        const HttpResponse r = get_with_retry(ctx.transport, build_image_request(v, ctx.api_key, ctx.image_endpoint),
                                              ctx.retry, *ctx.clock);
        if (r.status != 200 || r.body.empty()) {
            rec.fetch_status = FetchStatus::failed;
            rec.error = strprintf("image request answered HTTP %d", r.status);
            return rec;
        }
        write_file_atomic(target, r.body);
        rec.cache_path = relative;
        rec.fetch_status = FetchStatus::fetched;
    } catch (const TransportError& e) {
        rec.fetch_status = FetchStatus::failed;
        rec.error = e.what();
    }
    return rec;
}

std::vector<ImageRecord> acquire_building_imagery(const BuildingRecord& building, int k, double offset_m,
                                                  const CameraDefaults& camera, const FetchContext& ctx)
{
    std::vector<ImageRecord> out;
    std::set<std::string> seen_panos;
    const auto viewpoints = sample_viewpoints(building, k, offset_m, camera);
    for (std::size_t i = 0; i < viewpoints.size(); ++i) {
        const int index = static_cast<int>(i);
        PanoMetadata meta;
        try {
            meta = fetch_metadata(viewpoints[i], ctx.transport, ctx.api_key, ctx.retry, *ctx.clock,
                                  ctx.metadata_endpoint);
        } catch (const TransportError& e) {
            ImageRecord rec;
            rec.building_id = building.id;
            rec.viewpoint_index = index;
            rec.viewpoint = viewpoints[i];
            rec.fetch_status = FetchStatus::failed;
            rec.error = e.what();
            out.push_back(std::move(rec));
            continue;
        }
        if (meta.status == PanoStatus::ok && !seen_panos.insert(meta.pano_id).second) continue;
        out.push_back(fetch_image(building.id, index, viewpoints[i], meta, ctx));
    }
    return out;
}

std::vector<ImageRecord> acquire_imagery(const std::vector<BuildingRecord>& buildings, int k, double offset_m,
                                         const CameraDefaults& camera, const FetchContext& ctx, std::size_t workers,
                                         const std::set<std::int64_t>& skip,
                                         const BuildingDoneFn& on_done)
{
    std::vector<const BuildingRecord*> todo;
    for (const auto& b : buildings)
        if (!skip.contains(b.id)) todo.push_back(&b);

    std::vector<std::vector<ImageRecord>> results(todo.size());
    std::atomic<std::size_t> next{0};
    std::mutex done_mutex;
    std::exception_ptr failure;

    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= todo.size()) return;
            try {
                results[i] = acquire_building_imagery(*todo[i], k, offset_m, camera, ctx);
                std::lock_guard lock(done_mutex);
                if (on_done) on_done(todo[i]->id, results[i]);
            } catch (...) {
                std::lock_guard lock(done_mutex);
                if (!failure) failure = std::current_exception();
                next = todo.size();
                return;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const std::size_t width = std::max<std::size_t>(1, std::min(workers, todo.size()));
        for (std::size_t w = 0; w < width; ++w) pool.emplace_back(work);
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<ImageRecord> all;
    for (auto& r : results)
        for (auto& rec : r) all.push_back(std::move(rec));
    std::sort(all.begin(), all.end(), [](const ImageRecord& a, const ImageRecord& b) {
        return std::tie(a.building_id, a.viewpoint_index) < std::tie(b.building_id, b.viewpoint_index);
    });
    return all;
}

}  // namespace bic
