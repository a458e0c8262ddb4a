#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "bic/geo.hpp"
#include "bic/osm.hpp"

namespace bic {

inline constexpr std::string_view kStreetViewImageUrl = "https://maps.googleapis.com/maps/api/streetview";
inline constexpr std::string_view kStreetViewMetadataUrl = "https://maps.googleapis.com/maps/api/streetview/metadata";

/// Camera parameters shared by every viewpoint of a run. Image size and
/// pitch default to the values the benchmark imagery was captured with.
struct CameraDefaults {
    double pitch = 10.0;
    int width = 512;
    int height = 512;
    double fov = 90.0;

    /// Throws InvalidArgument when out of range.
    void validate() const;
};

struct ViewpointSpec {
    GeoPoint query_location;
    double heading = 0.0;  // [0, 360)
    double pitch = 10.0;
    int width = 512;
    int height = 512;
    double fov = 90.0;

    friend bool operator==(const ViewpointSpec&, const ViewpointSpec&) = default;
};

/// Places `k` query locations `offset_m` from the footprint centroid at
/// equally spaced azimuths starting due north, each camera facing back at
/// the centroid.
std::vector<ViewpointSpec> sample_viewpoints(const BuildingRecord& building, int k, double offset_m,
                                             const CameraDefaults& camera = {});

/// Static image request. Parameter order is fixed so the URL doubles as a
/// cache key: size, location (6 decimals), heading, pitch, fov, key.
std::string build_image_request(const ViewpointSpec& v, std::string_view api_key,
                                std::string_view endpoint = kStreetViewImageUrl);

/// Closest-panorama lookup for the viewpoint's query location.
std::string build_metadata_request(const ViewpointSpec& v, std::string_view api_key,
                                   std::string_view endpoint = kStreetViewMetadataUrl);

// --- transport ------------------------------------------------------------

struct HttpResponse {
    int status = 0;
    std::string body;
    std::string content_type;
};

/// GET-only HTTP transport. Connection-level failures throw TransportError;
/// HTTP error statuses are returned as responses.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse get(const std::string& url) = 0;
};

class HttpTransport final : public Transport {
public:
    explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(30)) : timeout_(timeout) {}
    HttpResponse get(const std::string& url) override;

private:
    std::chrono::seconds timeout_;
};

/// Removes the `key` query parameter so fixtures do not depend on credentials.
std::string strip_api_key(std::string_view url);

/// Hex SHA-256 of the key-stripped URL; names replay fixture files.
std::string replay_key(std::string_view url);

/// Answers from a directory of `<replay_key>.meta.json` + `<replay_key>.body`
/// pairs. Unknown URLs get a 404.
class ReplayTransport final : public Transport {
public:
    explicit ReplayTransport(std::filesystem::path dir) : dir_(std::move(dir)) {}
    HttpResponse get(const std::string& url) override;

    /// Writes one fixture pair.
    static void record(const std::filesystem::path& dir, std::string_view url, const HttpResponse& response);

private:
    std::filesystem::path dir_;
};

/// Forwards to an inner transport and writes every exchange as a fixture.
class RecordingTransport final : public Transport {
public:
    RecordingTransport(Transport& inner, std::filesystem::path dir) : inner_(inner), dir_(std::move(dir)) {}
    HttpResponse get(const std::string& url) override;

private:
    Transport& inner_;
    std::filesystem::path dir_;
};

// --- rate limiting and retries ---------------------------------------------

class Clock {
public:
    using time_point = std::chrono::steady_clock::time_point;
    using duration = std::chrono::steady_clock::duration;

    virtual ~Clock() = default;
    virtual time_point now() = 0;
    virtual void sleep_for(duration d) = 0;

    static Clock& system();
};

/// Sliding-window limiter: at most `per_second` acquisitions inside any
/// one-second window. Thread-safe; waiting callers are served in turn.
class RateLimiter {
public:
    RateLimiter(std::size_t per_second, Clock& clock = Clock::system());
    void acquire();

private:
    std::size_t limit_;
    Clock& clock_;
    std::mutex mutex_;
    std::deque<Clock::time_point> recent_;
};

class RateLimitedTransport final : public Transport {
public:
    RateLimitedTransport(Transport& inner, RateLimiter& limiter) : inner_(inner), limiter_(limiter) {}
    HttpResponse get(const std::string& url) override
    {
        limiter_.acquire();
        return inner_.get(url);
    }

private:
    Transport& inner_;
    RateLimiter& limiter_;
};

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds base_delay{500};
};

/// Retries on TransportError and on HTTP 5xx with exponential backoff
/// (base, 2*base, ...). Throws TransportError once attempts are exhausted.
HttpResponse get_with_retry(Transport& transport, const std::string& url, const RetryPolicy& policy,
                            Clock& clock = Clock::system());

// --- metadata and images -----------------------------------------------------

enum class PanoStatus { ok, zero_results, error };

struct PanoMetadata {
    PanoStatus status = PanoStatus::error;
    std::string pano_id;
    std::optional<GeoPoint> pano_location;  // present iff status == ok
};

/// Parses a metadata JSON body. Unknown status strings and malformed
/// bodies map to PanoStatus::error.
PanoMetadata parse_metadata(std::string_view body);

/// Throws TransportError after retries.
PanoMetadata fetch_metadata(const ViewpointSpec& v, Transport& transport, std::string_view api_key,
                            const RetryPolicy& retry = {}, Clock& clock = Clock::system(),
                            std::string_view endpoint = kStreetViewMetadataUrl);

enum class FetchStatus { fetched, no_pano, failed };
enum class StageStatus { raw, kept, rejected_outlier };

std::string_view to_string(FetchStatus s) noexcept;
std::string_view to_string(StageStatus s) noexcept;
std::optional<FetchStatus> fetch_status_from_string(std::string_view s) noexcept;
std::optional<StageStatus> stage_status_from_string(std::string_view s) noexcept;

struct ImageRecord {
    std::int64_t building_id = 0;
    int viewpoint_index = 0;
    std::string pano_id;  // empty unless a panorama was found
    ViewpointSpec viewpoint;
    std::string cache_path;  // relative to the cache base; empty unless fetched
    FetchStatus fetch_status = FetchStatus::failed;
    StageStatus stage_status = StageStatus::raw;
    std::string error;

    /// Stable identifier used as the classifier image id.
    std::string key() const;
};

/// On-disk image store rooted at a base directory. Images live at
/// `cache/<pano_id>/<heading rounded to int>.png` below the base.
class ImageCache {
public:
    explicit ImageCache(std::filesystem::path base) : base_(std::move(base)) {}

    static std::string relative_path(std::string_view pano_id, double heading);
    std::filesystem::path resolve(std::string_view relative) const { return base_ / std::filesystem::path(relative); }
    const std::filesystem::path& base() const noexcept { return base_; }

private:
    std::filesystem::path base_;
};

struct FetchContext {
    Transport& transport;
    const ImageCache& cache;
    std::string api_key;
    RetryPolicy retry{};
    Clock* clock = &Clock::system();
    std::string image_endpoint{kStreetViewImageUrl};
    std::string metadata_endpoint{kStreetViewMetadataUrl};
};

/// Downloads the image for a viewpoint whose metadata lookup has already
/// been made. A cache hit skips the network. Never throws for transport
/// problems; they become FetchStatus::failed.
ImageRecord fetch_image(std::int64_t building_id, int viewpoint_index, const ViewpointSpec& v,
                        const PanoMetadata& metadata, const FetchContext& ctx);

/// Samples viewpoints for one building, looks up their panoramas and
/// fetches one image per distinct panorama. Viewpoints whose panorama was
/// already used by an earlier viewpoint of the same building are dropped.
std::vector<ImageRecord> acquire_building_imagery(const BuildingRecord& building, int k, double offset_m,
                                                  const CameraDefaults& camera, const FetchContext& ctx);

using BuildingDoneFn = std::function<void(std::int64_t building_id, const std::vector<ImageRecord>&)>;

/// Runs acquire_building_imagery over many buildings on `workers` threads.
/// `on_done` is called (serialized) as each building completes; buildings
/// in `skip` are not visited. Returns all records sorted by
/// (building_id, viewpoint_index).
std::vector<ImageRecord> acquire_imagery(const std::vector<BuildingRecord>& buildings, int k, double offset_m,
                                         const CameraDefaults& camera, const FetchContext& ctx, std::size_t workers,
                                         const std::set<std::int64_t>& skip = {},
                                         const BuildingDoneFn& on_done = {});

}  // namespace bic
