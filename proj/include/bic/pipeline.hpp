#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bic/classifier.hpp"
#include "bic/evaluation.hpp"
#include "bic/fusion.hpp"
#include "bic/imagery.hpp"
#include "bic/osm.hpp"

namespace bic {

struct PipelineConfig {
    // paths
    std::filesystem::path osm_path;
    std::optional<BBox> bbox;
    std::filesystem::path out_dir = "out";
    std::filesystem::path cache_dir;  // empty: the output directory

    // viewpoints
    int viewpoints = 4;
    double offset_m = 30.0;
    CameraDefaults camera;

    // acquisition
    std::string transport = "live";  // live | replay
    std::filesystem::path replay_dir;
    std::string image_endpoint{kStreetViewImageUrl};
    std::string metadata_endpoint{kStreetViewMetadataUrl};
    std::size_t rate_limit = 10;  // requests per second
    std::size_t workers = 4;
    RetryPolicy retry;
    int http_timeout_s = 30;

    // classification
    std::string scene_backend = "stub";
    std::string building_backend = "stub";
    int classifier_timeout_s = 30;
    FusionConfig fusion;

    // evaluation and maps
    std::size_t sample_n = 0;  // 0: evaluate every labelled prediction
    std::uint64_t seed = 42;
    Averaging averaging = Averaging::weighted;
    double opacity_floor = 0.15;
    double density_cell_deg = 0.01;

    /// Throws InvalidArgument for out-of-range values.
    void validate() const;

    nlohmann::json to_json() const;
    /// Values present in `j` override the defaults; unknown keys are errors.
    static PipelineConfig from_json(const nlohmann::json& j);
    static PipelineConfig load(const std::filesystem::path& path);

    std::filesystem::path cache_base() const { return cache_dir.empty() ? out_dir : cache_dir; }
};

enum class Stage { ingest, fetch, filter, classify, fuse, eval, map };

inline constexpr Stage kAllStages[] = {Stage::ingest,   Stage::fetch, Stage::filter, Stage::classify,
                                       Stage::fuse,     Stage::eval,  Stage::map};

std::string_view to_string(Stage s) noexcept;
std::optional<Stage> stage_from_string(std::string_view s) noexcept;
std::vector<Stage> upstream_of(Stage s);
std::vector<std::string> outputs_of(Stage s);

enum class StageState { pending, running, done, failed };
std::string_view to_string(StageState s) noexcept;

struct StageRecord {
    StageState state = StageState::pending;
    std::string fingerprint;                       // hash of the config the stage depends on
    std::map<std::string, std::string> outputs;   // file -> sha256
    std::map<std::string, std::string> inputs;    // upstream file -> sha256 at run time
    std::string error;
};

/// Append-only run log (`manifest.jsonl`). Each line is an event; the
/// current state of every stage is the fold of all events.
class RunManifest {
public:
    explicit RunManifest(std::filesystem::path path);

    const std::string& run_id() const noexcept { return run_id_; }
    const nlohmann::json& config() const noexcept { return config_; }
    const StageRecord& stage(Stage s) const;

    /// Records the config snapshot; a new event is appended only when the
    /// snapshot differs from the last one.
    void record_config(const nlohmann::json& snapshot);
    void record_running(Stage s);
    void record_done(Stage s, std::string fingerprint, std::map<std::string, std::string> outputs,
                     std::map<std::string, std::string> inputs);
    void record_failed(Stage s, const std::string& error);

private:
    void apply(const nlohmann::json& event);
    void append(const nlohmann::json& event);

    std::filesystem::path path_;
    std::string run_id_;
    nlohmann::json config_;
    std::map<Stage, StageRecord> stages_;
};

/// Test seams; null members fall back to what the config describes.
struct PipelineHooks {
    Transport* transport = nullptr;
    ClassifierBackend* scene_backend = nullptr;
    ClassifierBackend* building_backend = nullptr;
    Clock* clock = nullptr;
};

struct StageOutcome {
    Stage stage;
    bool executed = false;  // false: outputs were already up to date
    std::string summary;
};

/// Runs stages against one output directory. Holds an exclusive lock on the
/// directory for its lifetime (RunLocked when another run owns it).
class Pipeline {
public:
    explicit Pipeline(PipelineConfig config, PipelineHooks hooks = {});
    ~Pipeline();
    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;

    /// Throws UpstreamIncomplete when an upstream stage is not done with
    /// intact outputs, StageFailed when the stage itself fails. A done stage
    /// whose outputs, inputs and config are unchanged is skipped unless
    /// `force` is set.
    StageOutcome run_stage(Stage s, bool force = false);
    std::vector<StageOutcome> run_all(bool force = false);

    /// True when the stage is done and its outputs, inputs and config
    /// fingerprint still match.
    bool is_current(Stage s) const;

    const RunManifest& manifest() const noexcept { return manifest_; }
    const PipelineConfig& config() const noexcept { return config_; }
    std::filesystem::path output(std::string_view file) const { return config_.out_dir / std::string(file); }

private:
    std::string fingerprint(Stage s) const;
    std::map<std::string, std::string> input_digests(Stage s) const;
    std::string execute(Stage s, bool force);

    std::string run_ingest();
    std::string run_fetch(bool force);
    std::string run_filter();
    std::string run_classify();
    std::string run_fuse();
    std::string run_eval();
    std::string run_map();

    PipelineConfig config_;
    PipelineHooks hooks_;
    int lock_fd_ = -1;
    RunManifest manifest_;
};

/// Builds the metrics document written by the eval stage.
nlohmann::json build_metrics(std::span<const BuildingRecord> buildings, std::span<const BuildingPrediction> predictions,
                             std::span<const UnclassifiedBuilding> unclassified, const PipelineConfig& config);

}  // namespace bic
