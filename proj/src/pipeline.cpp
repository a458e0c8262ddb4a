#include "bic/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>

#include "bic/error.hpp"
#include "bic/maps.hpp"
#include "bic/records.hpp"
#include "bic/util.hpp"

namespace bic {

using json = nlohmann::json;
namespace fs = std::filesystem;

// --- configuration ----------------------------------------------------------

void PipelineConfig::validate() const
{
    if (viewpoints < 1 || viewpoints > 36) throw InvalidArgument("viewpoints.k must lie in [1, 36]");
    if (!(offset_m > 0.0 && offset_m <= 500.0)) throw InvalidArgument("viewpoints.offset_m must lie in (0, 500]");
    camera.validate();
    if (transport != "live" && transport != "replay") throw InvalidArgument("acquisition.transport must be live or replay");
    if (transport == "replay" && replay_dir.empty()) throw InvalidArgument("replay transport needs acquisition.replay_dir");
    if (rate_limit < 1) throw InvalidArgument("acquisition.rate_limit must be at least 1");
    if (workers < 1 || workers > 64) throw InvalidArgument("acquisition.workers must lie in [1, 64]");
    if (retry.attempts < 1) throw InvalidArgument("acquisition.retry_attempts must be at least 1");
    if (retry.base_delay.count() < 0) throw InvalidArgument("acquisition.retry_base_ms must not be negative");
    if (http_timeout_s < 1 || classifier_timeout_s < 1) throw InvalidArgument("timeouts must be at least 1 s");
    if (scene_backend.empty() || building_backend.empty()) throw InvalidArgument("classifier endpoints must be set");
    if (fusion.whitelist_top_k < 1) throw InvalidArgument("fusion.whitelist_top_k must be at least 1");
    if (fusion.batch_size < 1) throw InvalidArgument("classifier.batch_size must be at least 1");
    if (!(fusion.link_radius_m > 0.0)) throw InvalidArgument("fusion.link_radius_m must be positive");
    if (class_from_name(fusion.rejection_label)) throw InvalidArgument("rejection label must not be a building class");
    if (!(opacity_floor >= 0.0 && opacity_floor <= 1.0)) throw InvalidArgument("map.opacity_floor must lie in [0, 1]");
    if (!(density_cell_deg > 0.0)) throw InvalidArgument("map.density_cell_deg must be positive");
}

json PipelineConfig::to_json() const
{
    return {
        {"osm", osm_path.string()},
        {"bbox", bbox ? json::array({bbox->south, bbox->west, bbox->north, bbox->east}) : json(nullptr)},
        {"out", out_dir.string()},
        {"cache_dir", cache_dir.string()},
        {"viewpoints",
         {{"k", viewpoints},
          {"offset_m", offset_m},
          {"pitch", camera.pitch},
          {"width", camera.width},
          {"height", camera.height},
          {"fov", camera.fov}}},
        {"acquisition",
         {{"transport", transport},
          {"replay_dir", replay_dir.string()},
          {"image_endpoint", image_endpoint},
          {"metadata_endpoint", metadata_endpoint},
          {"rate_limit", rate_limit},
          {"workers", workers},
          {"retry_attempts", retry.attempts},
          {"retry_base_ms", retry.base_delay.count()},
          {"timeout_s", http_timeout_s}}},
        {"classifier",
         {{"scene", scene_backend},
          {"building", building_backend},
          {"batch_size", fusion.batch_size},
          {"timeout_s", classifier_timeout_s}}},
        {"fusion",
         {{"whitelist_top_k", fusion.whitelist_top_k},
          {"link_radius_m", fusion.link_radius_m},
          {"rejection_label", fusion.rejection_label}}},
        {"eval",
         {{"sample_n", sample_n}, {"seed", seed}, {"averaging", averaging == Averaging::weighted ? "weighted" : "macro"}}},
        {"map", {{"opacity_floor", opacity_floor}, {"density_cell_deg", density_cell_deg}}},
    };
}

namespace {

void reject_unknown_keys(const json& given, const json& known, const std::string& prefix)
{
    for (const auto& [key, value] : given.items()) {
        if (!known.contains(key)) throw InvalidArgument("unknown config key '" + prefix + key + "'");
        if (value.is_object() && known[key].is_object()) reject_unknown_keys(value, known[key], prefix + key + ".");
    }
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& given)
{
    if (!given.is_object()) throw InvalidArgument("config must be a JSON object");
    json j = PipelineConfig{}.to_json();
    reject_unknown_keys(given, j, "");
    j.merge_patch(given);

    PipelineConfig c;
    try {
        c.osm_path = j["osm"].get<std::string>();
        if (j["bbox"].is_string())
            c.bbox = BBox::parse(j["bbox"].get<std::string>());
        else if (j["bbox"].is_array())
            c.bbox = BBox::parse(strprintf("%.17g,%.17g,%.17g,%.17g", j["bbox"][0].get<double>(),
                                           j["bbox"][1].get<double>(), j["bbox"][2].get<double>(),
                                           j["bbox"][3].get<double>()));
        c.out_dir = j["out"].get<std::string>();
        c.cache_dir = j["cache_dir"].get<std::string>();

        const auto& v = j["viewpoints"];
        c.viewpoints = v["k"].get<int>();
        c.offset_m = v["offset_m"].get<double>();
        c.camera = {v["pitch"].get<double>(), v["width"].get<int>(), v["height"].get<int>(), v["fov"].get<double>()};

        const auto& a = j["acquisition"];
        c.transport = a["transport"].get<std::string>();
        c.replay_dir = a["replay_dir"].get<std::string>();
        c.image_endpoint = a["image_endpoint"].get<std::string>();
        c.metadata_endpoint = a["metadata_endpoint"].get<std::string>();
        c.rate_limit = a["rate_limit"].get<std::size_t>();
        c.workers = a["workers"].get<std::size_t>();
        c.retry.attempts = a["retry_attempts"].get<int>();
        c.retry.base_delay = std::chrono::milliseconds(a["retry_base_ms"].get<long long>());
        c.http_timeout_s = a["timeout_s"].get<int>();

        const auto& k = j["classifier"];
        c.scene_backend = k["scene"].get<std::string>();
        c.building_backend = k["building"].get<std::string>();
        c.fusion.batch_size = k["batch_size"].get<std::size_t>();
        c.classifier_timeout_s = k["timeout_s"].get<int>();

        const auto& f = j["fusion"];
        c.fusion.whitelist_top_k = f["whitelist_top_k"].get<std::size_t>();
        c.fusion.link_radius_m = f["link_radius_m"].get<double>();
        c.fusion.rejection_label = f["rejection_label"].is_null() ? "" : f["rejection_label"].get<std::string>();

        const auto& e = j["eval"];
        c.sample_n = e["sample_n"].get<std::size_t>();
        c.seed = e["seed"].get<std::uint64_t>();
        const auto averaging = e["averaging"].get<std::string>();
        if (averaging != "weighted" && averaging != "macro")
            throw InvalidArgument("eval.averaging must be weighted or macro");
        c.averaging = averaging == "weighted" ? Averaging::weighted : Averaging::macro;

        const auto& m = j["map"];
        c.opacity_floor = m["opacity_floor"].get<double>();
        c.density_cell_deg = m["density_cell_deg"].get<double>();
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config value has the wrong type: ") + e.what());
    }
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path)
{
    const json doc = json::parse(read_file(path), nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded()) throw InvalidArgument("config " + path.string() + " is not valid JSON");
    return from_json(doc);
}

// --- stages -------------------------------------------------------------------

std::string_view to_string(Stage s) noexcept
{
    switch (s) {
    case Stage::ingest: return "ingest";
    case Stage::fetch: return "fetch";
    case Stage::filter: return "filter";
    case Stage::classify: return "classify";
    case Stage::fuse: return "fuse";
    case Stage::eval: return "eval";
    case Stage::map: return "map";
    }
    return "?";
}

std::optional<Stage> stage_from_string(std::string_view s) noexcept
{
    for (auto stage : kAllStages)
        if (to_string(stage) == s) return stage;
    return std::nullopt;
}

std::vector<Stage> upstream_of(Stage s)
{
    switch (s) {
    case Stage::ingest: return {};
    case Stage::fetch: return {Stage::ingest};
    case Stage::filter: return {Stage::fetch};
    case Stage::classify: return {Stage::filter};
    case Stage::fuse: return {Stage::ingest, Stage::fetch, Stage::filter, Stage::classify};
    case Stage::eval: return {Stage::ingest, Stage::fuse};
    case Stage::map: return {Stage::ingest, Stage::fuse};
    }
    return {};
}

std::vector<std::string> outputs_of(Stage s)
{
    switch (s) {
    case Stage::ingest: return {"buildings.jsonl", "ingest_report.json"};
    case Stage::fetch: return {"images.jsonl"};
    case Stage::filter: return {"scene.jsonl"};
    case Stage::classify: return {"building_dists.jsonl"};
    case Stage::fuse: return {"predictions.jsonl", "unclassified.jsonl", "run_report.json"};
    case Stage::eval: return {"metrics.json", "metrics.txt"};
    case Stage::map: return {"map_footprints.geojson", "map_points.geojson", "density.json"};
    }
    return {};
}

std::string_view to_string(StageState s) noexcept
{
    switch (s) {
    case StageState::pending: return "pending";
    case StageState::running: return "running";
    case StageState::done: return "done";
    case StageState::failed: return "failed";
    }
    return "pending";
}

// --- manifest -----------------------------------------------------------------

RunManifest::RunManifest(fs::path path) : path_(std::move(path))
{
    if (!fs::exists(path_)) return;
    for (const auto& event : records::read_jsonl(path_)) apply(event);
}

const StageRecord& RunManifest::stage(Stage s) const
{
    static const StageRecord kPending;
    auto it = stages_.find(s);
    return it == stages_.end() ? kPending : it->second;
}

void RunManifest::apply(const json& event)
{
    const auto kind = event.value("event", std::string{});
    if (kind == "config") {
        run_id_ = event.value("run_id", std::string{});
        config_ = event.value("config", json::object());
        return;
    }
    if (kind != "stage") return;
    const auto s = stage_from_string(event.value("stage", std::string{}));
    if (!s) return;
    StageRecord& rec = stages_[*s];
    const auto state = event.value("status", std::string{});
    if (state == "running") {
        rec = StageRecord{StageState::running, {}, {}, {}, {}};
    } else if (state == "done") {
        rec.state = StageState::done;
        rec.fingerprint = event.value("fingerprint", std::string{});
        rec.outputs = event.value("outputs", std::map<std::string, std::string>{});
        rec.inputs = event.value("inputs", std::map<std::string, std::string>{});
        rec.error.clear();
    } else if (state == "failed") {
        rec.state = StageState::failed;
        rec.error = event.value("error", std::string{});
    }
}

void RunManifest::append(const json& event)
{
    records::append_jsonl(path_, event);
    apply(event);
}

void RunManifest::record_config(const json& snapshot)
{
    if (!run_id_.empty() && config_ == snapshot) return;
    append({{"event", "config"}, {"run_id", sha256_hex(snapshot.dump()).substr(0, 16)}, {"config", snapshot}});
}

void RunManifest::record_running(Stage s) { append({{"event", "stage"}, {"stage", to_string(s)}, {"status", "running"}}); }

void RunManifest::record_done(Stage s, std::string fingerprint, std::map<std::string, std::string> outputs,
                              std::map<std::string, std::string> inputs)
{
    append({{"event", "stage"},
            {"stage", to_string(s)},
            {"status", "done"},
            {"fingerprint", std::move(fingerprint)},
            {"outputs", std::move(outputs)},
            {"inputs", std::move(inputs)}});
}

void RunManifest::record_failed(Stage s, const std::string& error)
{
    append({{"event", "stage"}, {"stage", to_string(s)}, {"status", "failed"}, {"error", error}});
}

// --- pipeline -----------------------------------------------------------------

namespace {

int acquire_lock(const fs::path& out_dir)
{
    fs::create_directories(out_dir);
    const auto lock_path = out_dir / ".bic.lock";
    const int fd = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd < 0) throw IoError("cannot open lock file " + lock_path.string());
    if (::flock(fd, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd);
        throw RunLocked("another run is active in " + out_dir.string());
    }
    return fd;
}

std::string digest_or_missing(const fs::path& path) { return fs::exists(path) ? file_digest(path) : "missing"; }

template <class T, class F>
std::vector<T> load_jsonl(const fs::path& path, F&& convert)
{
    std::vector<T> out;
    for (const auto& row : records::read_jsonl(path)) out.push_back(convert(row));
    return out;
}

std::vector<BuildingRecord> load_buildings(const fs::path& path)
{
    return load_jsonl<BuildingRecord>(path, records::building_from_json);
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config, PipelineHooks hooks)
    : config_((config.validate(), std::move(config))),
      hooks_(hooks),
      lock_fd_(acquire_lock(config_.out_dir)),
      manifest_(config_.out_dir / "manifest.jsonl")
{
    manifest_.record_config(config_.to_json());
}

Pipeline::~Pipeline()
{
    if (lock_fd_ >= 0) ::close(lock_fd_);
}

std::string Pipeline::fingerprint(Stage s) const
{
    const json c = config_.to_json();
    json basis;
    switch (s) {
    case Stage::ingest:
        basis = {{"osm", c["osm"]}, {"osm_digest", digest_or_missing(config_.osm_path)}, {"bbox", c["bbox"]}};
        break;
    case Stage::fetch: {
        json acq = c["acquisition"];
        acq.erase("workers");
        acq.erase("rate_limit");
        basis = {{"viewpoints", c["viewpoints"]}, {"acquisition", acq}, {"cache", config_.cache_base().string()}};
        break;
    }
    case Stage::filter:
        basis = {{"scene", c["classifier"]["scene"]}, {"top_k", c["fusion"]["whitelist_top_k"]}};
        break;
    case Stage::classify:
        basis = {{"building", c["classifier"]["building"]}, {"rejection", c["fusion"]["rejection_label"]}};
        break;
    case Stage::fuse: basis = {{"rejection", c["fusion"]["rejection_label"]}}; break;
    case Stage::eval: basis = {{"eval", c["eval"]}, {"radius", c["fusion"]["link_radius_m"]}}; break;
    case Stage::map: basis = {{"map", c["map"]}, {"bbox", c["bbox"]}}; break;
    }
    return sha256_hex(basis.dump());
}

std::map<std::string, std::string> Pipeline::input_digests(Stage s) const
{
    std::map<std::string, std::string> out;
    for (auto up : upstream_of(s))
        for (const auto& file : outputs_of(up)) out[file] = digest_or_missing(output(file));
    return out;
}

bool Pipeline::is_current(Stage s) const
{
    const StageRecord& rec = manifest_.stage(s);
    if (rec.state != StageState::done || rec.fingerprint != fingerprint(s)) return false;
    for (const auto& file : outputs_of(s)) {
        auto it = rec.outputs.find(file);
        if (it == rec.outputs.end() || it->second != digest_or_missing(output(file))) return false;
    }
    return rec.inputs == input_digests(s);
}

StageOutcome Pipeline::run_stage(Stage s, bool force)
{
    for (auto up : upstream_of(s))
        if (!is_current(up))
            throw UpstreamIncomplete(std::string(to_string(s)) + " needs '" + std::string(to_string(up)) +
                                     "' to be done first");
    if (!force && is_current(s)) return {s, false, "up to date"};

    manifest_.record_running(s);
    std::string summary;
    try {
        summary = execute(s, force);
    } catch (const std::exception& e) {
        manifest_.record_failed(s, e.what());
        throw StageFailed(std::string(to_string(s)) + ": " + e.what());
    }
    std::map<std::string, std::string> outputs;
    for (const auto& file : outputs_of(s)) outputs[file] = digest_or_missing(output(file));
    manifest_.record_done(s, fingerprint(s), std::move(outputs), input_digests(s));
    return {s, true, summary};
}

std::vector<StageOutcome> Pipeline::run_all(bool force)
{
    std::vector<StageOutcome> out;
    for (auto s : kAllStages) out.push_back(run_stage(s, force));
    return out;
}

std::string Pipeline::execute(Stage s, bool force)
{
    switch (s) {
    case Stage::ingest: return run_ingest();
    case Stage::fetch: return run_fetch(force);
    case Stage::filter: return run_filter();
    case Stage::classify: return run_classify();
    case Stage::fuse: return run_fuse();
    case Stage::eval: return run_eval();
    case Stage::map: return run_map();
    }
    return {};
}

std::string Pipeline::run_ingest()
{
    std::ifstream in(config_.osm_path, std::ios::binary);
    if (!in) throw IoError("cannot open OSM file '" + config_.osm_path.string() + "'");
    const ParseResult parsed = parse_osm(in, config_.bbox);
    records::write_jsonl(output("buildings.jsonl"), parsed.records);
    write_json(output("ingest_report.json"), records::to_json(parsed.report), 2);
    return strprintf("%zu buildings (%zu without a mapped class); skipped %zu unclosed, %zu unresolved, %zu relations",
                     parsed.report.parsed, parsed.report.unmapped, parsed.report.skipped_unclosed,
                     parsed.report.skipped_unresolved, parsed.report.skipped_relations);
}

std::string Pipeline::run_fetch(bool force)
{
    const auto buildings = load_buildings(output("buildings.jsonl"));

    std::unique_ptr<Transport> owned;
    Transport* base = hooks_.transport;
    std::string api_key;
    if (const char* env = std::getenv("SV_API_KEY")) api_key = env;
    if (!base) {
        if (config_.transport == "live") {
            if (api_key.empty()) throw InvalidArgument("SV_API_KEY is not set");
            owned = std::make_unique<HttpTransport>(std::chrono::seconds(config_.http_timeout_s));
        } else {
            owned = std::make_unique<ReplayTransport>(config_.replay_dir);
        }
        base = owned.get();
    }
    if (api_key.empty()) api_key = "replay";

    Clock& clock = hooks_.clock ? *hooks_.clock : Clock::system();
    RateLimiter limiter(config_.rate_limit, clock);
    RateLimitedTransport transport(*base, limiter);
    const ImageCache cache(config_.cache_base());
    const FetchContext ctx{transport,          cache,
                           api_key,            config_.retry,
                           &clock,             config_.image_endpoint,
                           config_.metadata_endpoint};

    // Completed buildings are appended here so an interrupted fetch resumes.
    const fs::path partial = output("images.partial.jsonl");
    if (force) fs::remove(partial);
    std::vector<ImageRecord> previous;
    std::set<std::int64_t> done;
    if (fs::exists(partial)) {
        for (const auto& row : records::read_jsonl(partial)) {
            done.insert(row.at("building_id").get<std::int64_t>());
            for (const auto& r : row.at("records")) previous.push_back(records::image_from_json(r));
        }
    }

    std::mutex append_mutex;
    auto on_done = [&](std::int64_t id, const std::vector<ImageRecord>& recs) {
        json row = {{"building_id", id}, {"records", json::array()}};
        for (const auto& r : recs) row["records"].push_back(records::to_json(r));
        std::lock_guard lock(append_mutex);
        records::append_jsonl(partial, row);
    };
    auto fresh = acquire_imagery(buildings, config_.viewpoints, config_.offset_m, config_.camera, ctx,
                                 config_.workers, done, on_done);

    // Records for buildings no longer in the ingest output are dropped.
    std::set<std::int64_t> known;
    for (const auto& b : buildings) known.insert(b.id);
    std::vector<ImageRecord> all;
    for (auto& r : previous)
        if (known.contains(r.building_id)) all.push_back(std::move(r));
    for (auto& r : fresh) all.push_back(std::move(r));
    std::sort(all.begin(), all.end(), [](const ImageRecord& a, const ImageRecord& b) {
        return std::tie(a.building_id, a.viewpoint_index) < std::tie(b.building_id, b.viewpoint_index);
    });
    records::write_jsonl(output("images.jsonl"), all);
    fs::remove(partial);

    std::size_t fetched = 0, no_pano = 0, failed = 0;
    for (const auto& r : all) {
        if (r.fetch_status == FetchStatus::fetched) ++fetched;
        else if (r.fetch_status == FetchStatus::no_pano) ++no_pano;
        else ++failed;
    }
    return strprintf("%zu images fetched, %zu viewpoints without panorama, %zu failed (%zu buildings resumed)", fetched,
                     no_pano, failed, done.size());
}

namespace {

std::unique_ptr<ClassifierBackend> backend_for(ClassifierBackend* hook, const std::string& endpoint,
                                               const PipelineConfig& config, ClassifierBackend*& out)
{
    if (hook) {
        out = hook;
        return nullptr;
    }
    auto owned = make_backend(endpoint, std::chrono::seconds(config.classifier_timeout_s),
                              config.fusion.building_labels());
    out = owned.get();
    return owned;
}

}  // namespace

std::string Pipeline::run_filter()
{
    const auto images = load_jsonl<ImageRecord>(output("images.jsonl"), records::image_from_json);
    ClassifierBackend* backend = nullptr;
    auto owned = backend_for(hooks_.scene_backend, config_.scene_backend, config_, backend);
    const auto results = run_scene_filter(images, ImageCache(config_.cache_base()), *backend, config_.fusion);
    records::write_jsonl(output("scene.jsonl"), results);

    std::size_t kept = 0;
    for (const auto& r : results) kept += r.record.stage_status == StageStatus::kept;
    return strprintf("%zu of %zu images kept", kept, results.size());
}

std::string Pipeline::run_classify()
{
    const auto filtered = load_jsonl<SceneResult>(output("scene.jsonl"), records::scene_from_json);
    ClassifierBackend* backend = nullptr;
    auto owned = backend_for(hooks_.building_backend, config_.building_backend, config_, backend);
    const auto results = run_building_classifier(filtered, ImageCache(config_.cache_base()), *backend, config_.fusion);
    records::write_jsonl(output("building_dists.jsonl"), results);

    std::size_t ok = 0;
    for (const auto& r : results) ok += r.distribution.has_value();
    return strprintf("%zu of %zu images classified", ok, results.size());
}

std::string Pipeline::run_fuse()
{
    const auto buildings = load_buildings(output("buildings.jsonl"));
    const auto images = load_jsonl<ImageRecord>(output("images.jsonl"), records::image_from_json);
    const auto filtered = load_jsonl<SceneResult>(output("scene.jsonl"), records::scene_from_json);
    const LabelSet labels = config_.fusion.building_labels();
    const auto classified = load_jsonl<ImageClassification>(
        output("building_dists.jsonl"), [&](const json& j) { return records::classification_from_json(j, labels); });

    const auto city = fuse_buildings(buildings, images, filtered, classified, config_.fusion);
    records::write_jsonl(output("predictions.jsonl"), city.predictions);
    records::write_jsonl(output("unclassified.jsonl"), city.unclassified);
    write_json(output("run_report.json"), records::to_json(city.report), 2);
    return strprintf("%zu buildings classified, %zu without imagery, %zu with every image filtered",
                     city.report.predicted, city.report.unclassified_no_imagery,
                     city.report.unclassified_all_filtered);
}

json build_metrics(std::span<const BuildingRecord> buildings, std::span<const BuildingPrediction> predictions,
                   std::span<const UnclassifiedBuilding> unclassified, const PipelineConfig& config)
{
    std::map<std::int64_t, const BuildingRecord*> by_id;
    for (const auto& b : buildings) by_id.emplace(b.id, &b);

    // Ground truth is looked up by location: each prediction's point is
    // linked to the nearest footprint centroid within the link radius.
    std::vector<GeoTagged> points;
    std::vector<const BuildingPrediction*> located;
    for (const auto& p : predictions) {
        auto it = by_id.find(p.building_id);
        if (it == by_id.end()) continue;
        points.push_back({it->second->footprint.centroid(), std::to_string(p.building_id)});
        located.push_back(&p);
    }
    const auto links = link_predictions(points, centroid_index(buildings), config.fusion.link_radius_m);

    std::map<std::int64_t, LabelPair> population;
    std::size_t unlabeled = 0;
    for (const auto& a : links.assigned) {
        const auto* truth = by_id.at(a.building_id);
        if (!truth->truth_label) {
            ++unlabeled;
            continue;
        }
        population.emplace(located[a.item]->building_id, LabelPair{*truth->truth_label, located[a.item]->label});
    }

    std::vector<LabelPair> pairs;
    json sample = nullptr;
    if (config.sample_n > 0) {
        std::vector<std::int64_t> ids;
        for (const auto& [id, pair] : population) ids.push_back(id);
        for (auto id : sample_for_audit(ids, config.sample_n, config.seed)) pairs.push_back(population.at(id));
        sample = {{"n", config.sample_n}, {"seed", config.seed}};
    } else {
        for (const auto& [id, pair] : population) pairs.push_back(pair);
    }

    const ConfusionMatrix cm = confusion(pairs);
    const ClassMetrics metrics = class_metrics(cm);
    const RealGrid normalized = normalize_rows(cm);

    std::vector<BuildingClass> predicted_labels;
    for (const auto& p : predictions) predicted_labels.push_back(p.label);
    const ClassProportions props = class_proportions(predicted_labels);

    std::size_t no_imagery = 0, all_filtered = 0;
    for (const auto& u : unclassified) (u.reason == UnclassifiedReason::no_imagery ? no_imagery : all_filtered)++;

    json per_class = json::array();
    json fractions = json::object();
    json counts = json::object();
    for (std::size_t c = 0; c < kNumBuildingClasses; ++c) {
        json row = records::to_json(metrics.per_class[c]);
        row["class"] = kBuildingClassNames[c];
        per_class.push_back(std::move(row));
        fractions[std::string(kBuildingClassNames[c])] = props.fraction[c];
        counts[std::string(kBuildingClassNames[c])] = props.count[c];
    }

    return {
        {"labels", building_label_set()},
        {"evaluated", cm.total()},
        {"population", population.size()},
        {"sample", sample},
        {"excluded", {{"unlabeled", unlabeled}, {"unlinked", links.unassigned.size()}}},
        {"unclassified", {{"no_imagery", no_imagery}, {"all_filtered", all_filtered}, {"total", unclassified.size()}}},
        {"accuracy", metrics.accuracy},
        {"averaging", config.averaging == Averaging::weighted ? "weighted" : "macro"},
        {"overall", records::to_json(metrics.overall(config.averaging))},
        {"weighted", records::to_json(metrics.weighted)},
        {"macro", records::to_json(metrics.macro)},
        {"per_class", std::move(per_class)},
        {"confusion", cm.counts},
        {"normalized", normalized},
        {"proportions", {{"total", props.total}, {"empty", props.empty}, {"fractions", fractions}, {"counts", counts}}},
    };
}

std::string Pipeline::run_eval()
{
    const auto buildings = load_buildings(output("buildings.jsonl"));
    const auto predictions = load_jsonl<BuildingPrediction>(output("predictions.jsonl"), records::prediction_from_json);
    const auto unclassified =
        load_jsonl<UnclassifiedBuilding>(output("unclassified.jsonl"), records::unclassified_from_json);

    const json metrics = build_metrics(buildings, predictions, unclassified, config_);
    write_json(output("metrics.json"), metrics, 2);

    // Re-derive the table from the confusion matrix so the text and JSON agree.
    ConfusionMatrix cm;
    cm.counts = metrics["confusion"].get<decltype(cm.counts)>();
    std::string text = render_metrics_table(class_metrics(cm), config_.averaging);
    text += strprintf("\nevaluated %llu buildings; unclassified: %llu without imagery, %llu with every image filtered\n",
                      metrics["evaluated"].get<unsigned long long>(),
                      metrics["unclassified"]["no_imagery"].get<unsigned long long>(),
                      metrics["unclassified"]["all_filtered"].get<unsigned long long>());
    write_file_atomic(output("metrics.txt"), text);
    return strprintf("accuracy %.4f over %llu buildings", metrics["accuracy"].get<double>(),
                     metrics["evaluated"].get<unsigned long long>());
}

std::string Pipeline::run_map()
{
    const auto buildings = load_buildings(output("buildings.jsonl"));
    const auto predictions = load_jsonl<BuildingPrediction>(output("predictions.jsonl"), records::prediction_from_json);
    const auto unclassified =
        load_jsonl<UnclassifiedBuilding>(output("unclassified.jsonl"), records::unclassified_from_json);

    write_json(output("map_footprints.geojson"), footprint_map(buildings, predictions, unclassified, config_.opacity_floor));
    write_json(output("map_points.geojson"), point_map(buildings, predictions));

    json grids = json::array();
    const BBox bbox = config_.bbox ? *config_.bbox : buildings_bbox(buildings);
    if (bbox.north > bbox.south && bbox.east > bbox.west) {
        for (auto cls : kAllBuildingClasses)
            grids.push_back(density_grid_json(
                density_grid(class_points(buildings, predictions, cls), bbox, config_.density_cell_deg), cls));
    }
    write_json(output("density.json"), {{"grids", std::move(grids)}});
    return strprintf("%zu footprints, %zu points", buildings.size(), predictions.size());
}

}  // namespace bic
