#include "bic/records.hpp"

#include <algorithm>
#include <fstream>

#include "bic/error.hpp"
#include "bic/util.hpp"

namespace bic::records {

namespace {

template <class T>
T require(const json& j, const char* key)
{
    if (!j.contains(key)) throw IoError(std::string("record lacks field '") + key + "'");
    return j.at(key).get<T>();
}

std::string optional_string(const json& j, const char* key)
{
    return j.contains(key) && j.at(key).is_string() ? j.at(key).get<std::string>() : std::string{};
}

}  // namespace

json to_json(const BuildingRecord& b)
{
    json ring = json::array();
    for (const auto& p : b.footprint.ring()) ring.push_back({p.lon, p.lat});
    return {{"id", b.id},
            {"ring", std::move(ring)},
            {"raw_tag", b.raw_tag},
            {"label", b.truth_label ? json(to_string(*b.truth_label)) : json(nullptr)}};
}

BuildingRecord building_from_json(const json& j)
{
    std::vector<GeoPoint> ring;
    for (const auto& c : j.at("ring")) ring.push_back({c.at(1).get<double>(), c.at(0).get<double>()});
    std::optional<BuildingClass> label;
    if (j.contains("label") && j["label"].is_string()) label = class_from_name(j["label"].get<std::string>());
    return {require<std::int64_t>(j, "id"), FootprintPolygon::from_ring(std::move(ring)), label,
            require<std::string>(j, "raw_tag")};
}

json to_json(const ParseReport& r)
{
    return {{"nodes", r.nodes},
            {"building_ways", r.building_ways},
            {"parsed", r.parsed},
            {"skipped_unclosed", r.skipped_unclosed},
            {"skipped_unresolved", r.skipped_unresolved},
            {"skipped_invalid_geometry", r.skipped_invalid_geometry},
            {"skipped_outside_bbox", r.skipped_outside_bbox},
            {"skipped_relations", r.skipped_relations},
            {"unmapped", r.unmapped},
            {"unmapped_tags", r.unmapped_tags}};
}

json to_json(const ViewpointSpec& v)
{
    return {{"lat", v.query_location.lat}, {"lon", v.query_location.lon}, {"heading", v.heading},
            {"pitch", v.pitch},            {"width", v.width},            {"height", v.height},
            {"fov", v.fov}};
}

ViewpointSpec viewpoint_from_json(const json& j)
{
    return {{j.at("lat").get<double>(), j.at("lon").get<double>()},
            j.at("heading").get<double>(),
            j.at("pitch").get<double>(),
            j.at("width").get<int>(),
            j.at("height").get<int>(),
            j.at("fov").get<double>()};
}

json to_json(const ImageRecord& r)
{
    json j = {{"building_id", r.building_id},
              {"viewpoint_index", r.viewpoint_index},
              {"pano_id", r.pano_id.empty() ? json(nullptr) : json(r.pano_id)},
              {"viewpoint", to_json(r.viewpoint)},
              {"cache_path", r.cache_path.empty() ? json(nullptr) : json(r.cache_path)},
              {"fetch_status", to_string(r.fetch_status)},
              {"stage_status", to_string(r.stage_status)}};
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

ImageRecord image_from_json(const json& j)
{
    ImageRecord r;
    r.building_id = require<std::int64_t>(j, "building_id");
    r.viewpoint_index = require<int>(j, "viewpoint_index");
    r.pano_id = optional_string(j, "pano_id");
    r.viewpoint = viewpoint_from_json(j.at("viewpoint"));
    r.cache_path = optional_string(j, "cache_path");
    const auto fetch = fetch_status_from_string(require<std::string>(j, "fetch_status"));
    const auto stage = stage_status_from_string(require<std::string>(j, "stage_status"));
    if (!fetch || !stage) throw IoError("image record has an unknown status");
    r.fetch_status = *fetch;
    r.stage_status = *stage;
    r.error = optional_string(j, "error");
    return r;
}

json to_json(const ClassDistribution& d)
{
    json probs = json::object();
    for (std::size_t i = 0; i < d.labels.size(); ++i) probs[d.labels[i]] = d.probs[i];
    return probs;
}

ClassDistribution distribution_from_json(const json& j, const LabelSet& labels)
{
    return ClassDistribution::from_sparse(labels, j.get<std::map<std::string, double>>());
}

json to_json(const SceneResult& s)
{
    json j = to_json(s.record);
    if (s.scene) {
        const TopLabel top = top1(*s.scene);
        j["scene_top1"] = top.label;
        j["scene_probs"] = to_json(*s.scene);
    } else {
        j["scene_top1"] = nullptr;
        j["scene_error"] = s.error;
    }
    return j;
}

SceneResult scene_from_json(const json& j)
{
    SceneResult s{image_from_json(j), std::nullopt, optional_string(j, "scene_error")};
    if (j.contains("scene_probs")) s.scene = distribution_from_json(j["scene_probs"], scene_label_set());
    return s;
}

json to_json(const ImageClassification& c)
{
    json j = {{"building_id", c.building_id}, {"image", c.image_key}};
    if (c.distribution)
        j["probs"] = to_json(*c.distribution);
    else
        j["error"] = c.error;
    return j;
}

ImageClassification classification_from_json(const json& j, const LabelSet& labels)
{
    ImageClassification c{require<std::int64_t>(j, "building_id"), require<std::string>(j, "image"), std::nullopt,
                          optional_string(j, "error")};
    if (j.contains("probs")) c.distribution = distribution_from_json(j["probs"], labels);
    return c;
}

json to_json(const BuildingPrediction& p)
{
    return {{"building_id", p.building_id},
            {"label", to_string(p.label)},
            {"confidence", p.confidence},
            {"images_used", p.images_used},
            {"averaged", to_json(p.averaged)}};
}

BuildingPrediction prediction_from_json(const json& j)
{
    const auto label = class_from_name(require<std::string>(j, "label"));
    if (!label) throw IoError("prediction has an unknown label");
    // Canonical classes first, then any extra label (the rejection class).
    LabelSet labels = building_label_set();
    for (const auto& [key, value] : j.at("averaged").items())
        if (std::find(labels.begin(), labels.end(), key) == labels.end()) labels.push_back(key);
    return {require<std::int64_t>(j, "building_id"), *label, require<double>(j, "confidence"),
            require<std::size_t>(j, "images_used"), distribution_from_json(j.at("averaged"), labels)};
}

json to_json(const UnclassifiedBuilding& u) { return {{"building_id", u.building_id}, {"reason", to_string(u.reason)}}; }

UnclassifiedBuilding unclassified_from_json(const json& j)
{
    const auto reason = unclassified_reason_from_string(require<std::string>(j, "reason"));
    if (!reason) throw IoError("unclassified record has an unknown reason");
    return {require<std::int64_t>(j, "building_id"), *reason};
}

json to_json(const RunReport& r)
{
    return {{"buildings", r.buildings},
            {"images_total", r.images_total},
            {"images_fetched", r.images_fetched},
            {"images_no_pano", r.images_no_pano},
            {"images_failed", r.images_failed},
            {"images_kept", r.images_kept},
            {"images_rejected", r.images_rejected},
            {"scene_invalid", r.scene_invalid},
            {"images_classified", r.images_classified},
            {"building_invalid", r.building_invalid},
            {"predicted", r.predicted},
            {"unclassified_no_imagery", r.unclassified_no_imagery},
            {"unclassified_all_filtered", r.unclassified_all_filtered}};
}

RunReport run_report_from_json(const json& j)
{
    RunReport r;
    r.buildings = j.value("buildings", std::size_t{0});
    r.images_total = j.value("images_total", std::size_t{0});
    r.images_fetched = j.value("images_fetched", std::size_t{0});
    r.images_no_pano = j.value("images_no_pano", std::size_t{0});
    r.images_failed = j.value("images_failed", std::size_t{0});
    r.images_kept = j.value("images_kept", std::size_t{0});
    r.images_rejected = j.value("images_rejected", std::size_t{0});
    r.scene_invalid = j.value("scene_invalid", std::size_t{0});
    r.images_classified = j.value("images_classified", std::size_t{0});
    r.building_invalid = j.value("building_invalid", std::size_t{0});
    r.predicted = j.value("predicted", std::size_t{0});
    r.unclassified_no_imagery = j.value("unclassified_no_imagery", std::size_t{0});
    r.unclassified_all_filtered = j.value("unclassified_all_filtered", std::size_t{0});
    return r;
}

json to_json(const MetricRow& r)
{
    return {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}, {"support", r.support}};
}

std::vector<json> read_jsonl(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<json> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json row = json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (row.is_discarded()) throw IoError(path.string() + ":" + std::to_string(lineno) + ": malformed JSON");
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows)
{
    std::string out;
    for (const auto& row : rows) {
        out += row.dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

void append_jsonl(const std::filesystem::path& path, const json& row)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("cannot append to " + path.string());
    out << row.dump() << '\n';
    out.flush();
    if (!out) throw IoError("append failed: " + path.string());
}

}  // namespace bic::records
