#pragma once

#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "bic/evaluation.hpp"
#include "bic/fusion.hpp"
#include "bic/imagery.hpp"
#include "bic/osm.hpp"

// JSON shapes of the newline-delimited files passed between stages.
namespace bic::records {

using nlohmann::json;

json to_json(const BuildingRecord& b);
BuildingRecord building_from_json(const json& j);

json to_json(const ParseReport& r);

json to_json(const ViewpointSpec& v);
ViewpointSpec viewpoint_from_json(const json& j);

json to_json(const ImageRecord& r);
ImageRecord image_from_json(const json& j);

json to_json(const ClassDistribution& d);
ClassDistribution distribution_from_json(const json& j, const LabelSet& labels);

json to_json(const SceneResult& s);
SceneResult scene_from_json(const json& j);

json to_json(const ImageClassification& c);
ImageClassification classification_from_json(const json& j, const LabelSet& labels);

json to_json(const BuildingPrediction& p);
BuildingPrediction prediction_from_json(const json& j);

json to_json(const UnclassifiedBuilding& u);
UnclassifiedBuilding unclassified_from_json(const json& j);

json to_json(const RunReport& r);
RunReport run_report_from_json(const json& j);

json to_json(const MetricRow& r);

/// Reads every non-blank line as a JSON value. Throws IoError on a missing
/// file or a malformed line.
std::vector<json> read_jsonl(const std::filesystem::path& path);

/// Replaces `path` with one compact JSON value per line.
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);

template <class T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& items)
{
    std::vector<json> rows;
    rows.reserve(items.size());
    for (const auto& item : items) rows.push_back(to_json(item));
    write_jsonl(path, rows);
}

/// Appends one line and flushes.
void append_jsonl(const std::filesystem::path& path, const json& row);

}  // namespace bic::records
