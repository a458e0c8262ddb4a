#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bic/building_class.hpp"
#include "bic/classifier.hpp"
#include "bic/geo.hpp"
#include "bic/imagery.hpp"
#include "bic/osm.hpp"

namespace bic {

/// Result of averaging the per-image distributions of one building.
struct FusedDecision {
    std::size_t label_index = 0;
    double confidence = 0.0;
    ClassDistribution averaged;
    std::size_t images_used = 0;
};

/// Decision-level fusion: the element-wise arithmetic mean of M
/// distributions over the same label set, then its argmax (first label
/// wins ties). Each mean is the correctly rounded value of the exact sum
/// divided by M, so the result does not depend on input order and M copies
/// of one distribution average back to it exactly.
/// Throws EmptyEvidence for M == 0 and InvalidDistribution for mismatched
/// label sets.
FusedDecision fuse(std::span<const ClassDistribution> distributions);

struct BuildingPrediction {
    std::int64_t building_id = 0;
    BuildingClass label = BuildingClass::apartment;
    double confidence = 0.0;
    std::size_t images_used = 0;
    ClassDistribution averaged;
};

enum class UnclassifiedReason { no_imagery, all_filtered };
std::string_view to_string(UnclassifiedReason r) noexcept;
std::optional<UnclassifiedReason> unclassified_reason_from_string(std::string_view s) noexcept;

struct UnclassifiedBuilding {
    std::int64_t building_id = 0;
    UnclassifiedReason reason = UnclassifiedReason::no_imagery;
};

struct FilterPartition {
    std::vector<ImageRecord> kept;
    std::vector<ImageRecord> rejected;
};

/// Keeps an image when one of its top `top_k` scene labels is in the
/// whitelist (top-1 by default); sets stage_status accordingly.
/// Throws AlignmentError when the two lists differ in length.
FilterPartition filter_outliers(std::span<const ImageRecord> records, std::span<const ClassDistribution> scene_dists,
                                const LabelSet& whitelist = scene_whitelist(), std::size_t top_k = 1);

struct GeoTagged {
    GeoPoint point;
    std::string payload_id;
};

struct LinkAssignment {
    std::size_t item = 0;  // index into the input points
    std::int64_t building_id = 0;
    double distance_m = 0.0;
};

struct LinkResult {
    std::vector<LinkAssignment> assigned;
    std::vector<std::size_t> unassigned;
};

/// Assigns each geo-tagged item to the nearest building centroid within
/// `radius_m`. Items with no building in range are reported as unassigned.
LinkResult link_predictions(std::span<const GeoTagged> points, const SpatialIndex& building_centroids,
                            double radius_m);

SpatialIndex centroid_index(std::span<const BuildingRecord> buildings);

struct FusionConfig {
    std::size_t whitelist_top_k = 1;
    double link_radius_m = 50.0;
    /// Extra building-model label that, when it wins the fusion, leaves the
    /// building unclassified. Disabled when empty.
    std::string rejection_label;
    std::size_t batch_size = 32;

    /// The label set the building model is expected to answer with.
    LabelSet building_labels() const;
};

/// Per-stage tallies of a classification run.
struct RunReport {
    std::size_t buildings = 0;
    std::size_t images_total = 0;
    std::size_t images_fetched = 0;
    std::size_t images_no_pano = 0;
    std::size_t images_failed = 0;
    std::size_t images_kept = 0;
    std::size_t images_rejected = 0;
    std::size_t scene_invalid = 0;
    std::size_t images_classified = 0;
    std::size_t building_invalid = 0;
    std::size_t predicted = 0;
    std::size_t unclassified_no_imagery = 0;
    std::size_t unclassified_all_filtered = 0;

    friend bool operator==(const RunReport&, const RunReport&) = default;
};

/// Scene verdict for one fetched image.
struct SceneResult {
    ImageRecord record;  // stage_status is kept or rejected_outlier
    std::optional<ClassDistribution> scene;
    std::string error;
};

/// Building-model output for one kept image.
struct ImageClassification {
    std::int64_t building_id = 0;
    std::string image_key;
    std::optional<ClassDistribution> distribution;
    std::string error;
};

/// Runs the scene model over every fetched image and applies the whitelist.
/// Images whose scene answer fails validation are rejected.
std::vector<SceneResult> run_scene_filter(std::span<const ImageRecord> images, const ImageCache& cache,
                                          ClassifierBackend& backend, const FusionConfig& config);

/// Runs the building model over the kept images.
std::vector<ImageClassification> run_building_classifier(std::span<const SceneResult> filtered,
                                                         const ImageCache& cache, ClassifierBackend& backend,
                                                         const FusionConfig& config);

struct CityClassification {
    std::vector<BuildingPrediction> predictions;      // sorted by building id
    std::vector<UnclassifiedBuilding> unclassified;  // sorted by building id
    RunReport report;
};

/// Fuses the per-image results into exactly one prediction or unclassified
/// entry per building.
CityClassification fuse_buildings(std::span<const BuildingRecord> buildings, std::span<const ImageRecord> images,
                                  std::span<const SceneResult> filtered,
                                  std::span<const ImageClassification> classifications, const FusionConfig& config);

/// Filter, classify and fuse in one call.
CityClassification classify_city(std::span<const BuildingRecord> buildings, std::span<const ImageRecord> images,
                                 const ImageCache& cache, ClassifierBackend& scene_backend,
                                 ClassifierBackend& building_backend, const FusionConfig& config);

}  // namespace bic
