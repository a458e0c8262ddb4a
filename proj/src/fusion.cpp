#include "bic/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "bic/error.hpp"

namespace bic {

namespace {

// Running sum kept exactly as a list of non-overlapping partials
// (Shewchuk's algorithm). Inputs are finite.
class ExactSum {
public:
    void add(double x)
    {
        std::size_t i = 0;
        for (double y : partials_) {
            if (std::abs(x) < std::abs(y)) std::swap(x, y);
            const double hi = x + y;
            const double lo = y - (hi - x);
            if (lo != 0.0) partials_[i++] = lo;
            x = hi;
        }
        partials_.resize(i);
        partials_.push_back(x);
    }

    // Correctly rounded value of the exact sum.
    double value() const
    {
        std::size_t n = partials_.size();
        if (n == 0) return 0.0;
        double hi = partials_[--n];
        double lo = 0.0;
        while (n > 0) {
            const double x = hi;
            const double y = partials_[--n];
            hi = x + y;
            lo = y - (hi - x);
            if (lo != 0.0) break;
        }
        // Half-way case: round to even needs a look at the next partial.
        if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
            const double y = lo * 2.0;
            const double x = hi + y;
            if (y == x - hi) hi = x;
        }
        return hi;
    }

private:
    std::vector<double> partials_;
};

// sum / m with a single correction step against the exact residual.
double exact_mean(ExactSum sum, double m)
{
    const double q = sum.value() / m;
    const double p = q * m;
    const double e = std::fma(q, m, -p);  // q*m == p + e exactly
    sum.add(-p);
    sum.add(-e);
    return q + sum.value() / m;
}

bool in_whitelist(const ClassDistribution& d, const LabelSet& whitelist, std::size_t top_k)
{
    for (const auto& t : top_k_labels(d, top_k))
        if (std::find(whitelist.begin(), whitelist.end(), t.label) != whitelist.end()) return true;
    return false;
}

}  // namespace

FusedDecision fuse(std::span<const ClassDistribution> distributions)
{
    if (distributions.empty()) throw EmptyEvidence("no image distributions to fuse");
    const LabelSet& labels = distributions.front().labels;
    for (const auto& d : distributions) {
        if (d.labels != labels) throw InvalidDistribution("cannot fuse distributions over different label sets");
        d.validate();
    }

    const double m = static_cast<double>(distributions.size());
    FusedDecision out;
    out.images_used = distributions.size();
    out.averaged.labels = labels;
    out.averaged.probs.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        ExactSum sum;
        for (const auto& d : distributions) sum.add(d.probs[i]);
        out.averaged.probs[i] = exact_mean(sum, m);
    }
    const TopLabel top = top1(out.averaged);
    out.label_index = top.index;
    out.confidence = top.probability;
    return out;
}

std::string_view to_string(UnclassifiedReason r) noexcept
{
    return r == UnclassifiedReason::no_imagery ? "no_imagery" : "all_filtered";
}

std::optional<UnclassifiedReason> unclassified_reason_from_string(std::string_view s) noexcept
{
    if (s == "no_imagery") return UnclassifiedReason::no_imagery;
    if (s == "all_filtered") return UnclassifiedReason::all_filtered;
    return std::nullopt;
}

FilterPartition filter_outliers(std::span<const ImageRecord> records, std::span<const ClassDistribution> scene_dists,
                                const LabelSet& whitelist, std::size_t top_k)
{
    if (records.size() != scene_dists.size())
        throw AlignmentError(std::to_string(records.size()) + " records but " + std::to_string(scene_dists.size()) +
                             " scene distributions");
    FilterPartition out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        ImageRecord rec = records[i];
        if (in_whitelist(scene_dists[i], whitelist, top_k)) {
            rec.stage_status = StageStatus::kept;
            out.kept.push_back(std::move(rec));
        } else {
            rec.stage_status = StageStatus::rejected_outlier;
            out.rejected.push_back(std::move(rec));
        }
    }
    return out;
}

SpatialIndex centroid_index(std::span<const BuildingRecord> buildings)
{
    std::vector<SpatialIndex::Entry> entries;
    entries.reserve(buildings.size());
    for (const auto& b : buildings) entries.push_back({b.id, b.footprint.centroid()});
    return SpatialIndex(std::move(entries));
}

LinkResult link_predictions(std::span<const GeoTagged> points, const SpatialIndex& building_centroids,
                            double radius_m)
{
    LinkResult out;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (auto hit = building_centroids.nearest(points[i].point, radius_m))
            out.assigned.push_back({i, hit->id, hit->distance_m});
        else
            out.unassigned.push_back(i);
    }
    return out;
}

LabelSet FusionConfig::building_labels() const
{
    LabelSet labels = building_label_set();
    if (!rejection_label.empty()) labels.push_back(rejection_label);
    return labels;
}

std::vector<SceneResult> run_scene_filter(std::span<const ImageRecord> images, const ImageCache& cache,
                                          ClassifierBackend& backend, const FusionConfig& config)
{
    std::vector<ImageRef> refs;
    std::vector<const ImageRecord*> fetched;
    for (const auto& img : images) {
        if (img.fetch_status != FetchStatus::fetched) continue;
        refs.push_back({img.key(), cache.resolve(img.cache_path)});
        fetched.push_back(&img);
    }
    const auto results = classify_batch(refs, ModelRole::scene, backend, scene_label_set(), config.batch_size);

    std::vector<SceneResult> out;
    out.reserve(fetched.size());
    for (std::size_t i = 0; i < fetched.size(); ++i) {
        SceneResult r{*fetched[i], results[i].distribution, results[i].error};
        const bool keep = r.scene && in_whitelist(*r.scene, scene_whitelist(), config.whitelist_top_k);
        r.record.stage_status = keep ? StageStatus::kept : StageStatus::rejected_outlier;
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<ImageClassification> run_building_classifier(std::span<const SceneResult> filtered,
                                                         const ImageCache& cache, ClassifierBackend& backend,
                                                         const FusionConfig& config)
{
    std::vector<ImageRef> refs;
    std::vector<const ImageRecord*> kept;
    for (const auto& s : filtered) {
        if (s.record.stage_status != StageStatus::kept) continue;
        refs.push_back({s.record.key(), cache.resolve(s.record.cache_path)});
        kept.push_back(&s.record);
    }
    const auto results =
        classify_batch(refs, ModelRole::building, backend, config.building_labels(), config.batch_size);

    std::vector<ImageClassification> out;
    out.reserve(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i)
        out.push_back({kept[i]->building_id, kept[i]->key(), results[i].distribution, results[i].error});
    return out;
}

CityClassification fuse_buildings(std::span<const BuildingRecord> buildings, std::span<const ImageRecord> images,
                                  std::span<const SceneResult> filtered,
                                  std::span<const ImageClassification> classifications, const FusionConfig& config)
{
    CityClassification out;
    RunReport& report = out.report;
    report.buildings = buildings.size();

    std::map<std::int64_t, std::size_t> fetched_per_building;
    for (const auto& img : images) {
        ++report.images_total;
        switch (img.fetch_status) {
        case FetchStatus::fetched:
            ++report.images_fetched;
            ++fetched_per_building[img.building_id];
            break;
        case FetchStatus::no_pano: ++report.images_no_pano; break;
        case FetchStatus::failed: ++report.images_failed; break;
        }
    }
    for (const auto& s : filtered) {
        if (s.record.stage_status == StageStatus::kept) ++report.images_kept;
        else ++report.images_rejected;
        if (!s.scene) ++report.scene_invalid;
    }
    std::map<std::int64_t, std::vector<ClassDistribution>> evidence;
    for (const auto& c : classifications) {
        if (!c.distribution) {
            ++report.building_invalid;
            continue;
        }
        ++report.images_classified;
        evidence[c.building_id].push_back(*c.distribution);
    }

    std::vector<const BuildingRecord*> ordered;
    for (const auto& b : buildings) ordered.push_back(&b);
    std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

    const LabelSet labels = config.building_labels();
    for (const auto* b : ordered) {
        if (fetched_per_building[b->id] == 0) {
            out.unclassified.push_back({b->id, UnclassifiedReason::no_imagery});
            ++report.unclassified_no_imagery;
            continue;
        }
        auto it = evidence.find(b->id);
        if (it == evidence.end() || it->second.empty()) {
            out.unclassified.push_back({b->id, UnclassifiedReason::all_filtered});
            ++report.unclassified_all_filtered;
            continue;
        }
        FusedDecision fused = fuse(it->second);
        const auto cls = class_from_name(labels.at(fused.label_index));
        if (!cls) {  // the rejection label won
            out.unclassified.push_back({b->id, UnclassifiedReason::all_filtered});
            ++report.unclassified_all_filtered;
            continue;
        }
        out.predictions.push_back({b->id, *cls, fused.confidence, fused.images_used, std::move(fused.averaged)});
        ++report.predicted;
    }
    return out;
}

CityClassification classify_city(std::span<const BuildingRecord> buildings, std::span<const ImageRecord> images,
                                 const ImageCache& cache, ClassifierBackend& scene_backend,
                                 ClassifierBackend& building_backend, const FusionConfig& config)
{
    const auto filtered = run_scene_filter(images, cache, scene_backend, config);
    const auto classified = run_building_classifier(filtered, cache, building_backend, config);
    return fuse_buildings(buildings, images, filtered, classified, config);
}

}  // namespace bic
