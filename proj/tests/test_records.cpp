#include <doctest.h>

#include <fstream>
#include <random>

#include "bic/error.hpp"
#include "bic/records.hpp"
#include "oracles.hpp"
#include "tempdir.hpp"

using namespace bic;
using namespace bic::records;

namespace {

ImageRecord sample_image(std::mt19937_64& rng)
{
    ImageRecord r;
    r.building_id = static_cast<std::int64_t>(rng() % 1000000);
    r.viewpoint_index = static_cast<int>(rng() % 4);
    r.viewpoint = {oracle::random_point(rng), static_cast<double>(rng() % 36000) / 100.0, 10.0, 512, 512, 90.0};
    if (rng() % 2) {
        r.pano_id = "pano_" + std::to_string(rng() % 1000);
        r.cache_path = "cache/" + r.pano_id + "/90.png";
        r.fetch_status = FetchStatus::fetched;
        r.stage_status = rng() % 2 ? StageStatus::kept : StageStatus::rejected_outlier;
    } else {
        r.fetch_status = FetchStatus::no_pano;
        r.error = "ZERO_RESULTS";
    }
    return r;
}

ClassDistribution sample_dist(std::mt19937_64& rng, const LabelSet& labels)
{
    return {labels, oracle::random_simplex(rng, labels.size())};
}

}  // namespace

TEST_CASE("building record round trip")
{
    const std::vector<GeoPoint> ring = {{51.0, -114.0}, {51.0, -113.9999}, {51.0001, -113.9999}, {51.0, -114.0}};
    BuildingRecord b{42, FootprintPolygon::from_ring(ring), BuildingClass::garage, "garages"};
    const auto j = to_json(b);
    const auto back = building_from_json(j);
    CHECK(back.id == 42);
    CHECK(back.truth_label == BuildingClass::garage);
    CHECK(back.raw_tag == "garages");
    CHECK(back.footprint.ring() == b.footprint.ring());
    CHECK(to_json(back) == j);

    BuildingRecord unlabeled{7, FootprintPolygon::from_ring(ring), std::nullopt, "yes"};
    CHECK_FALSE(building_from_json(to_json(unlabeled)).truth_label);
}

TEST_CASE("image and scene records round trip")
{
    std::mt19937_64 rng(17);
    for (int i = 0; i < 200; ++i) {
        const auto img = sample_image(rng);
        const auto j = to_json(img);
        const auto back = image_from_json(j);
        CHECK(back.viewpoint == img.viewpoint);
        CHECK(back.key() == img.key());
        CHECK(back.fetch_status == img.fetch_status);
        CHECK(back.stage_status == img.stage_status);
        CHECK(to_json(back) == j);

        SceneResult s{img, std::nullopt, "bad"};
        if (i % 2) s = {img, sample_dist(rng, scene_label_set()), ""};
        const auto sj = to_json(s);
        CHECK(to_json(scene_from_json(sj)) == sj);
    }
}

TEST_CASE("classification and prediction round trip")
{
    std::mt19937_64 rng(5);
    const auto labels = building_label_set();
    for (int i = 0; i < 100; ++i) {
        ImageClassification c{i, "k" + std::to_string(i), std::nullopt, "malformed"};
        if (i % 3) c = {i, "k" + std::to_string(i), sample_dist(rng, labels), ""};
        const auto cj = to_json(c);
        const auto back = classification_from_json(cj, labels);
        CHECK(back.distribution.has_value() == c.distribution.has_value());
        if (c.distribution) CHECK(back.distribution->probs == c.distribution->probs);
        CHECK(to_json(back) == cj);

        auto d = sample_dist(rng, labels);
        BuildingPrediction p{i, kAllBuildingClasses[i % 8], d.probs[0], 3, d};
        const auto pj = to_json(p);
        const auto pb = prediction_from_json(pj);
        CHECK(pb.label == p.label);
        CHECK(pb.confidence == p.confidence);
        CHECK(to_json(pb) == pj);
    }

    for (auto reason : {UnclassifiedReason::no_imagery, UnclassifiedReason::all_filtered}) {
        const auto u = unclassified_from_json(to_json(UnclassifiedBuilding{9, reason}));
        CHECK(u.building_id == 9);
        CHECK(u.reason == reason);
    }
}

TEST_CASE("run report round trip")
{
    RunReport r;
    r.buildings = 50;
    r.images_total = 160;
    r.images_fetched = 131;
    r.predicted = 40;
    r.unclassified_no_imagery = 7;
    CHECK(run_report_from_json(to_json(r)) == r);
}

TEST_CASE("malformed records are rejected")
{
    std::mt19937_64 rng(1);
    auto j = to_json(sample_image(rng));
    j["fetch_status"] = "maybe";
    CHECK_THROWS(image_from_json(j));
    CHECK_THROWS(image_from_json(nlohmann::json::object()));
    CHECK_THROWS(unclassified_from_json({{"building_id", 1}, {"reason", "lost"}}));
    CHECK_THROWS_AS(distribution_from_json({{"house", 0.5}}, building_label_set()), InvalidDistribution);
}

TEST_CASE("jsonl files")
{
    testing::TempDir dir;
    const auto path = dir / "rows.jsonl";
    std::vector<nlohmann::json> rows = {{{"a", 1}}, {{"b", "two"}}, nlohmann::json::array({1, 2})};
    write_jsonl(path, rows);
    CHECK(read_jsonl(path) == rows);

    append_jsonl(path, {{"c", 3}});
    CHECK(read_jsonl(path).size() == 4);

    {
        std::ofstream out(path, std::ios::app);
        out << "\n\n";
    }
    CHECK(read_jsonl(path).size() == 4);

    {
        std::ofstream out(path, std::ios::app);
        out << "{not json\n";
    }
    CHECK_THROWS_AS(read_jsonl(path), IoError);
    CHECK_THROWS_AS(read_jsonl(dir / "missing.jsonl"), IoError);

    write_jsonl(path, std::vector<nlohmann::json>{});
    CHECK(read_jsonl(path).empty());
}
