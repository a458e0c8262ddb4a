// bic: building-instance classification pipeline driver.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bic/classifier.hpp"
#include "bic/error.hpp"
#include "bic/pipeline.hpp"

namespace {

struct Options {
    std::string config_path;
    std::string out_dir;
    bool force = false;

    // stage-specific overrides
    std::string osm;
    std::string bbox;
    std::optional<std::size_t> sample_n;
    std::optional<std::uint64_t> seed;
    std::string transport;
    std::string replay_dir;
    std::string cache_dir;
    bool all = false;

    // conformance
    std::string endpoint;
    std::string role = "building";
    std::vector<std::string> probes;
};

bic::PipelineConfig resolve_config(const Options& o)
{
    // Without --config, continue with the snapshot of the previous run in
    // the output directory, so single-stage commands need no repeated flags.
    nlohmann::json j = nlohmann::json::object();
    const std::filesystem::path out = o.out_dir.empty() ? bic::PipelineConfig{}.out_dir : std::filesystem::path(o.out_dir);
    if (!o.config_path.empty()) {
        j = bic::PipelineConfig::load(o.config_path).to_json();
    } else if (std::filesystem::exists(out / "manifest.jsonl")) {
        j = bic::RunManifest(out / "manifest.jsonl").config();
    }
    if (!o.out_dir.empty() || j.is_null() || j.empty()) j["out"] = out.string();
    if (!o.osm.empty()) j["osm"] = o.osm;
    if (!o.bbox.empty()) j["bbox"] = o.bbox;
    if (!o.cache_dir.empty()) j["cache_dir"] = o.cache_dir;
    if (!o.transport.empty()) j["acquisition"]["transport"] = o.transport;
    if (!o.replay_dir.empty()) j["acquisition"]["replay_dir"] = o.replay_dir;
    if (o.sample_n) j["eval"]["sample_n"] = *o.sample_n;
    if (o.seed) j["eval"]["seed"] = *o.seed;
    return bic::PipelineConfig::from_json(j);
}

void report(const bic::StageOutcome& outcome)
{
    std::printf("%-9s %s: %s\n", std::string(bic::to_string(outcome.stage)).c_str(),
                outcome.executed ? "done" : "skipped", outcome.summary.c_str());
}

// Runs the classifier protocol checks against a model server.
int conformance(const Options& o)
{
    const bic::ModelRole role = o.role == "scene" ? bic::ModelRole::scene : bic::ModelRole::building;
    const bic::LabelSet& labels = role == bic::ModelRole::scene ? bic::scene_label_set() : bic::building_label_set();
    const auto backend = bic::make_backend(o.endpoint, std::chrono::seconds(30), labels);
    std::vector<bic::ImageRef> refs;
    for (const auto& p : o.probes) refs.push_back({std::filesystem::path(p).filename().string(), p});
    bool ok = true;
    for (const auto& c : bic::check_conformance(*backend, role, labels, refs)) {
        std::printf("[%s] %s%s%s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.empty() ? "" : ": ",
                    c.detail.c_str());
        ok = ok && c.passed;
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Classify buildings from street-level imagery and map the result."};
    app.require_subcommand(1);

    Options o;
    app.add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--out", o.out_dir, "output directory (default: out)");
    app.add_flag("--force", o.force, "rerun stages whose outputs are current");
    app.add_option("--cache-dir", o.cache_dir, "image cache root (default: the output directory)");
    app.add_option("--transport", o.transport, "live or replay")->check(CLI::IsMember({"live", "replay"}));
    app.add_option("--replay-dir", o.replay_dir, "fixture archive for the replay transport");

    auto* ingest = app.add_subcommand("ingest", "parse OSM buildings");
    ingest->add_option("--osm", o.osm, "OSM XML extract");
    ingest->add_option("--bbox", o.bbox, "S,W,N,E");
    app.add_subcommand("fetch", "download street-level images");
    app.add_subcommand("filter", "drop images whose scene is not a building");
    app.add_subcommand("classify", "run the building classifier per image");
    app.add_subcommand("fuse", "combine image predictions per building");
    auto* eval = app.add_subcommand("eval", "score predictions against OSM tags");
    eval->add_option("--sample-n", o.sample_n, "evaluate a seeded sample of this size");
    eval->add_option("--seed", o.seed, "sampling seed");
    app.add_subcommand("map", "write GeoJSON maps and density grids");
    auto* run = app.add_subcommand("run", "run stages in order");
    run->add_flag("--all", o.all, "run every stage")->required();
    run->add_option("--osm", o.osm, "OSM XML extract");
    run->add_option("--bbox", o.bbox, "S,W,N,E");

    auto* conf = app.add_subcommand("conformance", "check a classifier endpoint against the protocol");
    conf->add_option("--endpoint", o.endpoint, "base URL of the model server, or stub")->required();
    conf->add_option("--role", o.role, "building or scene")->check(CLI::IsMember({"building", "scene"}));
    conf->add_option("probes", o.probes, "PNG images to send")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (conf->parsed()) return conformance(o);
        bic::Pipeline pipeline(resolve_config(o));
        const std::string name = app.get_subcommands().front()->get_name();
        if (name == "run") {
            for (const auto& outcome : pipeline.run_all(o.force)) report(outcome);
        } else {
            report(pipeline.run_stage(*bic::stage_from_string(name), o.force));
        }
    } catch (const bic::UpstreamIncomplete& e) {
        std::cerr << "bic: " << e.what() << '\n';
        return 3;
    } catch (const bic::RunLocked& e) {
        std::cerr << "bic: " << e.what() << '\n';
        return 4;
    } catch (const bic::InvalidArgument& e) {
        std::cerr << "bic: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "bic: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
