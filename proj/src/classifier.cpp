#include "bic/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "bic/building_class.hpp"
#include "bic/error.hpp"
#include "bic/util.hpp"
#include "http_client.hpp"

namespace bic {

using json = nlohmann::json;

const LabelSet& building_label_set()
{
    static const LabelSet labels(kBuildingClassNames.begin(), kBuildingClassNames.end());
    return labels;
}

const LabelSet& scene_whitelist()
{
    static const LabelSet labels = {"apartment",       "church",  "house",    "industrial area", "museum",
                                    "building facade", "embassy", "hospital", "parking garage",  "hotel"};
    return labels;
}

const LabelSet& scene_label_set()
{
    static const LabelSet labels = [] {
        LabelSet l = scene_whitelist();
        l.emplace_back(kSceneOtherLabel);
        return l;
    }();
    return labels;
}

void ClassDistribution::validate(double tolerance) const
{
    if (labels.empty()) throw InvalidDistribution("empty label set");
    if (labels.size() != probs.size())
        throw InvalidDistribution(strprintf("%zu labels but %zu probabilities", labels.size(), probs.size()));
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!std::isfinite(probs[i]) || probs[i] < 0.0)
            throw InvalidDistribution("probability for '" + labels[i] + "' is negative or not finite");
        sum += probs[i];
    }
    if (std::abs(sum - 1.0) > tolerance) throw InvalidDistribution(strprintf("probabilities sum to %.9g", sum));
}

ClassDistribution ClassDistribution::from_sparse(const LabelSet& labels, const std::map<std::string, double>& probs,
                                                 double tolerance)
{
    ClassDistribution d{labels, std::vector<double>(labels.size(), 0.0)};
    for (const auto& [label, p] : probs) {
        auto it = std::find(labels.begin(), labels.end(), label);
        if (it == labels.end()) throw InvalidDistribution("unknown label '" + label + "'");
        d.probs[static_cast<std::size_t>(it - labels.begin())] = p;
    }
    d.validate(tolerance);
    return d;
}

TopLabel top1(const ClassDistribution& d)
{
    if (d.probs.empty()) throw InvalidDistribution("top1 of an empty distribution");
    const auto it = std::max_element(d.probs.begin(), d.probs.end());  // first maximum
    const auto i = static_cast<std::size_t>(it - d.probs.begin());
    return {i, d.labels.at(i), *it};
}

std::vector<TopLabel> top_k_labels(const ClassDistribution& d, std::size_t k)
{
    std::vector<std::size_t> order(d.probs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d.probs[a] > d.probs[b]; });
    order.resize(std::min(k, order.size()));
    std::vector<TopLabel> out;
    for (auto i : order) out.push_back({i, d.labels.at(i), d.probs[i]});
    return out;
}

std::string_view to_string(ModelRole role) noexcept { return role == ModelRole::scene ? "scene" : "building"; }

// --- stub ---------------------------------------------------------------

StubBackend::StubBackend(LabelSet building_labels, LabelSet scene_labels)
    : building_labels_(std::move(building_labels)), scene_labels_(std::move(scene_labels))
{
}

StubBackend::StubBackend() : StubBackend(building_label_set(), scene_label_set()) {}

std::filesystem::path StubBackend::sidecar_path(const std::filesystem::path& image, ModelRole role)
{
    auto p = image;
    p += role == ModelRole::scene ? ".scene.json" : ".labels.json";
    return p;
}

std::vector<RawClassification> StubBackend::classify(ModelRole role, std::span<const ImageRef> images)
{
    const LabelSet& labels = role == ModelRole::scene ? scene_labels_ : building_labels_;
    std::vector<RawClassification> out;
    out.reserve(images.size());
    for (const auto& image : images) {
        RawClassification r{image.id, {}};
        const auto sidecar = sidecar_path(image.path, role);
        if (std::filesystem::exists(sidecar)) {
            // A malformed sidecar yields an invalid distribution for this item.
            const json doc = json::parse(read_file(sidecar), nullptr, /*allow_exceptions=*/false);
            if (doc.is_object())
                for (const auto& [label, p] : doc.items())
                    r.probs[label] = p.is_number() ? p.get<double>() : std::nan("");
        } else {
            // Normalized exponentials are uniform on the simplex.
            const std::string digest = sha256_hex(read_file(image.path));
            std::seed_seq seq(digest.begin(), digest.end());
            std::mt19937_64 rng(seq);
            std::exponential_distribution<double> expo(1.0);
            std::vector<double> draws(labels.size());
            for (auto& x : draws) x = expo(rng);
            const double total = std::accumulate(draws.begin(), draws.end(), 0.0);
            for (std::size_t i = 0; i < labels.size(); ++i) r.probs[labels[i]] = draws[i] / total;
        }
        out.push_back(std::move(r));
    }
    return out;
}

// --- HTTP ---------------------------------------------------------------

HttpBackend::HttpBackend(std::string base_url, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout)
{
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

std::string HttpBackend::encode_request(ModelRole role, std::span<const ImageRef> images)
{
    json body;
    body["model"] = to_string(role);
    body["images"] = json::array();
    for (const auto& image : images)
        body["images"].push_back({{"id", image.id}, {"png_base64", base64_encode(read_file(image.path))}});
    return body.dump();
}

std::vector<RawClassification> HttpBackend::decode_response(std::string_view body)
{
    const json doc = json::parse(body, nullptr, /*allow_exceptions=*/false);
    if (!doc.is_object() || !doc.contains("results") || !doc["results"].is_array())
        throw InvalidDistribution("response lacks a results array");
    std::vector<RawClassification> out;
    for (const auto& item : doc["results"]) {
        if (!item.is_object() || !item.contains("id") || !item["id"].is_string() || !item.contains("probs") ||
            !item["probs"].is_object())
            throw InvalidDistribution("malformed result entry");
        RawClassification r{item["id"].get<std::string>(), {}};
        for (const auto& [label, p] : item["probs"].items()) {
            if (!p.is_number()) throw InvalidDistribution("probability for '" + label + "' is not a number");
            r.probs[label] = p.get<double>();
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<RawClassification> HttpBackend::classify(ModelRole role, std::span<const ImageRef> images)
{
    const auto reply = http::post_json(base_url_, "/v1/classify", encode_request(role, images), timeout_);
    if (!reply) throw BackendUnavailable("no response from " + base_url_);
    if (reply->status != 200)
        throw BackendUnavailable(strprintf("%s answered HTTP %d", base_url_.c_str(), reply->status));
    return decode_response(reply->body);
}

// --- gateway ------------------------------------------------------------

std::vector<Classification> classify_batch(std::span<const ImageRef> images, ModelRole role,
                                           ClassifierBackend& backend, const LabelSet& labels,
                                           std::size_t batch_size)
{
    if (batch_size == 0) throw InvalidArgument("batch size must be positive");
    std::vector<Classification> out;
    out.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += batch_size) {
        const auto chunk = images.subspan(start, std::min(batch_size, images.size() - start));
        std::vector<RawClassification> raw;
        try {
            raw = backend.classify(role, chunk);
        } catch (const InvalidDistribution& e) {
            // The whole reply was unusable; every item in the chunk fails.
            for (const auto& image : chunk) out.push_back({image.id, std::nullopt, e.what()});
            continue;
        }
        std::map<std::string, const RawClassification*> by_id;
        for (const auto& r : raw) by_id.emplace(r.id, &r);
        for (const auto& image : chunk) {
            Classification c{image.id, std::nullopt, {}};
            auto it = by_id.find(image.id);
            if (it == by_id.end()) {
                c.error = "backend returned no result for this image";
            } else {
                try {
                    c.distribution = ClassDistribution::from_sparse(labels, it->second->probs);
                } catch (const InvalidDistribution& e) {
                    c.error = e.what();
                }
            }
            out.push_back(std::move(c));
        }
    }
    return out;
}

std::vector<ConformanceCheck> check_conformance(ClassifierBackend& backend, ModelRole role, const LabelSet& labels,
                                                std::span<const ImageRef> probes)
{
    std::vector<ConformanceCheck> checks;
    auto run = [&](std::string name, auto&& body) {
        ConformanceCheck c{std::move(name), false, {}};
        try {
            c.detail = body();
            c.passed = c.detail.empty();
        } catch (const std::exception& e) {
            c.detail = e.what();
        }
        checks.push_back(std::move(c));
    };

    run("empty batch", [&]() -> std::string {
        const auto r = backend.classify(role, {});
        return r.empty() ? "" : strprintf("%zu results for 0 images", r.size());
    });

    std::vector<RawClassification> answers;
    run("batch length and order", [&]() -> std::string {
        answers = backend.classify(role, probes);
        if (answers.size() != probes.size())
            return strprintf("%zu results for %zu images", answers.size(), probes.size());
        for (std::size_t i = 0; i < probes.size(); ++i)
            if (answers[i].id != probes[i].id)
                return "result " + std::to_string(i) + " has id '" + answers[i].id + "', expected '" + probes[i].id + "'";
        return "";
    });

    run("label set and simplex", [&]() -> std::string {
        if (answers.empty() && !probes.empty()) return "no answers to inspect";
        for (const auto& a : answers) {
            if (a.probs.size() != labels.size())
                return strprintf("'%s' answered %zu labels, expected %zu", a.id.c_str(), a.probs.size(), labels.size());
            ClassDistribution::from_sparse(labels, a.probs, 1e-6);
        }
        return "";
    });

    run("single image", [&]() -> std::string {
        if (probes.empty()) return "no probe images";
        const auto r = backend.classify(role, probes.first(1));
        return r.size() == 1 && r[0].id == probes[0].id ? "" : "single-image batch not echoed";
    });
    return checks;
}

std::unique_ptr<ClassifierBackend> make_backend(const std::string& endpoint, std::chrono::seconds timeout,
                                                const LabelSet& building_labels)
{
    if (endpoint == "stub") return std::make_unique<StubBackend>(building_labels, scene_label_set());
    return std::make_unique<HttpBackend>(endpoint, timeout);
}

}  // namespace bic
