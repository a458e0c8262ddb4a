#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bic {

using LabelSet = std::vector<std::string>;

/// The eight building class names in ordinal order.
const LabelSet& building_label_set();

/// Scene categories whose images are kept by the outlier filter.
const LabelSet& scene_whitelist();

/// Label set a scene backend answers with: the whitelist followed by a
/// catch-all "other" that backends collapse every remaining category into.
const LabelSet& scene_label_set();

inline constexpr std::string_view kSceneOtherLabel = "other";

/// Probability vector aligned to an ordered label set.
struct ClassDistribution {
    LabelSet labels;
    std::vector<double> probs;

    /// Throws InvalidDistribution unless lengths match, every entry is finite
    /// and non-negative, and the entries sum to 1 within `tolerance`.
    void validate(double tolerance = 1e-6) const;

    /// Builds an aligned distribution from a sparse label->probability map.
    /// Labels not in `labels` are an InvalidDistribution; absent labels are 0.
    static ClassDistribution from_sparse(const LabelSet& labels, const std::map<std::string, double>& probs,
                                         double tolerance = 1e-6);

    friend bool operator==(const ClassDistribution&, const ClassDistribution&) = default;
};

struct TopLabel {
    std::size_t index = 0;
    std::string label;
    double probability = 0.0;
};

/// Maximal entry; ties go to the earliest label.
TopLabel top1(const ClassDistribution& d);

/// The k most probable labels, ties broken by label order.
std::vector<TopLabel> top_k_labels(const ClassDistribution& d, std::size_t k);

enum class ModelRole { scene, building };
std::string_view to_string(ModelRole role) noexcept;

struct ImageRef {
    std::string id;
    std::filesystem::path path;
};

/// One backend answer before validation, keyed by image id.
struct RawClassification {
    std::string id;
    std::map<std::string, double> probs;
};

/// A model server. Throws BackendUnavailable when it cannot be reached.
class ClassifierBackend {
public:
    virtual ~ClassifierBackend() = default;
    virtual std::vector<RawClassification> classify(ModelRole role, std::span<const ImageRef> images) = 0;
};

/// Offline backend. A sidecar JSON object next to the image
/// (`<image>.labels.json` for the building role, `<image>.scene.json` for
/// the scene role) is echoed verbatim; otherwise a point on the simplex is
/// drawn from a generator seeded by the SHA-256 of the image bytes.
class StubBackend final : public ClassifierBackend {
public:
    StubBackend(LabelSet building_labels, LabelSet scene_labels);
    StubBackend();

    std::vector<RawClassification> classify(ModelRole role, std::span<const ImageRef> images) override;

    static std::filesystem::path sidecar_path(const std::filesystem::path& image, ModelRole role);

private:
    LabelSet building_labels_;
    LabelSet scene_labels_;
};

/// Client for a model server speaking `POST /v1/classify`.
class HttpBackend final : public ClassifierBackend {
public:
    explicit HttpBackend(std::string base_url, std::chrono::seconds timeout = std::chrono::seconds(30));

    std::vector<RawClassification> classify(ModelRole role, std::span<const ImageRef> images) override;

    /// Request body for a batch; exposed for protocol tests.
    static std::string encode_request(ModelRole role, std::span<const ImageRef> images);
    /// Throws InvalidDistribution when the response shape is wrong.
    static std::vector<RawClassification> decode_response(std::string_view body);

private:
    std::string base_url_;
    std::chrono::seconds timeout_;
};

/// Outcome for one image: a validated distribution or the reason it failed.
struct Classification {
    std::string id;
    std::optional<ClassDistribution> distribution;
    std::string error;

    bool ok() const noexcept { return distribution.has_value(); }
};

/// Sends `images` to the backend in chunks of `batch_size` and validates
/// every answer against `labels`. The result is aligned with `images`;
/// items the backend answered invalidly, or not at all, carry an error.
/// BackendUnavailable propagates.
std::vector<Classification> classify_batch(std::span<const ImageRef> images, ModelRole role,
                                           ClassifierBackend& backend, const LabelSet& labels,
                                           std::size_t batch_size = 32);

struct ConformanceCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Protocol checks a model server must pass before a run relies on it:
/// an empty batch yields no results, a batch of n yields n results with the
/// ids in request order, and every answer covers exactly `labels` and sums
/// to 1 within 1e-6. `probes` should hold at least two images.
std::vector<ConformanceCheck> check_conformance(ClassifierBackend& backend, ModelRole role, const LabelSet& labels,
                                                std::span<const ImageRef> probes);

/// "stub" selects StubBackend, anything else is an HTTP base URL.
std::unique_ptr<ClassifierBackend> make_backend(const std::string& endpoint, std::chrono::seconds timeout,
                                                const LabelSet& building_labels);

}  // namespace bic
