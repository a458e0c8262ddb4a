#include "bic/building_class.hpp"

#include <algorithm>
#include <cctype>
#include <utility>

namespace bic {

std::optional<BuildingClass> class_from_name(std::string_view name) noexcept
{
    for (std::size_t i = 0; i < kNumBuildingClasses; ++i)
        if (kBuildingClassNames[i] == name) return kAllBuildingClasses[i];
    return std::nullopt;
}

std::optional<BuildingClass> map_tag_to_class(std::string_view raw_tag) noexcept
{
    static constexpr std::pair<std::string_view, BuildingClass> kTable[] = {
        {"apartments", BuildingClass::apartment}, {"church", BuildingClass::church},
        {"garage", BuildingClass::garage},        {"garages", BuildingClass::garage},
        {"house", BuildingClass::house},          {"industrial", BuildingClass::industrial},
        {"office", BuildingClass::office_building}, {"retail", BuildingClass::retail},
        {"roof", BuildingClass::roof},
    };

    auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!raw_tag.empty() && is_space(raw_tag.front())) raw_tag.remove_prefix(1);
    while (!raw_tag.empty() && is_space(raw_tag.back())) raw_tag.remove_suffix(1);

    std::string key(raw_tag);
    std::transform(key.begin(), key.end(), key.begin(),
                   [](char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); });
    for (const auto& [tag, cls] : kTable)
        if (tag == key) return cls;
    return std::nullopt;
}

}  // namespace bic
