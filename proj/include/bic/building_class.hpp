#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace bic {

/// The eight functional building classes. Ordinal order is fixed and is the
/// row/column order of every vector and matrix in the library.
enum class BuildingClass : int {
    apartment = 0,
    church,
    garage,
    house,
    industrial,
    office_building,
    retail,
    roof,
};

inline constexpr std::size_t kNumBuildingClasses = 8;

inline constexpr std::array<BuildingClass, kNumBuildingClasses> kAllBuildingClasses = {
    BuildingClass::apartment,  BuildingClass::church,          BuildingClass::garage, BuildingClass::house,
    BuildingClass::industrial, BuildingClass::office_building, BuildingClass::retail, BuildingClass::roof,
};

inline constexpr std::array<std::string_view, kNumBuildingClasses> kBuildingClassNames = {
    "apartment", "church", "garage", "house", "industrial", "office_building", "retail", "roof",
};

constexpr std::size_t index_of(BuildingClass c) noexcept { return static_cast<std::size_t>(c); }
constexpr std::string_view to_string(BuildingClass c) noexcept { return kBuildingClassNames[index_of(c)]; }

/// Exact label-name lookup ("office_building", not the OSM tag "office").
std::optional<BuildingClass> class_from_name(std::string_view name) noexcept;

/// Maps an OSM building=* value onto the class schema. Case-insensitive and
/// whitespace-trimmed; anything outside the fixed table (including "yes")
/// yields nullopt.
std::optional<BuildingClass> map_tag_to_class(std::string_view raw_tag) noexcept;

}  // namespace bic
