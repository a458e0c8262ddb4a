#include "bic/osm.hpp"

#include <expat.h>

#include <algorithm>
#include <cstring>
#include <istream>
#include <memory>
#include <sstream>
#include <unordered_map>

#include "bic/error.hpp"

namespace bic {

BBox BBox::parse(const std::string& text)
{
    std::istringstream in(text);
    BBox b;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(in >> b.south >> c1 >> b.west >> c2 >> b.north >> c3 >> b.east) || c1 != ',' || c2 != ',' || c3 != ',')
        throw InvalidArgument("bbox must be S,W,N,E: " + text);
    in >> std::ws;
    if (!in.eof()) throw InvalidArgument("trailing characters after bbox: " + text);
    if (!is_valid({b.south, b.west}) || !is_valid({b.north, b.east}))
        throw InvalidArgument("bbox coordinates out of range: " + text);
    if (b.south > b.north || b.west > b.east) throw InvalidArgument("bbox bounds are inverted: " + text);
    return b;
}

namespace {

struct RawWay {
    std::int64_t id = 0;
    std::vector<std::int64_t> refs;
    std::optional<std::string> building;
};

struct RawRelation {
    bool multipolygon = false;
    bool building = false;
};

class OsmXmlHandler {
public:
    std::unordered_map<std::int64_t, GeoPoint> nodes;
    std::vector<RawWay> ways;
    std::size_t building_relations = 0;

    static void XMLCALL on_start(void* self, const XML_Char* name, const XML_Char** attrs)
    {
        static_cast<OsmXmlHandler*>(self)->start(name, attrs);
    }
    static void XMLCALL on_end(void* self, const XML_Char* name) { static_cast<OsmXmlHandler*>(self)->end(name); }

private:
    enum class Context { none, way, relation };
    Context context_ = Context::none;
    RawWay way_;
    RawRelation relation_;

    static const char* attr(const XML_Char** attrs, const char* key)
    {
        for (std::size_t i = 0; attrs[i]; i += 2)
            if (std::strcmp(attrs[i], key) == 0) return attrs[i + 1];
        return nullptr;
    }

    static std::int64_t to_id(const char* s) { return s ? std::strtoll(s, nullptr, 10) : 0; }

    void start(const char* name, const XML_Char** attrs)
    {
        if (std::strcmp(name, "node") == 0) {
            const char* lat = attr(attrs, "lat");
            const char* lon = attr(attrs, "lon");
            if (lat && lon) nodes[to_id(attr(attrs, "id"))] = GeoPoint{std::strtod(lat, nullptr), std::strtod(lon, nullptr)};
        } else if (std::strcmp(name, "way") == 0) {
            context_ = Context::way;
            way_ = RawWay{to_id(attr(attrs, "id")), {}, std::nullopt};
        } else if (std::strcmp(name, "relation") == 0) {
            context_ = Context::relation;
            relation_ = RawRelation{};
        } else if (std::strcmp(name, "nd") == 0 && context_ == Context::way) {
            way_.refs.push_back(to_id(attr(attrs, "ref")));
        } else if (std::strcmp(name, "tag") == 0) {
            const char* k = attr(attrs, "k");
            const char* v = attr(attrs, "v");
            if (!k || !v) return;
            if (context_ == Context::way && std::strcmp(k, "building") == 0) {
                way_.building = v;
            } else if (context_ == Context::relation) {
                if (std::strcmp(k, "type") == 0 && std::strcmp(v, "multipolygon") == 0) relation_.multipolygon = true;
                if (std::strcmp(k, "building") == 0 && std::strcmp(v, "no") != 0) relation_.building = true;
            }
        }
    }

    void end(const char* name)
    {
        if (std::strcmp(name, "way") == 0 && context_ == Context::way) {
            if (way_.building && *way_.building != "no") ways.push_back(std::move(way_));
            context_ = Context::none;
        } else if (std::strcmp(name, "relation") == 0 && context_ == Context::relation) {
            if (relation_.multipolygon && relation_.building) ++building_relations;
            context_ = Context::none;
        }
    }
};

}  // namespace

ParseResult parse_osm(std::istream& xml, const std::optional<BBox>& bbox)
{
    OsmXmlHandler handler;
    std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(XML_ParserCreate(nullptr),
                                                                                         &XML_ParserFree);
    if (!parser) throw MalformedXml("cannot allocate XML parser");
    XML_SetUserData(parser.get(), &handler);
    XML_SetElementHandler(parser.get(), &OsmXmlHandler::on_start, &OsmXmlHandler::on_end);

    std::vector<char> buffer(1 << 16);
    bool saw_bytes = false;
    for (;;) {
        xml.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
        const auto got = xml.gcount();
        const bool last = got < static_cast<std::streamsize>(buffer.size());
        if (got > 0) saw_bytes = true;
        // An empty document is accepted as containing no buildings.
        if (last && !saw_bytes) break;
        if (XML_Parse(parser.get(), buffer.data(), static_cast<int>(got), last) == XML_STATUS_ERROR) {
            std::ostringstream msg;
            msg << XML_ErrorString(XML_GetErrorCode(parser.get())) << " at line "
                << XML_GetCurrentLineNumber(parser.get());
            throw MalformedXml(msg.str());
        }
        if (last) break;
    }

    ParseResult result;
    ParseReport& report = result.report;
    report.nodes = handler.nodes.size();
    report.building_ways = handler.ways.size();
    report.skipped_relations = handler.building_relations;

    for (const RawWay& way : handler.ways) {
        if (way.refs.size() < 2 || way.refs.front() != way.refs.back()) {
            ++report.skipped_unclosed;
            continue;
        }
        std::vector<GeoPoint> ring;
        ring.reserve(way.refs.size());
        bool resolved = true;
        for (auto ref : way.refs) {
            auto it = handler.nodes.find(ref);
            if (it == handler.nodes.end()) {
                resolved = false;
                break;
            }
            ring.push_back(it->second);
        }
        if (!resolved) {
            ++report.skipped_unresolved;
            continue;
        }

        std::optional<FootprintPolygon> footprint;
        try {
            footprint = FootprintPolygon::from_ring(std::move(ring));
        } catch (const Error&) {
            ++report.skipped_invalid_geometry;
            continue;
        }
        if (bbox && !bbox->contains(footprint->centroid())) {
            ++report.skipped_outside_bbox;
            continue;
        }

        result.records.push_back(
            BuildingRecord{way.id, std::move(*footprint), map_tag_to_class(*way.building), *way.building});
    }

    std::stable_sort(result.records.begin(), result.records.end(),
              [](const BuildingRecord& a, const BuildingRecord& b) { return a.id < b.id; });
    // Duplicate way ids cannot both be kept; the first after sorting wins.
    auto dup = std::unique(result.records.begin(), result.records.end(),
                           [](const BuildingRecord& a, const BuildingRecord& b) { return a.id == b.id; });
    result.records.erase(dup, result.records.end());
    report.parsed = result.records.size();
    for (const auto& rec : result.records) {
        if (rec.truth_label) continue;
        ++report.unmapped;
        ++report.unmapped_tags[rec.raw_tag];
    }
    return result;
}

}  // namespace bic
