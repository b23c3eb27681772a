#include "pfcn/panoptic.hpp"

#include <map>
#include <set>

namespace pfcn {

Taxonomy Taxonomy::synthetic() {
    Taxonomy t;
    t.categories = {{1, "circle", Kind::Thing},
                    {2, "square", Kind::Thing},
                    {3, "triangle", Kind::Thing},
                    {4, "upper-band", Kind::Stuff},
                    {5, "lower-texture", Kind::Stuff}};
    return t;
}

std::vector<Category> Taxonomy::things() const {
    std::vector<Category> out;
    for (const auto& c : categories)
        if (c.kind == Kind::Thing) out.push_back(c);
    return out;
}

std::vector<Category> Taxonomy::stuff() const {
    std::vector<Category> out;
    for (const auto& c : categories)
        if (c.kind == Kind::Stuff) out.push_back(c);
    return out;
}

const Category& Taxonomy::by_id(int id) const {
    for (const auto& c : categories)
        if (c.id == id) return c;
    throw ValidationError("unknown category id " + std::to_string(id));
}

bool Taxonomy::contains(int id) const {
    for (const auto& c : categories)
        if (c.id == id) return true;
    return false;
}

int Taxonomy::channel(int id) const {
    const Kind k = by_id(id).kind;
    int ch = 0;
    for (const auto& c : categories) {
        if (c.kind != k) continue;
        if (c.id == id) return ch;
        ++ch;
    }
    throw ValidationError("unknown category id " + std::to_string(id));
}

int Taxonomy::thing_id(int channel) const { return things().at(channel).id; }
int Taxonomy::stuff_id(int channel) const { return stuff().at(channel).id; }

std::string to_string(Kind kind) { return kind == Kind::Thing ? "thing" : "stuff"; }

Kind parse_kind(const std::string& s) {
    if (s == "thing") return Kind::Thing;
    if (s == "stuff") return Kind::Stuff;
    throw ValidationError("unknown kind '" + s + "'");
}

void PanopticSegmentation::validate() const {
    std::map<int, int64_t> counts;
    for (int32_t v : id_map.data) {
        if (v < 0) throw ValidationError("negative segment id in id map");
        if (v != 0) ++counts[v];
    }
    std::set<int> seen;
    std::set<int> stuff_categories;
    for (const auto& s : segments) {
        if (s.id == 0) throw ValidationError("segment id 0 is reserved for void");
        if (!seen.insert(s.id).second) throw ValidationError("duplicate segment id " + std::to_string(s.id));
        auto it = counts.find(s.id);
        if (it == counts.end()) throw ValidationError("segment " + std::to_string(s.id) + " has no pixels");
        if (it->second != s.area)
            throw ValidationError("segment " + std::to_string(s.id) + " area " + std::to_string(s.area) +
                                  " does not match id map count " + std::to_string(it->second));
        if (s.kind == Kind::Stuff && !stuff_categories.insert(s.category).second)
            throw ValidationError("stuff category " + std::to_string(s.category) + " appears twice");
    }
    for (const auto& [id, n] : counts) {
        if (!seen.count(id)) throw ValidationError("id " + std::to_string(id) + " in id map has no segment record");
    }
}

const Segment* PanopticSegmentation::find(int id) const {
    for (const auto& s : segments)
        if (s.id == id) return &s;
    return nullptr;
}

Mask PanopticSegmentation::mask_of(int id) const {
    Mask m(id_map.h, id_map.w, 0);
    for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = id_map.data[i] == id ? 1 : 0;
    return m;
}

Grid<int> PanopticSegmentation::semantic() const {
    std::map<int, int> cat;
    for (const auto& s : segments) cat[s.id] = s.category;
    Grid<int> out(id_map.h, id_map.w, 0);
    for (size_t i = 0; i < out.data.size(); ++i) {
        const int id = id_map.data[i];
        if (id != 0) {
            auto it = cat.find(id);
            out.data[i] = it == cat.end() ? 0 : it->second;
        }
    }
    return out;
}

}  // namespace pfcn
