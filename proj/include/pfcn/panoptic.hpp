#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pfcn/kernel_generator.hpp"
#include "pfcn/tensor.hpp"

namespace pfcn {

struct Category {
    int id = 0;
    std::string name;
    Kind kind = Kind::Thing;
};

/// Dataset categories and their mapping onto model channels: the i-th thing
/// category is thing channel i, the i-th stuff category is stuff channel i.
struct Taxonomy {
    std::vector<Category> categories;

    static Taxonomy synthetic();

    std::vector<Category> things() const;
    std::vector<Category> stuff() const;
    int num_things() const { return static_cast<int>(things().size()); }
    int num_stuff() const { return static_cast<int>(stuff().size()); }
    const Category& by_id(int id) const;
    bool contains(int id) const;
    /// Channel index of a category within its kind.
    int channel(int id) const;
    int thing_id(int channel) const;
    int stuff_id(int channel) const;
};

std::string to_string(Kind kind);
Kind parse_kind(const std::string& s);

struct Segment {
    int id = 0;
    int category = 0;
    Kind kind = Kind::Thing;
    double score = 1.0;
    int64_t area = 0;
};

/// Non-overlapping per-pixel assignment; id 0 is void.
struct PanopticSegmentation {
    IdMap id_map;
    std::vector<Segment> segments;

    /// Throws ValidationError unless ids in the map and the segment list agree,
    /// areas match, ids are unique and each stuff category occurs at most once.
    void validate() const;

    const Segment* find(int id) const;
    Mask mask_of(int id) const;
    /// Per-pixel category id, 0 where void.
    Grid<int> semantic() const;
};

}  // namespace pfcn
