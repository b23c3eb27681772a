#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "pfcn/tensor.hpp"

namespace pfcn {

/// A named trainable array with its gradient accumulator.
template <typename T>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool decay = true;  // subject to weight decay

    size_t size() const { return value.size(); }
};

/// Owns all parameters of a model. Addresses stay stable after insertion.
template <typename T>
class ParamStore {
public:
    Param<T>& add(const std::string& name, std::vector<int> shape, bool decay = true);

    Param<T>& get(const std::string& name);
    const Param<T>& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::vector<std::unique_ptr<Param<T>>>& all() { return params_; }
    const std::vector<std::unique_ptr<Param<T>>>& all() const { return params_; }

    size_t total_size() const;
    void zero_grad();

    /// Flattened view of every value, in insertion order.
    std::vector<T> flat_values() const;
    void set_flat_values(std::span<const T> values);
    std::vector<T> flat_grads() const;

private:
    std::vector<std::unique_ptr<Param<T>>> params_;
};

/// Uniform in [-bound, bound] with bound = gain / sqrt(fan_in).
template <typename T>
void init_uniform_fan_in(Param<T>& p, int fan_in, double gain, std::mt19937_64& rng);

/// Binary checkpoint: "PFCN", u32 version, then for every parameter
/// u16 name length, name bytes, u8 rank, u32 dims, float32 row-major payload.
/// All integers little-endian.
inline constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::filesystem::path& path);

/// Loads into an existing store; every stored entry must exist with the same shape.
template <typename T>
void load_checkpoint(ParamStore<T>& store, const std::filesystem::path& path);

}  // namespace pfcn
