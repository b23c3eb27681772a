#include "pfcn/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace pfcn {

template <typename T>
Param<T>& ParamStore<T>::add(const std::string& name, std::vector<int> shape, bool decay) {
    if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
    auto p = std::make_unique<Param<T>>();
    p->name = name;
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ConfigError("parameter " + name + " has non-positive dimension");
        n *= static_cast<size_t>(d);
    }
    p->shape = std::move(shape);
    p->value.assign(n, T(0));
    p->grad.assign(n, T(0));
    p->decay = decay;
    params_.push_back(std::move(p));
    return *params_.back();
}

template <typename T>
Param<T>& ParamStore<T>::get(const std::string& name) {
    for (auto& p : params_)
        if (p->name == name) return *p;
    throw ConfigError("unknown parameter: " + name);
}

template <typename T>
const Param<T>& ParamStore<T>::get(const std::string& name) const {
    for (const auto& p : params_)
        if (p->name == name) return *p;
    throw ConfigError("unknown parameter: " + name);
}

template <typename T>
bool ParamStore<T>::contains(const std::string& name) const {
    for (const auto& p : params_)
        if (p->name == name) return true;
    return false;
}

template <typename T>
size_t ParamStore<T>::total_size() const {
    size_t n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
    for (auto& p : params_) std::fill(p->grad.begin(), p->grad.end(), T(0));
}

template <typename T>
std::vector<T> ParamStore<T>::flat_values() const {
    std::vector<T> out;
    out.reserve(total_size());
    for (const auto& p : params_) out.insert(out.end(), p->value.begin(), p->value.end());
    return out;
}

template <typename T>
void ParamStore<T>::set_flat_values(std::span<const T> values) {
    if (values.size() != total_size()) throw InputError("set_flat_values: size mismatch");
    size_t off = 0;
    for (auto& p : params_) {
        std::copy(values.begin() + static_cast<std::ptrdiff_t>(off),
                  values.begin() + static_cast<std::ptrdiff_t>(off + p->size()), p->value.begin());
        off += p->size();
    }
}

template <typename T>
std::vector<T> ParamStore<T>::flat_grads() const {
    std::vector<T> out;
    out.reserve(total_size());
    for (const auto& p : params_) out.insert(out.end(), p->grad.begin(), p->grad.end());
    return out;
}

template <typename T>
void init_uniform_fan_in(Param<T>& p, int fan_in, double gain, std::mt19937_64& rng) {
    const double bound = gain / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : p.value) v = T(dist(rng));
}

namespace {

template <typename U>
void write_le(std::ofstream& out, U v) {
    unsigned char bytes[sizeof(U)];
    for (size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U read_le(std::ifstream& in, const std::filesystem::path& path) {
    unsigned char bytes[sizeof(U)];
    in.read(reinterpret_cast<char*>(bytes), sizeof(U));
    if (!in) throw IoError("truncated checkpoint: " + path.string());
    U v = 0;
    for (size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
    return v;
}

}  // namespace

template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
    out.write("PFCN", 4);
    write_le<uint32_t>(out, kCheckpointVersion);
    for (const auto& p : store.all()) {
        write_le<uint16_t>(out, static_cast<uint16_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        write_le<uint8_t>(out, static_cast<uint8_t>(p->shape.size()));
        for (int d : p->shape) write_le<uint32_t>(out, static_cast<uint32_t>(d));
        for (T v : p->value) {
            const float f = static_cast<float>(v);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            write_le<uint32_t>(out, bits);
        }
    }
    if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

template <typename T>
void load_checkpoint(ParamStore<T>& store, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "PFCN", 4) != 0) throw IoError("bad checkpoint magic: " + path.string());
    const auto version = read_le<uint32_t>(in, path);
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
    size_t loaded = 0;
    while (in.peek() != std::char_traits<char>::eof()) {
        const auto len = read_le<uint16_t>(in, path);
        std::string name(len, '\0');
        in.read(name.data(), len);
        const auto rank = read_le<uint8_t>(in, path);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(read_le<uint32_t>(in, path));
        if (!store.contains(name)) throw IoError("checkpoint entry '" + name + "' not in model: " + path.string());
        auto& p = store.get(name);
        if (p.shape != shape) throw IoError("checkpoint entry '" + name + "' has wrong shape: " + path.string());
        for (auto& v : p.value) {
            const auto bits = read_le<uint32_t>(in, path);
            float f;
            std::memcpy(&f, &bits, 4);
            v = T(f);
        }
        ++loaded;
    }
    if (loaded != store.all().size())
        throw IoError("checkpoint is missing parameters (" + std::to_string(loaded) + " of " +
                      std::to_string(store.all().size()) + "): " + path.string());
}

template class ParamStore<float>;
template class ParamStore<double>;
template void init_uniform_fan_in(Param<float>&, int, double, std::mt19937_64&);
template void init_uniform_fan_in(Param<double>&, int, double, std::mt19937_64&);
template void save_checkpoint(const ParamStore<float>&, const std::filesystem::path&);
template void save_checkpoint(const ParamStore<double>&, const std::filesystem::path&);
template void load_checkpoint(ParamStore<float>&, const std::filesystem::path&);
template void load_checkpoint(ParamStore<double>&, const std::filesystem::path&);

}  // namespace pfcn
