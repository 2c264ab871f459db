#include "glissando/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "glissando/errors.hpp"

namespace glissando {

namespace {

constexpr char kMagic[4] = {'G', 'L', 'S', 'N'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void write_string(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_floats(std::ostream& os, const std::vector<float>& v) {
    // Little-endian float32 payload.
    for (const float f : v) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        write_u32(os, bits);
    }
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

std::string read_string(std::istream& is) {
    const uint64_t n = read_u64(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

void read_floats(std::istream& is, std::vector<float>& v) {
    for (auto& f : v) {
        const uint32_t bits = read_u32(is);
        std::memcpy(&f, &bits, 4);
    }
}

void write_array(std::ostream& os, const std::string& name, const ad::Shape& shape,
                 const std::vector<float>& data) {
    write_string(os, name);
    os.put(0); // dtype 0 = float32
    write_u32(os, static_cast<uint32_t>(shape.size()));
    for (int d : shape) write_u64(os, static_cast<uint64_t>(d));
    write_floats(os, data);
}

std::ifstream open_checked(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("checkpoint: bad magic in " + path);
    }
    const uint32_t version = read_u32(is);
    if (version != kVersion) {
        throw DataError("checkpoint: unsupported format version in " + path);
    }
    return is;
}

} // namespace

void save_checkpoint(const std::string& path, const GlissandoNet& model,
                     const CheckpointMeta& meta) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("checkpoint: cannot write " + path);
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_string(os, model.config().to_key_values());

    uint64_t n_arrays = 0;
    for (const auto& p : model.params().items()) {
        n_arrays += 1 + (p->adam_m.empty() ? 0 : 2);
    }
    write_u64(os, n_arrays);
    for (const auto& p : model.params().items()) {
        write_array(os, "param/" + p->name, p->shape, p->value);
        if (!p->adam_m.empty()) {
            write_array(os, "adam_m/" + p->name, p->shape, p->adam_m);
            write_array(os, "adam_v/" + p->name, p->shape, p->adam_v);
        }
    }
    write_u64(os, static_cast<uint64_t>(meta.epoch));
    write_u64(os, static_cast<uint64_t>(meta.global_step));
    write_string(os, meta.rng_state);
    if (!os) throw DataError("checkpoint: write failed for " + path);
}

ModelConfig read_checkpoint_config(const std::string& path) {
    auto is = open_checked(path);
    return ModelConfig::from_key_values(read_string(is));
}

CheckpointMeta load_checkpoint(const std::string& path, GlissandoNet& model) {
    auto is = open_checked(path);
    const ModelConfig stored = ModelConfig::from_key_values(read_string(is));
    if (!(stored == model.config())) {
        throw ConfigError("checkpoint: stored config does not match the model");
    }
    const uint64_t n_arrays = read_u64(is);
    for (uint64_t a = 0; a < n_arrays; ++a) {
        const std::string name = read_string(is);
        const char dtype = static_cast<char>(is.get());
        if (dtype != 0) throw DataError("checkpoint: unsupported dtype for " + name);
        const uint32_t ndim = read_u32(is);
        ad::Shape shape(ndim);
        for (auto& d : shape) d = static_cast<int>(read_u64(is));
        const auto slash = name.find('/');
        if (slash == std::string::npos) throw DataError("checkpoint: malformed array " + name);
        const std::string kind = name.substr(0, slash);
        const std::string pname = name.substr(slash + 1);
        nn::Parameter* p = model.params().find(pname);
        if (!p) throw DataError("checkpoint: unknown parameter " + pname);
        if (p->shape != shape) throw DataError("checkpoint: shape mismatch for " + pname);
        std::vector<float> data(static_cast<size_t>(ad::numel(shape)));
        read_floats(is, data);
        if (kind == "param") p->value = std::move(data);
        else if (kind == "adam_m") p->adam_m = std::move(data);
        else if (kind == "adam_v") p->adam_v = std::move(data);
        else throw DataError("checkpoint: unknown array kind " + kind);
    }
    CheckpointMeta meta;
    meta.epoch = static_cast<int64_t>(read_u64(is));
    meta.global_step = static_cast<int64_t>(read_u64(is));
    meta.rng_state = read_string(is);
    if (!is) throw DataError("checkpoint: truncated file " + path);
    return meta;
}

} // namespace glissando
