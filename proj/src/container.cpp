#include "rft/container.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

#include "rft/error.hpp"

namespace rft {

namespace {

constexpr std::uint32_t kVersion = 1;

// Explicit little-endian byte composition keeps the format host-independent.
void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& s, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_i32(std::string& s, std::int32_t v) { put_u32(s, static_cast<std::uint32_t>(v)); }
void put_f64(std::string& s, double v) { put_u64(s, std::bit_cast<std::uint64_t>(v)); }
void put_str(std::string& s, const std::string& v) {
    put_u32(s, static_cast<std::uint32_t>(v.size()));
    s.append(v);
}
void put_tensor(std::string& s, const Tensor& t) {
    put_u32(s, static_cast<std::uint32_t>(t.rank()));
    for (Index i = 0; i < t.rank(); ++i) put_u64(s, static_cast<std::uint64_t>(t.dim(i)));
    for (Index i = 0; i < t.numel(); ++i) put_f64(s, t[i]);
}

struct Reader {
    std::string name;
    const std::string& bytes;
    size_t pos = 0;

    void need(size_t n, const char* what) {
        if (pos + n > bytes.size())
            throw ParseError(name + ": truncated at byte " + std::to_string(pos) + " reading " +
                             what + " (need " + std::to_string(n) + " bytes, have " +
                             std::to_string(bytes.size() - pos) + ")");
    }
    std::uint32_t u32(const char* what = "u32") {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what = "u64") {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    std::int32_t i32(const char* what = "i32") { return static_cast<std::int32_t>(u32(what)); }
    double f64(const char* what = "f64") { return std::bit_cast<double>(u64(what)); }
    std::string str(const char* what = "string") {
        std::uint32_t n = u32(what);
        need(n, what);
        std::string v = bytes.substr(pos, n);
        pos += n;
        return v;
    }
    Tensor tensor(const char* what = "tensor") {
        std::uint32_t rank = u32(what);
        if (rank > 8) throw ParseError(name + ": implausible tensor rank at byte " +
                                       std::to_string(pos - 4));
        Shape shape;
        for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<Index>(u64(what)));
        Tensor t(shape);
        for (Index i = 0; i < t.numel(); ++i) t[i] = f64(what);
        return t;
    }
    void expect_magic(const char* magic) {
        need(4, "magic");
        if (bytes.compare(pos, 4, magic) != 0)
            throw ParseError(name + ": bad magic at byte 0 (expected " + magic + ")");
        pos += 4;
        std::uint32_t version = u32("version");
        if (version != kVersion)
            throw ParseError(name + ": unsupported version " + std::to_string(version));
    }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void spill(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ParseError("short write to '" + path + "'");
}

// Weight arrays in a stable order, shared by save and load.
std::map<std::string, Tensor*> weight_slots(ModelWeights& w) {
    std::map<std::string, Tensor*> slots;
    slots["patch_embed"] = &w.patch_embed;
    slots["unpatch"] = &w.unpatch;
    slots["cond_proj"] = &w.cond_proj;
    slots["time_mlp1"] = &w.time_mlp1;
    slots["time_mlp2"] = &w.time_mlp2;
    auto add_stream = [&slots](const std::string& prefix, StreamWeights& s) {
        slots[prefix + ".qkv"] = &s.w_qkv;
        slots[prefix + ".out"] = &s.w_out;
        slots[prefix + ".mlp1"] = &s.w_mlp1;
        slots[prefix + ".mlp2"] = &s.w_mlp2;
    };
    for (size_t b = 0; b < w.double_blocks.size(); ++b) {
        add_stream("double" + std::to_string(b) + ".img", w.double_blocks[b].img);
        add_stream("double" + std::to_string(b) + ".cond", w.double_blocks[b].cond);
    }
    for (size_t b = 0; b < w.single_blocks.size(); ++b)
        add_stream("single" + std::to_string(b), w.single_blocks[b]);
    return slots;
}

}  // namespace

void save_trajectory(const std::string& path, const Trajectory& traj) {
    std::string s;
    s += "RFTJ";
    put_u32(s, kVersion);
    put_u32(s, traj.solver_tag == SolverMethod::euler ? 0u : 1u);
    put_u32(s, static_cast<std::uint32_t>(traj.steps()));
    for (double t : traj.grid) put_f64(s, t);
    const Tensor& z0 = traj.latents.front();
    put_u32(s, static_cast<std::uint32_t>(z0.rank()));
    for (Index i = 0; i < z0.rank(); ++i) put_u64(s, static_cast<std::uint64_t>(z0.dim(i)));
    for (const Tensor& z : traj.latents)
        for (Index i = 0; i < z.numel(); ++i) put_f64(s, z[i]);
    spill(path, s);
}

Trajectory load_trajectory(const std::string& path) {
    std::string bytes = slurp(path);
    Reader r{"trajectory '" + path + "'", bytes};
    r.expect_magic("RFTJ");
    Trajectory traj;
    traj.solver_tag = r.u32("solver") == 0 ? SolverMethod::euler : SolverMethod::midpoint_reuse;
    std::uint32_t n = r.u32("steps");
    traj.grid.resize(n + 1);
    for (auto& t : traj.grid) t = r.f64("grid");
    std::uint32_t rank = r.u32("latent rank");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<Index>(r.u64("dims")));
    Index numel = numel_of(shape);
    traj.latents.reserve(n + 1);
    for (std::uint32_t s = 0; s <= n; ++s) {
        Tensor z(shape);
        for (Index i = 0; i < numel; ++i) z[i] = r.f64("latent");
        if (!z.all_finite())
            throw ParseError("trajectory '" + path + "': non-finite latent in step " +
                             std::to_string(s));
        traj.latents.push_back(std::move(z));
    }
    return traj;
}

void save_kv_cache(const std::string& path, const KVCache& cache) {
    std::string s;
    s += "RFKV";
    put_u32(s, kVersion);
    put_u32(s, static_cast<std::uint32_t>(cache.steps));
    put_u32(s, static_cast<std::uint32_t>(cache.layers.size()));
    for (int layer : cache.layers) put_i32(s, layer);
    put_u64(s, cache.token_gate.size());
    for (std::uint8_t g : cache.token_gate) s.push_back(static_cast<char>(g));
    put_u32(s, static_cast<std::uint32_t>(cache.entry_count()));
    for (const auto& [key, entry] : cache.entries()) {
        put_i32(s, key.first);
        put_i32(s, key.second);
        put_tensor(s, entry.k);
        put_tensor(s, entry.v);
    }
    spill(path, s);
}

KVCache load_kv_cache(const std::string& path) {
    std::string bytes = slurp(path);
    Reader r{"kv cache '" + path + "'", bytes};
    r.expect_magic("RFKV");
    KVCache cache;
    cache.steps = static_cast<int>(r.u32("steps"));
    std::uint32_t nl = r.u32("layer count");
    cache.layers.resize(nl);
    for (auto& l : cache.layers) l = r.i32("layer");
    std::uint64_t gate_len = r.u64("gate length");
    r.need(gate_len, "token gate");
    cache.token_gate.resize(gate_len);
    for (std::uint64_t i = 0; i < gate_len; ++i)
        cache.token_gate[i] = static_cast<std::uint8_t>(bytes[r.pos + i]);
    r.pos += gate_len;
    std::uint32_t count = r.u32("entry count");
    for (std::uint32_t i = 0; i < count; ++i) {
        int layer = r.i32("entry layer");
        int step = r.i32("entry step");
        KVEntry entry;
        entry.k = r.tensor("K");
        entry.v = r.tensor("V");
        cache.put(layer, step, std::move(entry));
    }
    return cache;
}

void save_weights(const std::string& path, const ModelWeights& weights) {
    std::string s;
    s += "RFWT";
    put_u32(s, kVersion);
    const ModelConfig& c = weights.config;
    for (Index v : {c.d_model, c.n_heads, c.patch, c.n_double, c.n_single, c.latent_hw,
                    c.latent_channels, c.cond_channels})
        put_u32(s, static_cast<std::uint32_t>(v));
    auto slots = weight_slots(const_cast<ModelWeights&>(weights));
    put_u32(s, static_cast<std::uint32_t>(slots.size()));
    for (const auto& [name, tensor] : slots) {
        put_str(s, name);
        put_tensor(s, *tensor);
    }
    spill(path, s);
}

ModelWeights load_weights(const std::string& path) {
    std::string bytes = slurp(path);
    Reader r{"weights '" + path + "'", bytes};
    r.expect_magic("RFWT");
    ModelWeights w;
    w.config.d_model = static_cast<Index>(r.u32("d_model"));
    w.config.n_heads = static_cast<Index>(r.u32("n_heads"));
    w.config.patch = static_cast<Index>(r.u32("patch"));
    w.config.n_double = static_cast<Index>(r.u32("n_double"));
    w.config.n_single = static_cast<Index>(r.u32("n_single"));
    w.config.latent_hw = static_cast<Index>(r.u32("latent_hw"));
    w.config.latent_channels = static_cast<Index>(r.u32("latent_channels"));
    w.config.cond_channels = static_cast<Index>(r.u32("cond_channels"));
    w.config.validate();
    w.double_blocks.resize(static_cast<size_t>(w.config.n_double));
    w.single_blocks.resize(static_cast<size_t>(w.config.n_single));
    auto slots = weight_slots(w);
    std::uint32_t count = r.u32("array count");
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str("array name");
        Tensor t = r.tensor(name.c_str());
        auto it = slots.find(name);
        if (it == slots.end())
            throw ParseError("weights '" + path + "': unknown array '" + name + "'");
        *it->second = std::move(t);
        slots.erase(it);
    }
    if (!slots.empty())
        throw ParseError("weights '" + path + "': missing array '" + slots.begin()->first + "'");
    return w;
}

}  // namespace rft
