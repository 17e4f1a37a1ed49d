#include "updet/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace updet {

namespace {

constexpr char kMagic[] = "updet checkpoint v1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;
constexpr uint32_t kVersion = 1;

uint64_t fnv1a(const std::string& bytes) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));  // little-endian hosts only
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw CheckpointError("checkpoint truncated");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw CheckpointError("cannot write " + tmp);
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!f) throw CheckpointError("short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw CheckpointError("cannot rename " + tmp + " to " + path);
}

}  // namespace

Checkpoint make_checkpoint(const Model& model, const Mixer* mixer, int n_ally, int n_enemy,
                           long long env_step, long long train_step, uint64_t seed_state) {
    Checkpoint ck;
    ck.model_cfg = model.config();
    if (mixer) ck.mixer_cfg = mixer->config();
    ck.n_ally = n_ally;
    ck.n_enemy = n_enemy;
    ck.env_step = env_step;
    ck.train_step = train_step;
    ck.seed_state = seed_state;
    auto push = [&ck](const std::string& prefix, const ParamStore& store) {
        for (const auto& [name, t] : store.entries()) {
            CheckpointEntry e;
            e.name = prefix + name;
            e.shape = t.shape();
            e.values.reserve(t.numel());
            for (double v : t.values()) e.values.push_back(static_cast<float>(v));
            ck.entries.push_back(std::move(e));
        }
    };
    push("model.", model.params());
    if (mixer) push("mixer.", mixer->params());
    return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::string out;
    out.append(kMagic, kMagicLen);
    put<uint32_t>(out, kVersion);
    put<uint8_t>(out, static_cast<uint8_t>(ck.model_cfg.head_mode));
    put<uint8_t>(out, static_cast<uint8_t>(ck.model_cfg.block_mode));
    put<uint8_t>(out, static_cast<uint8_t>(ck.model_cfg.temporal_mode));
    put<int32_t>(out, ck.model_cfg.d_emb);
    put<int32_t>(out, ck.model_cfg.n_heads);
    put<int32_t>(out, ck.model_cfg.n_layers);
    put<int32_t>(out, ck.model_cfg.d_channel);
    put<int32_t>(out, ck.model_cfg.rnn_hidden);
    put<uint8_t>(out, static_cast<uint8_t>(ck.mixer_cfg.kind));
    put<int32_t>(out, ck.mixer_cfg.mixing_dim);
    put<int32_t>(out, ck.mixer_cfg.hypernet_layers);
    put<int32_t>(out, ck.mixer_cfg.hypernet_dim);
    put<int32_t>(out, ck.mixer_cfg.n_agents);
    put<int32_t>(out, ck.mixer_cfg.state_dim);
    put<int32_t>(out, ck.n_ally);
    put<int32_t>(out, ck.n_enemy);
    put<int64_t>(out, ck.env_step);
    put<int64_t>(out, ck.train_step);
    put<uint64_t>(out, ck.seed_state);
    put<uint32_t>(out, static_cast<uint32_t>(ck.entries.size()));
    for (const CheckpointEntry& e : ck.entries) {
        put<uint16_t>(out, static_cast<uint16_t>(e.name.size()));
        out.append(e.name);
        put<uint8_t>(out, static_cast<uint8_t>(e.shape.size()));
        for (int d : e.shape) put<int32_t>(out, d);
        for (float v : e.values) put<float>(out, v);
    }
    put<uint64_t>(out, fnv1a(out));
    atomic_write(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open " + path);
    std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (in.size() < kMagicLen + 12 || std::memcmp(in.data(), kMagic, kMagicLen) != 0)
        throw CheckpointError(path + " is not a checkpoint (bad magic)");
    const std::string body = in.substr(0, in.size() - 8);
    std::size_t pos = in.size() - 8;
    if (take<uint64_t>(in, pos) != fnv1a(body))
        throw CheckpointError(path + " failed its checksum (truncated or corrupted)");

    pos = kMagicLen;
    const uint32_t version = take<uint32_t>(body, pos);
    if (version != kVersion)
        throw CheckpointError(path + " has format version " + std::to_string(version) +
                              ", expected " + std::to_string(kVersion));
    Checkpoint ck;
    ck.model_cfg.head_mode = static_cast<HeadMode>(take<uint8_t>(body, pos));
    ck.model_cfg.block_mode = static_cast<BlockMode>(take<uint8_t>(body, pos));
    ck.model_cfg.temporal_mode = static_cast<TemporalMode>(take<uint8_t>(body, pos));
    ck.model_cfg.d_emb = take<int32_t>(body, pos);
    ck.model_cfg.n_heads = take<int32_t>(body, pos);
    ck.model_cfg.n_layers = take<int32_t>(body, pos);
    ck.model_cfg.d_channel = take<int32_t>(body, pos);
    ck.model_cfg.rnn_hidden = take<int32_t>(body, pos);
    ck.mixer_cfg.kind = static_cast<MixerKind>(take<uint8_t>(body, pos));
    ck.mixer_cfg.mixing_dim = take<int32_t>(body, pos);
    ck.mixer_cfg.hypernet_layers = take<int32_t>(body, pos);
    ck.mixer_cfg.hypernet_dim = take<int32_t>(body, pos);
    ck.mixer_cfg.n_agents = take<int32_t>(body, pos);
    ck.mixer_cfg.state_dim = take<int32_t>(body, pos);
    ck.n_ally = take<int32_t>(body, pos);
    ck.n_enemy = take<int32_t>(body, pos);
    ck.env_step = take<int64_t>(body, pos);
    ck.train_step = take<int64_t>(body, pos);
    ck.seed_state = take<uint64_t>(body, pos);
    const uint32_t n_entries = take<uint32_t>(body, pos);
    ck.entries.reserve(n_entries);
    for (uint32_t i = 0; i < n_entries; ++i) {
        CheckpointEntry e;
        const uint16_t name_len = take<uint16_t>(body, pos);
        if (pos + name_len > body.size()) throw CheckpointError("checkpoint truncated");
        e.name.assign(body.data() + pos, name_len);
        pos += name_len;
        const uint8_t ndim = take<uint8_t>(body, pos);
        std::size_t numel = 1;
        for (uint8_t d = 0; d < ndim; ++d) {
            e.shape.push_back(take<int32_t>(body, pos));
            numel *= static_cast<std::size_t>(e.shape.back());
        }
        e.values.resize(numel);
        for (std::size_t j = 0; j < numel; ++j) e.values[j] = take<float>(body, pos);
        ck.entries.push_back(std::move(e));
    }
    return ck;
}

namespace {

void strict_load(const Checkpoint& ck, const std::string& prefix, ParamStore& store,
                 const char* what) {
    std::size_t matched = 0;
    for (const auto& [name, t] : store.entries()) {
        const std::string full = prefix + name;
        const CheckpointEntry* found = nullptr;
        for (const CheckpointEntry& e : ck.entries)
            if (e.name == full) {
                found = &e;
                break;
            }
        if (!found)
            throw CheckpointError(std::string("checkpoint lacks parameter ") + full);
        if (found->shape != t.shape())
            throw CheckpointError("parameter " + full + " has shape " +
                                  shape_str(found->shape) + " but the target " + what +
                                  " expects " + shape_str(t.shape()) +
                                  "; this head is tied to its training scenario size");
        Tensor dst = t;
        for (std::size_t i = 0; i < found->values.size(); ++i)
            dst.values()[i] = static_cast<double>(found->values[i]);
        ++matched;
    }
    std::size_t present = 0;
    for (const CheckpointEntry& e : ck.entries)
        if (e.name.rfind(prefix, 0) == 0) ++present;
    if (present != matched)
        throw CheckpointError(std::string("checkpoint carries ") + std::to_string(present) +
                              " " + what + " parameters, target has " + std::to_string(matched));
}

}  // namespace

void load_model_params(const Checkpoint& ck, Model& model) {
    strict_load(ck, "model.", model.params(), "model");
}

bool mixer_layout_matches(const Checkpoint& ck, const Mixer& mixer) {
    std::size_t present = 0, matched = 0;
    for (const auto& [name, t] : mixer.params().entries()) {
        for (const CheckpointEntry& e : ck.entries)
            if (e.name == "mixer." + name && e.shape == t.shape()) {
                ++matched;
                break;
            }
    }
    for (const CheckpointEntry& e : ck.entries)
        if (e.name.rfind("mixer.", 0) == 0) ++present;
    return matched == mixer.params().entries().size() && present == matched;
}

void load_mixer_params(const Checkpoint& ck, Mixer& mixer) {
    strict_load(ck, "mixer.", mixer.params(), "mixer");
}

int load_params_lenient(const Checkpoint& ck, Model& model, Mixer* mixer) {
    int copied = 0;
    auto try_copy = [&](const std::string& prefix, ParamStore& store) {
        for (const auto& [name, t] : store.entries()) {
            for (const CheckpointEntry& e : ck.entries) {
                if (e.name != prefix + name || e.shape != t.shape()) continue;
                Tensor dst = t;
                for (std::size_t i = 0; i < e.values.size(); ++i)
                    dst.values()[i] = static_cast<double>(e.values[i]);
                ++copied;
                break;
            }
        }
    };
    try_copy("model.", model.params());
    if (mixer) try_copy("mixer.", mixer->params());
    return copied;
}

}  // namespace updet
