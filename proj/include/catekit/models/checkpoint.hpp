// Versioned binary model checkpoints.
//
// Layout (little-endian):
//   bytes 0..3   magic "CKPT"
//   u32          format version (currently 1)
//   u32          metadata pair count, then per pair two length-prefixed
//                strings (u32 length + bytes): key, value
//   u32          tensor count, then per tensor a length-prefixed name,
//                u32 rank, u64 dims, and raw IEEE-754 doubles
// Metadata carries everything needed to rebuild the architecture, so a
// load/save round trip is byte-identical.
#pragma once

#include "catekit/csv.hpp"
#include "catekit/models/train.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

namespace catekit {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace detail {
inline void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::uint32_t read_u32(std::istream& is, const std::string& path) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw std::runtime_error("truncated checkpoint: " + path);
    }
    return v;
}
inline std::uint64_t read_u64(std::istream& is, const std::string& path) {
    std::uint64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw std::runtime_error("truncated checkpoint: " + path);
    }
    return v;
}
inline std::string read_str(std::istream& is, const std::string& path) {
    const std::uint32_t len = read_u32(is, path);
    std::string s(len, '\0');
    if (!is.read(s.data(), len)) throw std::runtime_error("truncated checkpoint: " + path);
    return s;
}
}  // namespace detail

constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_estimator(const std::string& path, Estimator& est, const TrainConfig& tc) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    os.write("CKPT", 4);
    detail::write_u32(os, kCheckpointVersion);

    const ModelConfig& mc = est.model_config;
    const std::map<std::string, std::string> meta{
        {"kind", to_string(est.kind)},
        {"outcome", to_string(est.outcome)},
        {"input_dim", std::to_string(est.input_dim)},
        {"tlearner_depth", std::to_string(mc.tlearner_depth)},
        {"tlearner_width", std::to_string(mc.tlearner_width)},
        {"trunk_depth", std::to_string(mc.trunk_depth)},
        {"trunk_width", std::to_string(mc.trunk_width)},
        {"head_depth", std::to_string(mc.head_depth)},
        {"head_width", std::to_string(mc.head_width)},
        {"mmd_weight", format_double(mc.mmd_weight)},
        {"cevae_hidden_depth", std::to_string(mc.cevae_hidden_depth)},
        {"cevae_hidden_width", std::to_string(mc.cevae_hidden_width)},
        {"latent_dim", std::to_string(mc.latent_dim)},
        {"negative_sampling", mc.negative_sampling ? "1" : "0"},
        {"dropout_hidden", format_double(tc.dropout_hidden)},
        {"dropout_pre_output", format_double(tc.dropout_pre_output)},
    };
    detail::write_u32(os, static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
        detail::write_str(os, k);
        detail::write_str(os, v);
    }

    const auto named = est.named_parameters();
    detail::write_u32(os, static_cast<std::uint32_t>(named.size()));
    for (const auto& [name, tensor] : named) {
        detail::write_str(os, name);
        detail::write_u32(os, static_cast<std::uint32_t>(tensor->rank()));
        for (std::size_t d : tensor->shape()) detail::write_u64(os, d);
        os.write(reinterpret_cast<const char*>(tensor->data()),
                 static_cast<std::streamsize>(tensor->size() * sizeof(double)));
    }
}

inline Estimator load_estimator(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "CKPT", 4) != 0) {
        throw std::runtime_error("not a checkpoint file: " + path);
    }
    const std::uint32_t version = detail::read_u32(is, path);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    std::map<std::string, std::string> meta;
    const std::uint32_t n_meta = detail::read_u32(is, path);
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string k = detail::read_str(is, path);
        meta[k] = detail::read_str(is, path);
    }
    auto need = [&meta, &path](const std::string& k) -> const std::string& {
        auto it = meta.find(k);
        if (it == meta.end()) throw std::runtime_error("checkpoint missing key '" + k + "': " + path);
        return it->second;
    };

    ModelConfig mc;
    mc.tlearner_depth = std::stoul(need("tlearner_depth"));
    mc.tlearner_width = std::stoul(need("tlearner_width"));
    mc.trunk_depth = std::stoul(need("trunk_depth"));
    mc.trunk_width = std::stoul(need("trunk_width"));
    mc.head_depth = std::stoul(need("head_depth"));
    mc.head_width = std::stoul(need("head_width"));
    mc.mmd_weight = std::stod(need("mmd_weight"));
    mc.cevae_hidden_depth = std::stoul(need("cevae_hidden_depth"));
    mc.cevae_hidden_width = std::stoul(need("cevae_hidden_width"));
    mc.latent_dim = std::stoul(need("latent_dim"));
    mc.negative_sampling = need("negative_sampling") == "1";
    TrainConfig tc;
    tc.dropout_hidden = std::stod(need("dropout_hidden"));
    tc.dropout_pre_output = std::stod(need("dropout_pre_output"));

    Rng shape_rng(0);
    Estimator est = build_estimator(parse_estimator_kind(need("kind")), std::stoul(need("input_dim")),
                                    need("outcome") == std::string("binary") ? OutcomeKind::binary
                                                                             : OutcomeKind::continuous,
                                    mc, tc, shape_rng);

    auto named = est.named_parameters();
    std::map<std::string, Tensor*> by_name;
    for (auto& [name, tensor] : named) by_name[name] = tensor;

    const std::uint32_t n_tensors = detail::read_u32(is, path);
    if (n_tensors != named.size()) {
        throw std::runtime_error("checkpoint tensor count " + std::to_string(n_tensors) +
                                 " does not match architecture (" + std::to_string(named.size()) +
                                 "): " + path);
    }
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        const std::string name = detail::read_str(is, path);
        const std::uint32_t rank = detail::read_u32(is, path);
        Shape shape;
        for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(detail::read_u64(is, path));
        auto it = by_name.find(name);
        if (it == by_name.end()) throw std::runtime_error("unknown tensor '" + name + "' in " + path);
        Tensor& target = *it->second;
        if (target.shape() != shape) {
            throw std::runtime_error("shape mismatch for tensor '" + name + "' in " + path);
        }
        if (!is.read(reinterpret_cast<char*>(target.data()),
                     static_cast<std::streamsize>(target.size() * sizeof(double)))) {
            throw std::runtime_error("truncated checkpoint tensor '" + name + "': " + path);
        }
    }
    return est;
}

}  // namespace catekit
