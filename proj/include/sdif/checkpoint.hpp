#pragma once

#include "sdif/model.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdif {

inline constexpr const char* kCheckpointMagic = "SDIF-CKPT-1";

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Plain copy of every parameter's values, in parameter-list order.
using ParameterSnapshot = std::vector<std::vector<double>>;

inline ParameterSnapshot snapshot(const nn::ParameterList& params) {
    ParameterSnapshot s;
    s.reserve(params.size());
    for (const auto& p : params) s.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
    return s;
}

inline void restore(const nn::ParameterList& params, const ParameterSnapshot& s) {
    if (s.size() != params.size()) throw std::invalid_argument("restore: snapshot size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].tensor;
        if (s[i].size() != t.numel()) throw std::invalid_argument("restore: size mismatch for " + params[i].name);
        std::copy(s[i].begin(), s[i].end(), t.mutable_values().begin());
    }
}

namespace detail {

inline void write_f64_le(std::ostream& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64_le(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw CheckpointError("checkpoint: truncated parameter data");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace detail

/// Magic line, one JSON header line (config, parameter names and shapes,
/// free-form metadata), then every parameter as little-endian float64.
inline void save_checkpoint(const model::SDIFModel& m, const std::filesystem::path& path,
                            const nlohmann::json& metadata = nlohmann::json::object()) {
    const auto params = m.parameters();
    nlohmann::json header;
    header["config"] = m.config();
    header["metadata"] = metadata;
    header["parameters"] = nlohmann::json::array();
    for (const auto& p : params) header["parameters"].push_back({{"name", p.name}, {"shape", p.tensor.shape()}});

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot write " + path.string());
    out << kCheckpointMagic << '\n' << header.dump() << '\n';
    for (const auto& p : params)
        for (double v : p.tensor.values()) detail::write_f64_le(out, v);
    if (!out) throw CheckpointError("checkpoint: write failed for " + path.string());
}

struct LoadedCheckpoint {
    model::SDIFModel model;
    nlohmann::json metadata;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
    std::string magic, header_line;
    std::getline(in, magic);
    if (magic != kCheckpointMagic) throw CheckpointError("checkpoint: " + path.string() + " is not an SDIF checkpoint");
    std::getline(in, header_line);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("checkpoint: bad header in " + path.string() + ": " + e.what());
    }
    LoadedCheckpoint out{model::SDIFModel(header.at("config").get<model::SDIFConfig>(), 0),
                         header.value("metadata", nlohmann::json::object())};
    const auto params = out.model.parameters();
    const auto& listed = header.at("parameters");
    if (listed.size() != params.size()) throw CheckpointError("checkpoint: parameter count does not match its config");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto name = listed[i].at("name").get<std::string>();
        const auto shape = listed[i].at("shape").get<Shape>();
        if (name != params[i].name || shape != params[i].tensor.shape()) {
            throw CheckpointError("checkpoint: parameter " + std::to_string(i) + " is " + name + shape_str(shape) +
                                  ", model expects " + params[i].name + shape_str(params[i].tensor.shape()));
        }
        Tensor t = params[i].tensor;
        for (auto& v : t.mutable_values()) v = detail::read_f64_le(in);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("checkpoint: trailing bytes in " + path.string());
    return out;
}

}  // namespace sdif
