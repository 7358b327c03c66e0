// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "freeu/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace freeu {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "FREEUCT\n";

std::uint32_t swap32(std::uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

void append_le(std::string& out, std::span<const float> values) {
    const std::size_t start = out.size();
    out.resize(start + values.size() * 4);
    std::memcpy(out.data() + start, values.data(), values.size() * 4);
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            std::uint32_t w;
            std::memcpy(&w, out.data() + start + i * 4, 4);
            w = swap32(w);
            std::memcpy(out.data() + start + i * 4, &w, 4);
        }
    }
}

void read_le(std::string_view bytes, std::span<float> values) {
    std::memcpy(values.data(), bytes.data(), values.size() * 4);
    if constexpr (std::endian::native == std::endian::big) {
        for (auto& v : values) v = std::bit_cast<float>(swap32(std::bit_cast<std::uint32_t>(v)));
    }
}

std::string step_key(std::size_t i) {
    std::ostringstream os;
    os << "step/" << std::setw(4) << std::setfill('0') << i;
    return os.str();
}

}  // namespace

std::string encode_container(const Container& c) {
    json index = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : c.tensors) {
        const std::uint64_t length = t.numel() * 4;
        index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"length", length}});
        offset += length;
    }
    const json header = {{"format_version", kContainerVersion}, {"meta", c.meta}, {"tensors", index}, {"payload_bytes", offset}};
    const std::string header_text = header.dump();

    std::string out(kMagic);
    out += std::to_string(header_text.size());
    out += '\n';
    out += header_text;
    out.reserve(out.size() + offset);
    for (const auto& [name, t] : c.tensors) append_le(out, t.data());
    return out;
}

Container decode_container(std::string_view bytes) {
    if (bytes.substr(0, kMagic.size()) != kMagic) throw FormatError("container: bad magic");
    bytes.remove_prefix(kMagic.size());
    const auto eol = bytes.find('\n');
    if (eol == std::string_view::npos || eol == 0 || eol > 20) throw FormatError("container: bad header length line");
    std::uint64_t header_len = 0;
    for (char ch : bytes.substr(0, eol)) {
        if (ch < '0' || ch > '9') throw FormatError("container: bad header length line");
        header_len = header_len * 10 + static_cast<std::uint64_t>(ch - '0');
    }
    bytes.remove_prefix(eol + 1);
    if (header_len > bytes.size()) throw FormatError("container: truncated header");

    json header;
    try {
        header = json::parse(bytes.substr(0, header_len));
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("container: header is not JSON: ") + e.what());
    }
    const std::string_view payload = bytes.substr(header_len);
    try {
        if (header.at("format_version").get<int>() != kContainerVersion) {
            throw FormatError("container: unsupported format version " + header.at("format_version").dump());
        }
        const auto declared = header.at("payload_bytes").get<std::uint64_t>();
        if (declared != payload.size()) {
            throw FormatError("container: payload is " + std::to_string(payload.size()) + " bytes, header declares " +
                              std::to_string(declared));
        }
        Container c;
        c.meta = header.at("meta");
        std::uint64_t expected_offset = 0;
        std::string prev_name;
        for (const auto& entry : header.at("tensors")) {
            const auto name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape").get<Shape>();
            const auto offset = entry.at("offset").get<std::uint64_t>();
            const auto length = entry.at("length").get<std::uint64_t>();
            if (!c.tensors.empty() && name <= prev_name) throw FormatError("container: tensor names not ascending");
            if (offset != expected_offset) throw FormatError("container: tensor '" + name + "' overlaps or leaves a gap");
            if (length != shape_numel(shape) * 4) throw FormatError("container: tensor '" + name + "' length mismatches shape");
            if (offset + length > payload.size()) throw FormatError("container: tensor '" + name + "' runs past payload");
            Tensor t(shape);
            read_le(payload.substr(offset, length), t.data());
            c.tensors.emplace(name, std::move(t));
            prev_name = name;
            expected_offset = offset + length;
        }
        if (expected_offset != payload.size()) throw FormatError("container: payload has trailing bytes");
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("container: malformed header: ") + e.what());
    } catch (const ShapeError& e) {
        throw FormatError(std::string("container: ") + e.what());
    }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void save_container(const std::filesystem::path& path, const Container& c) { write_file_atomic(path, encode_container(c)); }

Container load_container(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw std::runtime_error("file not found: " + path.string());
    return decode_container(read_file(path));
}

Container trajectory_container(const TrajectoryRecord& record) {
    Container c;
    json steps = json::array();
    for (std::size_t i = 0; i < record.steps.size(); ++i) {
        const TrajectoryStep& s = record.steps[i];
        const std::string key = step_key(i);
        steps.push_back(s.t);
        c.tensors.emplace(key + "/x_t", s.x_t);
        if (!s.x0_pred.empty()) c.tensors.emplace(key + "/x0_pred", s.x0_pred);
        for (const StageSnapshot& st : s.stages) {
            const std::string base = key + "/stage" + std::to_string(st.stage) + "/";
            c.tensors.emplace(base + "backbone", st.backbone);
            c.tensors.emplace(base + "skip", st.skip);
            c.tensors.emplace(base + "backbone_mod", st.backbone_mod);
            c.tensors.emplace(base + "skip_mod", st.skip_mod);
            c.tensors.emplace(base + "fused", st.fused);
        }
    }
    c.meta = {{"kind", "trajectory"}, {"steps", steps}};
    return c;
}

TrajectoryRecord trajectory_from_container(const Container& c) {
    if (c.meta.value("kind", "") != "trajectory") throw FormatError("container: not a trajectory record");
    TrajectoryRecord record;
    const auto& steps = c.meta.at("steps");
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const std::string key = step_key(i);
        TrajectoryStep s;
        s.t = steps[i].get<int>();
        s.x_t = c.tensors.at(key + "/x_t");
        if (auto it = c.tensors.find(key + "/x0_pred"); it != c.tensors.end()) s.x0_pred = it->second;
        for (auto it = c.tensors.lower_bound(key + "/stage"); it != c.tensors.end() && it->first.starts_with(key + "/stage"); ++it) {
            const std::string rest = it->first.substr(key.size() + 6);
            const auto slash = rest.find('/');
            if (rest.substr(slash + 1) != "backbone") continue;
            const std::string base = key + "/stage" + rest.substr(0, slash) + "/";
            s.stages.push_back({std::stoi(rest.substr(0, slash)), c.tensors.at(base + "backbone"), c.tensors.at(base + "skip"),
                                c.tensors.at(base + "backbone_mod"), c.tensors.at(base + "skip_mod"),
                                c.tensors.at(base + "fused")});
        }
        record.steps.push_back(std::move(s));
    }
    return record;
}

}  // namespace freeu
