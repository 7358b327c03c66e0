// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "freeu/tensor.hpp"
#include "freeu/trajectory.hpp"

namespace freeu {

/// Malformed or inconsistent container bytes.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kContainerVersion = 1;

/// Named float32 tensors plus a free-form JSON metadata block.
///
/// Byte layout:
///   "FREEUCT\n"
///   <decimal header length>"\n"
///   <header JSON: format_version, meta, tensors[{name, shape, offset, length}], payload_bytes>
///   <payload: little-endian float32 data, tensors in name order>
struct Container {
    nlohmann::json meta = nlohmann::json::object();
    std::map<std::string, Tensor> tensors;
};

std::string encode_container(const Container& c);
Container decode_container(std::string_view bytes);

void save_container(const std::filesystem::path& path, const Container& c);
Container load_container(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

/// Trajectory as a container: tensors "step/<i>/x_t", "step/<i>/x0_pred",
/// "step/<i>/stage<l>/<backbone|skip|backbone_mod|skip_mod|fused>"; meta lists step indices.
Container trajectory_container(const TrajectoryRecord& record);
TrajectoryRecord trajectory_from_container(const Container& c);

}  // namespace freeu
