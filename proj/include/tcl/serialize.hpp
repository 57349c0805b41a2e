#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "tcl/data.hpp"
#include "tcl/losses.hpp"
#include "tcl/model.hpp"

namespace tcl {

using json = nlohmann::json;

// Throws ConfigError naming the first key of `object` not in `allowed`.
void reject_unknown_keys(const json& object, std::initializer_list<const char*> allowed,
                         const std::string& where);

json to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const json& j);

json to_json(const Matrix& m);
Matrix matrix_from_json(const json& j);

json to_json(const NetworkParams& params);
NetworkParams network_params_from_json(const json& j);

json to_json(const CenterBank& centers);
CenterBank center_bank_from_json(const json& j);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

}  // namespace tcl
