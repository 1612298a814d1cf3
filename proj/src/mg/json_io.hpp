#pragma once

// JSON encodings of configuration and network specs. Readers reject unknown
// keys so a typo in a config file fails loudly.

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mg/drl.hpp"
#include "mg/microgrid.hpp"
#include "mg/nn.hpp"

namespace mg::json_io {

using Json = nlohmann::ordered_json;

// Throws ConfigError naming the first key of `j` not in `allowed`.
void check_keys(const Json& j, std::initializer_list<std::string_view> allowed, const std::string& where);

Json to_json(const MicrogridConfig& c);
// Missing keys keep the values already in `base`.
MicrogridConfig microgrid_from_json(const Json& j, MicrogridConfig base = {});

Json to_json(const drl::TrainConfig& c);
drl::TrainConfig train_from_json(const Json& j, drl::TrainConfig base = {});

Json to_json(const nn::NetSpec& spec);
nn::NetSpec spec_from_json(const Json& j);

Json to_json(const Range& r);
Range range_from_json(const Json& j, const std::string& where);

// Serialized text with fixed formatting, used for hashing and reports.
std::string canonical(const Json& j);
// 64-bit FNV-1a, lowercase hex.
std::string fnv1a_hex(std::string_view text);

}  // namespace mg::json_io
