#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sween::base64 {

std::string encode(const std::vector<std::uint8_t>& bytes);

// nullopt on malformed input.
std::optional<std::vector<std::uint8_t>> decode(std::string_view text);

std::string encode_doubles_le(const std::vector<double>& values);
std::optional<std::vector<double>> decode_doubles_le(std::string_view text);

}  // namespace sween::base64
