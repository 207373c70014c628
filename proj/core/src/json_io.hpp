// SPDX-License-Identifier: Apache-2.0
// Internal nlohmann::json helpers shared by the serializers.
#pragma once

#include <filesystem>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmfuse/error.hpp"
#include "mmfuse/matrix.hpp"

namespace mmfuse::detail {

using nlohmann::json;

json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const json& j, const std::string& what, std::size_t line = 0);
std::vector<double> vector_from_json(const json& j, const std::string& what, std::size_t line = 0);

/// Rejects keys outside `allowed` and reports missing `required` keys.
void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                std::initializer_list<const char*> required, const std::string& what,
                std::size_t line = 0);

/// Parses each non-blank line of `path` as JSON and hands it to `fn` with
/// its 1-based line number. Syntax errors become ParseError with the line.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t)>& fn);

json parse_json_file(const std::filesystem::path& path);

/// One compact JSON document per line.
std::string to_jsonl(const std::vector<json>& rows);

}  // namespace mmfuse::detail
