// SPDX-License-Identifier: Apache-2.0
#include "mmfuse/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "json_io.hpp"

namespace mmfuse {

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return buf.str();
}

void write_text_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("failed writing '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path.string() + "'");
  }
}

namespace detail {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

std::vector<double> vector_from_json(const json& j, const std::string& what, std::size_t line) {
  if (!j.is_array()) throw ParseError(what + ": expected an array of numbers", line);
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw ParseError(what + ": expected a number", line);
    out.push_back(v.get<double>());
  }
  return out;
}

Matrix matrix_from_json(const json& j, const std::string& what, std::size_t line) {
  if (!j.is_array()) throw ParseError(what + ": expected an array of rows", line);
  if (j.empty()) return Matrix();
  std::size_t cols = 0;
  std::vector<double> data;
  for (std::size_t i = 0; i < j.size(); ++i) {
    auto row = vector_from_json(j[i], what, line);
    if (i == 0) cols = row.size();
    if (row.size() != cols) throw ParseError(what + ": ragged rows", line);
    data.insert(data.end(), row.begin(), row.end());
  }
  try {
    return Matrix(j.size(), cols, std::move(data));
  } catch (const Error& e) {
    throw ParseError(what + ": " + e.what(), line);
  }
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                std::initializer_list<const char*> required, const std::string& what,
                std::size_t line) {
  if (!obj.is_object()) throw ParseError(what + ": expected a JSON object", line);
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ParseError(what + ": unknown field '" + key + "'", line);
  }
  for (const char* r : required) {
    if (!obj.contains(r)) throw ParseError(what + ": missing field '" + std::string(r) + "'", line);
  }
}

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t)>& fn) {
  std::istringstream in(read_text_file(path));
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON in '") + path.string() + "': " + e.what(), line);
    }
    try {
      fn(j, line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad record in '") + path.string() + "': " + e.what(), line);
    }
  }
}

json parse_json_file(const std::filesystem::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

std::string to_jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

}  // namespace detail
}  // namespace mmfuse
