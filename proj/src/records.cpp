#include "ethident/records.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "json.hpp"

#include "ethident/error.hpp"

namespace ethident {
namespace {

constexpr std::size_t kColumnCount = std::size(kRecordColumns);

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t start = 0;
  while (start < s.size() && (s[start] == ' ' || s[start] == '\t')) ++start;
  return s.substr(start);
}

template <typename Int>
Int parse_int(const std::string& text, const char* column, std::size_t row) {
  Int value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw Error(ErrorKind::NonNumericValue, std::string(column) + " is not an integer: '" + text + "'", row);
  }
  return value;
}

bool parse_flag(const std::string& text, const char* column, std::size_t row) {
  if (text == "1" || text == "true" || text == "True" || text == "TRUE") return true;
  if (text == "0" || text == "false" || text == "False" || text == "FALSE") return false;
  throw Error(ErrorKind::InvalidField, std::string(column) + " is not a boolean flag: '" + text + "'", row);
}

// Field order follows kRecordColumns.
InteractionRecord make_record(const std::array<std::string, kColumnCount>& f, std::size_t row) {
  InteractionRecord r;
  r.block_number = parse_int<std::uint64_t>(f[0], "blockNumber", row);
  r.timestamp = parse_int<std::int64_t>(f[1], "timestamp", row);
  if (r.timestamp <= 0) throw Error(ErrorKind::InvalidField, "timestamp must be positive", row);
  r.from = f[2];
  r.to = f[3];
  if (r.from.empty()) throw Error(ErrorKind::EmptyAccountId, "from is empty", row);
  if (r.to.empty()) throw Error(ErrorKind::EmptyAccountId, "to is empty", row);
  r.from_is_contract = parse_flag(f[4], "fromIsContract", row);
  r.to_is_contract = parse_flag(f[5], "toIsContract", row);
  if (!f[6].empty()) {
    if (!r.to_is_contract) {
      throw Error(ErrorKind::InvalidField, "callingFunction set on a record whose receiver is not a contract", row);
    }
    r.calling_function = f[6];
  }
  const std::string& value = f[7];
  if (!value.empty() && value.front() == '-') {
    throw Error(ErrorKind::NegativeAmount, "value is negative: '" + value + "'", row);
  }
  auto amount = parse_amount(value);
  if (!amount) throw Error(ErrorKind::NonNumericValue, "value is not a non-negative integer: '" + value + "'", row);
  r.value = *amount;
  return r;
}

std::vector<InteractionRecord> ingest_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (line_no == 0 || trim(line).empty()) return {};

  const auto header = split_csv_line(trim(line));
  std::array<std::size_t, kColumnCount> position{};
  for (std::size_t c = 0; c < kColumnCount; ++c) {
    std::size_t found = header.size();
    for (std::size_t h = 0; h < header.size(); ++h) {
      if (trim(header[h]) == kRecordColumns[c]) found = h;
    }
    if (found == header.size()) {
      throw Error(ErrorKind::MissingColumn, std::string("missing column ") + kRecordColumns[c], line_no);
    }
    position[c] = found;
  }

  std::vector<InteractionRecord> records;
  std::array<std::string, kColumnCount> fields;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    for (std::size_t c = 0; c < kColumnCount; ++c) {
      if (position[c] >= cells.size()) {
        throw Error(ErrorKind::MissingColumn, std::string("row has no ") + kRecordColumns[c] + " cell", line_no);
      }
      fields[c] = trim(cells[position[c]]);
    }
    records.push_back(make_record(fields, line_no));
  }
  return records;
}

std::string json_field(const nlohmann::json& obj, const char* key, std::size_t row) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorKind::MissingColumn, std::string("missing key ") + key, row);
  if (it->is_null()) return "";
  if (it->is_string()) return it->get<std::string>();
  if (it->is_boolean()) return it->get<bool>() ? "1" : "0";
  if (it->is_number_unsigned()) return std::to_string(it->get<std::uint64_t>());
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  throw Error(ErrorKind::NonNumericValue, std::string(key) + " has an unsupported JSON type", row);
}

std::vector<InteractionRecord> ingest_jsonl(std::istream& in) {
  std::vector<InteractionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  std::array<std::string, kColumnCount> fields;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::Format, std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!obj.is_object()) throw Error(ErrorKind::Format, "expected a JSON object", line_no);
    for (std::size_t c = 0; c < kColumnCount; ++c) fields[c] = json_field(obj, kRecordColumns[c], line_no);
    records.push_back(make_record(fields, line_no));
  }
  return records;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back().push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else {
      cells.back().push_back(c);
    }
  }
  return cells;
}

std::vector<InteractionRecord> ingest_records(std::istream& source, RecordFormat format) {
  return format == RecordFormat::Csv ? ingest_csv(source) : ingest_jsonl(source);
}

std::vector<InteractionRecord> ingest_records_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  const bool jsonl = path.size() >= 6 && (path.ends_with(".jsonl") || path.ends_with(".json"));
  return ingest_records(in, jsonl ? RecordFormat::Jsonl : RecordFormat::Csv);
}

void write_records_csv(std::ostream& out, const std::vector<InteractionRecord>& records) {
  for (std::size_t c = 0; c < kColumnCount; ++c) out << (c ? "," : "") << kRecordColumns[c];
  out << '\n';
  for (const auto& r : records) {
    out << r.block_number << ',' << r.timestamp << ',' << csv_escape(r.from) << ',' << csv_escape(r.to) << ','
        << (r.from_is_contract ? 1 : 0) << ',' << (r.to_is_contract ? 1 : 0) << ','
        << csv_escape(r.calling_function.value_or("")) << ',' << format_amount(r.value) << '\n';
  }
}

}  // namespace ethident
