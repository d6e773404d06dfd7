#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ethident/amount.hpp"

namespace ethident {

// One raw row of block data: a plain transaction or a contract call.
struct InteractionRecord {
  std::uint64_t block_number = 0;
  std::int64_t timestamp = 0;  // seconds since epoch, UTC
  std::string from;
  std::string to;
  bool from_is_contract = false;
  bool to_is_contract = false;
  std::optional<std::string> calling_function;
  Amount value = 0;

  bool is_contract_call() const { return to_is_contract && calling_function.has_value(); }
  bool is_eoa_transfer() const { return !from_is_contract && !to_is_contract; }

  bool operator==(const InteractionRecord&) const = default;
};

enum class RecordFormat { Csv, Jsonl };

inline constexpr const char* kRecordColumns[] = {
    "blockNumber", "timestamp", "from", "to", "fromIsContract", "toIsContract", "callingFunction", "value"};

// Reads and validates every row. Throws Error naming the 1-based line of the
// first malformed row.
std::vector<InteractionRecord> ingest_records(std::istream& source, RecordFormat format);
std::vector<InteractionRecord> ingest_records_file(const std::string& path);

void write_records_csv(std::ostream& out, const std::vector<InteractionRecord>& records);

// Splits one CSV line honouring double-quoted fields.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace ethident
