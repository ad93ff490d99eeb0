#pragma once

// Minimal RFC 4180 reader/writer shared by the dataset loader and the
// report table emitter.

#include <string>
#include <string_view>
#include <vector>

namespace eom::csv {

/// Splits a whole document into records. Quoted fields may contain commas,
/// doubled quotes and newlines. A trailing newline does not add a record.
std::vector<std::vector<std::string>> parse(std::string_view text);

/// Quotes a field when it contains a comma, quote or line break.
std::string escape(std::string_view field);

std::string join(const std::vector<std::string>& fields);

std::string read_file(const std::string& path);

}  // namespace eom::csv
