#pragma once

#include <string>
#include <vector>

namespace formlab::csv {

/// Quotes a field when it contains a comma, quote or line break.
std::string escape(const std::string& field);

std::string join(const std::vector<std::string>& fields);

/// RFC 4180 style parse; quoted fields may contain commas, doubled quotes and
/// newlines. A trailing newline does not produce an empty record.
std::vector<std::vector<std::string>> parse(const std::string& text);

}  // namespace formlab::csv
