#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace windcnn {

/// Shortest decimal text that parses back to the same double; "nan" for NaN.
std::string format_number(double value);

/// Parses a number written by format_number (accepts "nan"). Throws DataError.
double parse_number(std::string_view text);

/// Quotes a field when it contains a comma, quote or newline.
std::string csv_field(std::string_view text);

/// Splits one CSV record, honouring double-quoted fields with "" escapes.
/// Throws DataError on an unterminated quote.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace windcnn
