#pragma once

#include <string>
#include <string_view>

namespace bpgrad {

/// Shortest decimal that parses back to exactly `v` ("nan", "inf", "-inf"
/// for non-finite values).
std::string format_double(double v);

/// Strict parse of a whole field; throws InvalidInput naming `what`.
double parse_double(std::string_view s, std::string_view what = "number");
long long parse_int(std::string_view s, std::string_view what = "integer");

/// RFC 4180 quoting when the field holds a comma, quote or newline.
std::string csv_escape(std::string_view field);

}  // namespace bpgrad
