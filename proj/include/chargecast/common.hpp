#pragma once

#include <chrono>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace chargecast {

/// Bad input, configuration or usage. The CLI maps it to exit code 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure (non-convergence, indefinite matrix, ...). CLI exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Date = std::chrono::sys_days;
using Timestamp = std::chrono::sys_seconds;

std::string format_date(Date d);
std::string format_timestamp(Timestamp t);

/// Parses "YYYY-MM-DD". Returns nullopt on malformed or invalid dates.
std::optional<Date> parse_iso_date(std::string_view s);

Date day_of(Timestamp t);

/// Monday = 0 ... Sunday = 6.
int weekday_index(Date d);

std::string_view weekday_name(int index);

std::string trim(std::string_view s);

}  // namespace chargecast
