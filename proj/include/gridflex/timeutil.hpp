#pragma once

#include <cstdint>
#include <string>

namespace gridflex {

// Timestamps are naive ISO-8601 ("YYYY-MM-DDTHH:MM:SS", no zone) mapped to
// seconds since the Unix epoch. Measurement grids are handled as epoch
// seconds internally; files carry the ISO form.

std::int64_t parse_iso8601(const std::string& text);
std::string format_iso8601(std::int64_t epoch_seconds);

} // namespace gridflex
