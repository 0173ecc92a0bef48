#pragma once

#include <iosfwd>
#include <string>

#include "gridflex/network.hpp"

namespace gridflex {

// Network files are JSON with a `units` flag choosing between per-unit
// impedances (`r_pu`/`x_pu`) and ohmic ones (`r_ohm`/`x_ohm`, converted via
// the file's bases). A file mixing both conventions is rejected, as are
// unknown keys. `i_max_pu2` is per-unit^2 in either mode.
NetworkModel load_network(const std::string& path);
NetworkModel parse_network(std::istream& in, const std::string& origin);

// Canonical serialization (sorted nodes/lines, per-unit impedances).
std::string network_to_json(const NetworkModel& network);
void save_network(const NetworkModel& network, const std::string& path);

// FNV-1a 64 over the canonical serialization; embedded in report headers so
// reports can be matched to the exact network they were computed on.
std::string network_fingerprint(const NetworkModel& network);

} // namespace gridflex
