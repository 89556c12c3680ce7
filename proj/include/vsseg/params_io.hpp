#pragma once

#include <string>

#include "vsseg/params.hpp"

namespace vsseg {

/// Named-tensor container file. Entries are written in name order with
/// 32-bit float payloads, so load/save round-trips are byte-identical.
void save_params(const ParamStore& ps, const std::string& path);
ParamStore load_params(const std::string& path);

}  // namespace vsseg
