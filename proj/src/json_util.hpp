#pragma once

// Internal helpers for strict JSON handling: every object is checked for
// unknown keys so config/file typos fail loudly instead of being ignored.

#include <set>
#include <string>

#include <json.hpp>

#include "gridflex/errors.hpp"

namespace gridflex::detail {

using ordered_json = nlohmann::ordered_json;

inline void require_keys(const ordered_json& obj, const std::set<std::string>& known,
                         const std::string& where) {
    if (!obj.is_object()) throw InputError(where + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!known.count(it.key()))
            throw InputError(where + ": unknown key \"" + it.key() + "\"");
    }
}

inline const ordered_json& require(const ordered_json& obj, const std::string& key,
                                   const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw InputError(where + ": missing key \"" + key + "\"");
    return *it;
}

inline double require_number(const ordered_json& obj, const std::string& key,
                             const std::string& where) {
    const ordered_json& v = require(obj, key, where);
    if (!v.is_number()) throw InputError(where + ": \"" + key + "\" must be a number");
    return v.get<double>();
}

inline std::string require_string(const ordered_json& obj, const std::string& key,
                                  const std::string& where) {
    const ordered_json& v = require(obj, key, where);
    if (!v.is_string()) throw InputError(where + ": \"" + key + "\" must be a string");
    return v.get<std::string>();
}

inline ordered_json parse_json(const std::string& text, const std::string& origin) {
    try {
        return ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(origin + ": " + e.what());
    }
}

} // namespace gridflex::detail
