/********************************************************************************
 * Copyright 2026 The GPD Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 ********************************************************************************/


#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "gpd/errors.hpp"

namespace gpd::json_util {

/// Rejects keys of @p obj that are not in @p allowed. @p where names the section.
inline void require_known_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                               std::string_view where)
{
    if (!obj.is_object()) {
        throw ConfigError(std::string(where) + ": expected a JSON object");
    }
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (auto a : allowed) {
            known = known || a == key;
        }
        if (!known) {
            throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
        }
    }
}

/// Assigns obj[key] to @p out when present, converting type errors to ConfigError.
template <typename T>
void read_field(const nlohmann::json& obj, std::string_view key, T& out, std::string_view where)
{
    auto it = obj.find(std::string(key));
    if (it == obj.end()) {
        return;
    }
    try {
        out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string(where) + "." + std::string(key) + ": wrong type");
    }
}

}  // namespace gpd::json_util
