// SPDX-License-Identifier: Apache-2.0
// Internal helper shared by the JSON config readers.
#ifndef STDET_SRC_JSON_KEYS_HPP_
#define STDET_SRC_JSON_KEYS_HPP_

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

namespace stdet::detail {

/// Throws Error unless `j` is an object whose keys all appear in `allowed`.
template <class Error>
void reject_unknown_keys(const nlohmann::json &j,
                         std::initializer_list<std::string_view> allowed,
                         std::string_view what) {
  if (!j.is_object())
    throw Error(std::string(what) + " must be a JSON object");
  for (const auto &[key, value] : j.items()) {
    bool ok = false;
    for (auto a : allowed)
      ok = ok || key == a;
    if (!ok)
      throw Error("unknown " + std::string(what) + " key '" + key + "'");
  }
}

}  // namespace stdet::detail

#endif  // STDET_SRC_JSON_KEYS_HPP_
