#pragma once

#include <map>
#include <string>

namespace jscq {

// Flat `key=value` text: one pair per line, '#' starts a comment, whitespace
// around keys and values is trimmed.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::string format_key_values(const std::map<std::string, std::string>& kv);

double kv_double(const std::map<std::string, std::string>& kv, const std::string& key, double fallback);
std::size_t kv_size(const std::map<std::string, std::string>& kv, const std::string& key, std::size_t fallback);

}  // namespace jscq
