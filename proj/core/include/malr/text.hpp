#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace malr::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool contains_icase(std::string_view haystack, std::string_view needle);
std::vector<std::string> split_lines(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
// Lowercase ASCII words (runs of alphanumerics and '_').
std::vector<std::string> words(std::string_view s);
// "Subject qualification" -> "subject_qualification"
std::string slug(std::string_view label);
std::size_t whitespace_token_count(std::string_view s);

}  // namespace malr::text
