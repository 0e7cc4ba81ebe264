#include "dcmdeid/tag.hpp"

#include <charconv>

#include <fmt/format.h>

namespace dcmdeid {

std::string Tag::str() const { return fmt::format("({:04X},{:04X})", group, element); }

namespace {

std::optional<std::uint16_t> parse_hex16(std::string_view s) {
  if (s.size() != 4) return std::nullopt;
  std::uint16_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

std::optional<Tag> Tag::parse(std::string_view text) {
  if (text.size() >= 2 && text.front() == '(' && text.back() == ')') {
    text = text.substr(1, text.size() - 2);
  }
  std::string_view g, e;
  if (auto comma = text.find(','); comma != std::string_view::npos) {
    g = text.substr(0, comma);
    e = text.substr(comma + 1);
  } else if (text.size() == 8) {
    g = text.substr(0, 4);
    e = text.substr(4);
  } else {
    return std::nullopt;
  }
  auto gv = parse_hex16(g);
  auto ev = parse_hex16(e);
  if (!gv || !ev) return std::nullopt;
  return Tag{*gv, *ev};
}

}  // namespace dcmdeid
