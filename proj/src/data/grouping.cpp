#include "robustsyn/data/grouping.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "robustsyn/common.hpp"

namespace robustsyn {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

int parse_int(std::string_view s, int line) {
  s = trim(s);
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InvalidArgument("grouping line " + std::to_string(line) + ": bad label '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

LabelGrouping LabelGrouping::parse(std::string_view text) {
  std::vector<Group> groups;
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw InvalidArgument("grouping line " + std::to_string(line_no) + ": expected 'name: lo-hi[,lo-hi...]'");
    }
    Group g;
    g.name = std::string(trim(line.substr(0, colon)));
    if (g.name.empty()) throw InvalidArgument("grouping line " + std::to_string(line_no) + ": empty group name");
    std::string_view rest = line.substr(colon + 1);
    while (true) {
      const auto comma = rest.find(',');
      std::string_view item = trim(rest.substr(0, comma));
      if (item.empty()) throw InvalidArgument("grouping line " + std::to_string(line_no) + ": empty range");
      const auto dash = item.find('-', 1);
      Range r;
      if (dash == std::string_view::npos) {
        r.lo = r.hi = parse_int(item, line_no);
      } else {
        r.lo = parse_int(item.substr(0, dash), line_no);
        r.hi = parse_int(item.substr(dash + 1), line_no);
      }
      g.ranges.push_back(r);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    groups.push_back(std::move(g));
    if (end == text.size()) break;
  }
  return from_groups(std::move(groups));
}

LabelGrouping LabelGrouping::from_groups(std::vector<Group> groups) {
  std::vector<std::pair<Range, std::size_t>> all;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    for (const Range& r : groups[i].ranges) {
      if (r.lo > r.hi) {
        throw InvalidArgument("grouping '" + groups[i].name + "': range " + std::to_string(r.lo) + "-" +
                              std::to_string(r.hi) + " is reversed");
      }
      all.push_back({r, i});
    }
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first.lo < b.first.lo; });
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (all[i].first.lo <= all[i - 1].first.hi) {
      throw InvalidArgument("grouping: ranges of '" + groups[all[i - 1].second].name + "' and '" +
                            groups[all[i].second].name + "' overlap");
    }
  }
  LabelGrouping g;
  g.groups_ = std::move(groups);
  return g;
}

LabelGrouping LabelGrouping::restricted_imagenet() {
  return parse(
      "Dog: 151-268\n"
      "Cat: 281-285\n"
      "Frog: 30-32\n"
      "Turtle: 33-37\n"
      "Bird: 80-100\n"
      "Primate: 365-382\n"
      "Fish: 389-397\n"
      "Crab: 118-121\n"
      "Insect: 300-319\n");
}

int LabelGrouping::group_of(int label) const {
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    for (const Range& r : groups_[i].ranges) {
      if (label >= r.lo && label <= r.hi) return static_cast<int>(i);
    }
  }
  throw InvalidArgument("label " + std::to_string(label) + " is not in any group");
}

bool LabelGrouping::contains(int label) const {
  for (const auto& g : groups_)
    for (const Range& r : g.ranges)
      if (label >= r.lo && label <= r.hi) return true;
  return false;
}

std::string LabelGrouping::to_text() const {
  std::ostringstream os;
  for (const auto& g : groups_) {
    os << g.name << ": ";
    for (std::size_t i = 0; i < g.ranges.size(); ++i) {
      if (i) os << ',';
      os << g.ranges[i].lo;
      if (g.ranges[i].hi != g.ranges[i].lo) os << '-' << g.ranges[i].hi;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace robustsyn
