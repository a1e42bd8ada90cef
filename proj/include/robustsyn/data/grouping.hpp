#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace robustsyn {

// Maps fine source labels onto super-classes through inclusive label ranges.
// Text form, one group per line:
//
//   Dog: 151-268
//   Cat: 281-285
//   Mixed: 1-3,7,10-12
//
// Blank lines and text after '#' are ignored. Group index = line order.
class LabelGrouping {
 public:
  struct Range {
    int lo, hi;  // inclusive
  };
  struct Group {
    std::string name;
    std::vector<Range> ranges;
  };

  // Throws InvalidArgument on malformed text or overlapping ranges.
  static LabelGrouping parse(std::string_view text);
  static LabelGrouping from_groups(std::vector<Group> groups);
  // The nine super-classes of the restricted ImageNet setting.
  static LabelGrouping restricted_imagenet();

  const std::vector<Group>& groups() const { return groups_; }
  std::size_t size() const { return groups_.size(); }
  // Group index for a source label; throws InvalidArgument if ungrouped.
  int group_of(int label) const;
  bool contains(int label) const;
  std::string to_text() const;

 private:
  std::vector<Group> groups_;
};

}  // namespace robustsyn
