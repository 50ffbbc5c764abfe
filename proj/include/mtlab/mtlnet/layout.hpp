#pragma once

#include <optional>
#include <string>
#include <vector>

namespace mtlab::mtlnet {

// Branching layout of a trunk with `depth()` levels: partitions[d] lists the
// groups of task ids sharing a block at depth d. Deeper partitions may only
// refine shallower ones (tasks that split never re-merge).
struct Layout {
    std::vector<std::vector<std::vector<int>>> partitions;

    std::size_t depth() const { return partitions.size(); }
    std::vector<int> task_ids() const; // sorted union of the first partition
};

// Structural check; returns a violation description or nullopt when valid.
std::optional<std::string> validate_layout(const Layout& layout);

// Text form: [[{0, 1, 2}], [{0, 1}, {2}], ...]. parse accepts arbitrary
// whitespace; format emits the canonical spacing shown above with sets and
// ids sorted.
Layout parse_layout(const std::string& text);
std::string format_layout(const Layout& layout);

// Semantic equality: same partitions regardless of set or id order.
bool same_layout(const Layout& a, const Layout& b);

// Sorted ids inside groups, groups sorted within each depth.
Layout canonical_layout(const Layout& layout);

// Canonical ladder between independent and fully-shared trunks: the first
// `level` depths share one block, the rest split every task apart.
Layout sharing_level_layout(int level, int depth, int n_tasks);

// "0L".."<depth>L" -> sharing_level_layout; also accepts "IND" and "AS".
Layout named_layout(const std::string& name, int depth, int n_tasks);

} // namespace mtlab::mtlnet
