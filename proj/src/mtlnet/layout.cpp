#include "mtlab/mtlnet/layout.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace mtlab::mtlnet {

std::vector<int> Layout::task_ids() const {
    std::set<int> ids;
    if (!partitions.empty())
        for (const auto& group : partitions.front())
            ids.insert(group.begin(), group.end());
    return {ids.begin(), ids.end()};
}

namespace {

std::string group_str(const std::vector<int>& g) {
    std::string s = "{";
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (i)
            s += ", ";
        s += std::to_string(g[i]);
    }
    return s + "}";
}

} // namespace

std::optional<std::string> validate_layout(const Layout& layout) {
    if (layout.partitions.empty())
        return "layout has no depths";

    std::set<int> universe;
    for (const auto& group : layout.partitions.front())
        universe.insert(group.begin(), group.end());

    for (std::size_t d = 0; d < layout.partitions.size(); ++d) {
        const auto& part = layout.partitions[d];
        std::string where = "depth " + std::to_string(d + 1);
        if (part.empty())
            return where + ": empty partition";
        std::set<int> seen;
        for (const auto& group : part) {
            if (group.empty())
                return where + ": empty group";
            for (int id : group) {
                if (id < 0)
                    return where + ": negative task id " + std::to_string(id);
                if (!seen.insert(id).second)
                    return where + ": task " + std::to_string(id) +
                           " appears in more than one group";
            }
        }
        for (int id : universe)
            if (!seen.count(id))
                return where + ": task " + std::to_string(id) + " is missing";
        for (int id : seen)
            if (!universe.count(id))
                return where + ": task " + std::to_string(id) +
                       " does not appear at depth 1";
        if (d > 0) {
            // refinement: every group must fit inside one previous-depth group
            for (const auto& group : part) {
                bool contained = false;
                for (const auto& prev : layout.partitions[d - 1]) {
                    bool subset = std::all_of(group.begin(), group.end(), [&](int id) {
                        return std::find(prev.begin(), prev.end(), id) != prev.end();
                    });
                    if (subset) {
                        contained = true;
                        break;
                    }
                }
                if (!contained)
                    return where + ": group " + group_str(group) +
                           " re-merges tasks split at depth " + std::to_string(d);
            }
        }
    }
    return std::nullopt;
}

namespace {

struct Parser {
    const std::string& s;
    std::size_t pos = 0;

    void skip_ws() {
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t' || s[pos] == '\n' ||
                                  s[pos] == '\r'))
            ++pos;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw std::invalid_argument("layout parse error at position " + std::to_string(pos) +
                                    ": " + msg);
    }

    char peek() {
        skip_ws();
        if (pos >= s.size())
            fail("unexpected end of input");
        return s[pos];
    }

    void expect(char c) {
        if (peek() != c)
            fail(std::string("expected '") + c + "', got '" + s[pos] + "'");
        ++pos;
    }

    bool try_consume(char c) {
        skip_ws();
        if (pos < s.size() && s[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }

    int parse_int() {
        skip_ws();
        std::size_t start = pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9')
            ++pos;
        if (pos == start)
            fail("expected a task id");
        return std::stoi(s.substr(start, pos - start));
    }

    std::vector<int> parse_group() {
        expect('{');
        std::vector<int> ids;
        if (!try_consume('}')) {
            ids.push_back(parse_int());
            while (try_consume(','))
                ids.push_back(parse_int());
            expect('}');
        }
        return ids;
    }

    std::vector<std::vector<int>> parse_depth() {
        expect('[');
        std::vector<std::vector<int>> groups;
        groups.push_back(parse_group());
        while (try_consume(','))
            groups.push_back(parse_group());
        expect(']');
        return groups;
    }

    Layout parse() {
        Layout layout;
        expect('[');
        layout.partitions.push_back(parse_depth());
        while (try_consume(','))
            layout.partitions.push_back(parse_depth());
        expect(']');
        skip_ws();
        if (pos != s.size())
            fail("trailing characters");
        return layout;
    }
};

} // namespace

Layout canonical_layout(const Layout& layout) {
    Layout out = layout;
    for (auto& part : out.partitions) {
        for (auto& group : part)
            std::sort(group.begin(), group.end());
        std::sort(part.begin(), part.end());
    }
    return out;
}

Layout parse_layout(const std::string& text) {
    Parser p{text};
    return p.parse();
}

std::string format_layout(const Layout& layout) {
    Layout canon = canonical_layout(layout);
    std::string s = "[";
    for (std::size_t d = 0; d < canon.partitions.size(); ++d) {
        if (d)
            s += ", ";
        s += "[";
        const auto& part = canon.partitions[d];
        for (std::size_t g = 0; g < part.size(); ++g) {
            if (g)
                s += ", ";
            s += group_str(part[g]);
        }
        s += "]";
    }
    return s + "]";
}

bool same_layout(const Layout& a, const Layout& b) {
    return canonical_layout(a).partitions == canonical_layout(b).partitions;
}

Layout sharing_level_layout(int level, int depth, int n_tasks) {
    if (depth < 1 || n_tasks < 1)
        throw std::invalid_argument("sharing_level_layout: depth and task count must be >= 1");
    if (level < 0 || level > depth)
        throw std::invalid_argument("sharing level " + std::to_string(level) +
                                    " outside [0," + std::to_string(depth) + "]");
    std::vector<int> all(static_cast<std::size_t>(n_tasks));
    for (int i = 0; i < n_tasks; ++i)
        all[static_cast<std::size_t>(i)] = i;
    Layout layout;
    for (int d = 0; d < depth; ++d) {
        if (d < level) {
            layout.partitions.push_back({all});
        } else {
            std::vector<std::vector<int>> split;
            for (int i = 0; i < n_tasks; ++i)
                split.push_back({i});
            layout.partitions.push_back(std::move(split));
        }
    }
    return layout;
}

Layout named_layout(const std::string& name, int depth, int n_tasks) {
    if (name == "IND")
        return sharing_level_layout(0, depth, n_tasks);
    if (name == "AS")
        return sharing_level_layout(depth, depth, n_tasks);
    if (name.size() >= 2 && name.back() == 'L') {
        std::string digits = name.substr(0, name.size() - 1);
        if (!digits.empty() &&
            std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
            return sharing_level_layout(std::stoi(digits), depth, n_tasks);
    }
    throw std::invalid_argument("unknown layout name '" + name +
                                "' (expected IND, AS, or <k>L)");
}

} // namespace mtlab::mtlnet
