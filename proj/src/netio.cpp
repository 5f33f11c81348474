#include "legit/netio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#ifndef LEGIT_DATA_DIR_DEFAULT
#define LEGIT_DATA_DIR_DEFAULT "data"
#endif

namespace legit::netio {

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error(line ? fmt::format("line {}: {}", line, what) : what), line_(line) {}

std::size_t BayesNet::index_of(std::string_view node_name) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].name == node_name) return i;
    throw std::out_of_range(fmt::format("unknown node '{}'", node_name));
}

std::vector<std::size_t> BayesNet::cardinalities() const {
    std::vector<std::size_t> out;
    out.reserve(nodes.size());
    for (const auto& n : nodes) out.push_back(n.cardinality());
    return out;
}

std::vector<std::string> BayesNet::node_names() const {
    std::vector<std::string> out;
    out.reserve(nodes.size());
    for (const auto& n : nodes) out.push_back(n.name);
    return out;
}

std::size_t BayesNet::cpt_row(std::size_t i, const unsigned char* assignment) const {
    const auto& node = nodes[i];
    std::size_t row = 0;
    for (std::size_t p : node.parents) row = row * nodes[p].cardinality() + assignment[p];
    return row;
}

const std::string* VariableDescriptions::find(std::string_view name) const {
    for (const auto& [n, d] : entries)
        if (n == name) return &d;
    return nullptr;
}

namespace {

struct Token {
    std::string text;
    std::size_t line;
};

bool is_punct(char c) {
    return c == '{' || c == '}' || c == '[' || c == ']' || c == '(' || c == ')' || c == ',' ||
           c == ';' || c == '|';
}

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    std::size_t line = 1;
    std::size_t i = 0;
    while (i < text.size()) {
        char c = text[i];
        if (c == '\n') {
            ++line;
            ++i;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (c == '/' && i + 1 < text.size() && text[i + 1] == '/') {
            while (i < text.size() && text[i] != '\n') ++i;
        } else if (c == '/' && i + 1 < text.size() && text[i + 1] == '*') {
            std::size_t start_line = line;
            i += 2;
            while (i + 1 < text.size() && !(text[i] == '*' && text[i + 1] == '/')) {
                if (text[i] == '\n') ++line;
                ++i;
            }
            if (i + 1 >= text.size()) throw ParseError(start_line, "unterminated comment");
            i += 2;
        } else if (is_punct(c)) {
            out.push_back({std::string(1, c), line});
            ++i;
        } else if (c == '"') {
            std::size_t start = ++i;
            while (i < text.size() && text[i] != '"' && text[i] != '\n') ++i;
            if (i >= text.size() || text[i] != '"') throw ParseError(line, "unterminated string");
            out.push_back({std::string(text.substr(start, i - start)), line});
            ++i;
        } else {
            std::size_t start = i;
            while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) &&
                   !is_punct(text[i]) && text[i] != '"')
                ++i;
            out.push_back({std::string(text.substr(start, i - start)), line});
        }
    }
    return out;
}

class Cursor {
public:
    explicit Cursor(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

    bool done() const { return pos_ >= tokens_.size(); }
    std::size_t line() const {
        if (tokens_.empty()) return 0;
        return done() ? tokens_.back().line : tokens_[pos_].line;
    }
    const std::string& peek() const {
        static const std::string kEnd;
        return done() ? kEnd : tokens_[pos_].text;
    }
    std::string next() {
        if (done()) throw ParseError(line(), "unexpected end of input");
        return tokens_[pos_++].text;
    }
    void expect(std::string_view want) {
        std::size_t ln = line();
        std::string got = next();
        if (got != want) throw ParseError(ln, fmt::format("expected '{}' but found '{}'", want, got));
    }
    bool accept(std::string_view want) {
        if (!done() && tokens_[pos_].text == want) {
            ++pos_;
            return true;
        }
        return false;
    }
    // Skips everything up to and including the next ';'.
    void skip_statement() {
        while (next() != ";") {
        }
    }
    // Skips a balanced {...} block whose '{' has already been consumed.
    void skip_block() {
        int depth = 1;
        while (depth > 0) {
            std::string t = next();
            if (t == "{") ++depth;
            if (t == "}") --depth;
        }
    }

private:
    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
};

double parse_probability(const std::string& s, std::size_t line) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw ParseError(line, fmt::format("invalid number '{}'", s));
    if (!(v >= 0.0) || v > 1.0 + kCptRowTolerance)
        throw ParseError(line, fmt::format("probability {} outside [0, 1]", s));
    return v;
}

std::vector<std::string> read_list(Cursor& cur, std::string_view close) {
    std::vector<std::string> items;
    if (cur.accept(close)) return items;
    while (true) {
        items.push_back(cur.next());
        if (cur.accept(close)) break;
        cur.expect(",");
    }
    return items;
}

struct RawRow {
    std::vector<std::string> labels;  // parent states; empty for a flat table
    std::vector<double> probs;
    std::size_t line = 0;
};

struct PendingCpt {
    std::size_t line = 0;
    std::vector<std::string> parents;
    std::optional<RawRow> table;
    std::vector<RawRow> rows;
};

std::vector<double> read_numbers(Cursor& cur, std::size_t line) {
    std::vector<double> vals;
    while (!cur.accept(";")) {
        vals.push_back(parse_probability(cur.next(), line));
        cur.accept(",");
    }
    return vals;
}

void check_and_normalize(std::vector<double>& row, std::size_t line, const std::string& node) {
    double sum = std::accumulate(row.begin(), row.end(), 0.0);
    if (std::abs(sum - 1.0) > kCptInputTolerance)
        throw ParseError(line, fmt::format("probabilities for '{}' sum to {:.12g}, not 1", node, sum));
    for (double& v : row) v /= sum;
}

void check_acyclic(const BayesNet& net) {
    std::vector<std::size_t> indeg(net.size(), 0);
    std::vector<std::vector<std::size_t>> children(net.size());
    for (auto [p, c] : net.edges) {
        ++indeg[c];
        children[p].push_back(c);
    }
    std::vector<std::size_t> queue;
    for (std::size_t i = 0; i < net.size(); ++i)
        if (indeg[i] == 0) queue.push_back(i);
    std::size_t seen = 0;
    while (!queue.empty()) {
        std::size_t v = queue.back();
        queue.pop_back();
        ++seen;
        for (std::size_t c : children[v])
            if (--indeg[c] == 0) queue.push_back(c);
    }
    if (seen != net.size()) {
        for (std::size_t i = 0; i < net.size(); ++i)
            if (indeg[i] > 0)
                throw ParseError(0, fmt::format("cyclic parent declaration involving '{}'", net.nodes[i].name));
    }
}

}  // namespace

BayesNet parse_bif(std::string_view text) {
    Cursor cur(tokenize(text));
    BayesNet net;
    std::unordered_map<std::string, std::size_t> index;
    std::unordered_map<std::string, PendingCpt> cpts;

    while (!cur.done()) {
        std::size_t ln = cur.line();
        std::string kw = cur.next();
        if (kw == "network") {
            net.name = cur.next();
            cur.expect("{");
            cur.skip_block();
        } else if (kw == "variable") {
            NodeSpec node;
            node.name = cur.next();
            if (index.count(node.name)) throw ParseError(ln, fmt::format("duplicate node name '{}'", node.name));
            cur.expect("{");
            bool typed = false;
            while (!cur.accept("}")) {
                std::size_t sl = cur.line();
                std::string what = cur.next();
                if (what == "type") {
                    cur.expect("discrete");
                    cur.expect("[");
                    std::string count = cur.next();
                    cur.expect("]");
                    cur.expect("{");
                    node.states = read_list(cur, "}");
                    cur.expect(";");
                    std::size_t declared = std::strtoul(count.c_str(), nullptr, 10);
                    if (declared != node.states.size())
                        throw ParseError(sl, fmt::format("'{}' declares {} states but lists {}", node.name,
                                                         declared, node.states.size()));
                    if (node.states.size() < 2)
                        throw ParseError(sl, fmt::format("'{}' needs at least two states", node.name));
                    std::unordered_set<std::string> uniq(node.states.begin(), node.states.end());
                    if (uniq.size() != node.states.size())
                        throw ParseError(sl, fmt::format("duplicate state label in '{}'", node.name));
                    typed = true;
                } else if (what == "property") {
                    cur.skip_statement();
                } else {
                    throw ParseError(sl, fmt::format("unexpected '{}' in variable block", what));
                }
            }
            if (!typed) throw ParseError(ln, fmt::format("variable '{}' has no type", node.name));
            index.emplace(node.name, net.nodes.size());
            net.nodes.push_back(std::move(node));
        } else if (kw == "probability") {
            cur.expect("(");
            std::string child = cur.next();
            PendingCpt pending;
            pending.line = ln;
            if (cur.accept("|")) {
                pending.parents = read_list(cur, ")");
            } else {
                cur.expect(")");
            }
            if (cpts.count(child)) throw ParseError(ln, fmt::format("duplicate probability block for '{}'", child));
            cur.expect("{");
            while (!cur.accept("}")) {
                std::size_t rl = cur.line();
                if (cur.accept("table")) {
                    pending.table = RawRow{{}, read_numbers(cur, rl), rl};
                } else if (cur.accept("(")) {
                    RawRow row;
                    row.line = rl;
                    row.labels = read_list(cur, ")");
                    row.probs = read_numbers(cur, rl);
                    pending.rows.push_back(std::move(row));
                } else if (cur.accept("property")) {
                    cur.skip_statement();
                } else {
                    throw ParseError(rl, fmt::format("unexpected '{}' in probability block", cur.peek()));
                }
            }
            if (!pending.table && pending.rows.empty())
                throw ParseError(ln, fmt::format("probability block for '{}' has no entries", child));
            cpts.emplace(child, std::move(pending));
        } else {
            throw ParseError(ln, fmt::format("unexpected '{}' at top level", kw));
        }
    }

    for (auto& node : net.nodes) {
        auto it = cpts.find(node.name);
        if (it == cpts.end()) throw ParseError(0, fmt::format("no probability block for '{}'", node.name));
        const PendingCpt& pc = it->second;
        const std::size_t self = index.at(node.name);
        std::size_t rows = 1;
        for (const auto& pn : pc.parents) {
            auto pi = index.find(pn);
            if (pi == index.end()) throw ParseError(pc.line, fmt::format("unknown parent '{}' of '{}'", pn, node.name));
            if (pi->second == self) throw ParseError(pc.line, fmt::format("'{}' lists itself as a parent", node.name));
            if (std::find(node.parents.begin(), node.parents.end(), pi->second) != node.parents.end())
                throw ParseError(pc.line, fmt::format("duplicate parent '{}' of '{}'", pn, node.name));
            node.parents.push_back(pi->second);
            rows *= net.nodes[pi->second].cardinality();
        }
        const std::size_t card = node.cardinality();
        std::vector<std::optional<std::vector<double>>> cpt(rows);
        if (pc.table) {
            // Flat tables list whole rows back to back, last parent varying fastest.
            const auto& flat = pc.table->probs;
            if (flat.size() != rows * card)
                throw ParseError(pc.table->line, fmt::format("table for '{}' has {} entries, expected {}", node.name,
                                                             flat.size(), rows * card));
            for (std::size_t r = 0; r < rows; ++r) {
                std::vector<double> row(flat.begin() + r * card, flat.begin() + (r + 1) * card);
                check_and_normalize(row, pc.table->line, node.name);
                cpt[r] = std::move(row);
            }
        }
        for (const RawRow& raw : pc.rows) {
            if (raw.labels.size() != node.parents.size())
                throw ParseError(raw.line, fmt::format("row for '{}' has {} parent values, expected {}", node.name,
                                                       raw.labels.size(), node.parents.size()));
            if (raw.probs.size() != card)
                throw ParseError(raw.line, fmt::format("row for '{}' has {} probabilities, expected {}", node.name,
                                                       raw.probs.size(), card));
            std::size_t r = 0;
            for (std::size_t p = 0; p < raw.labels.size(); ++p) {
                const auto& pstates = net.nodes[node.parents[p]].states;
                auto s = std::find(pstates.begin(), pstates.end(), raw.labels[p]);
                if (s == pstates.end())
                    throw ParseError(raw.line, fmt::format("unknown state '{}' of parent '{}'", raw.labels[p],
                                                           net.nodes[node.parents[p]].name));
                r = r * pstates.size() + static_cast<std::size_t>(s - pstates.begin());
            }
            std::vector<double> row = raw.probs;
            check_and_normalize(row, raw.line, node.name);
            cpt[r] = std::move(row);
        }
        node.cpt.reserve(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            if (!cpt[r]) throw ParseError(pc.line, fmt::format("missing CPT row {} for '{}'", r, node.name));
            node.cpt.push_back(std::move(*cpt[r]));
        }
        for (std::size_t p : node.parents) net.edges.emplace_back(p, index.at(node.name));
    }
    for (const auto& [child, pc] : cpts)
        if (!index.count(child)) throw ParseError(pc.line, fmt::format("probability block for unknown '{}'", child));

    std::sort(net.edges.begin(), net.edges.end());
    check_acyclic(net);
    return net;
}

BayesNet load_bif(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_bif(ss.str());
}

std::string write_bif(const BayesNet& net) {
    std::string out = fmt::format("network {} {{\n}}\n", net.name.empty() ? "unknown" : net.name);
    for (const auto& node : net.nodes) {
        out += fmt::format("variable {} {{\n  type discrete [ {} ] {{ {} }};\n}}\n", node.name, node.states.size(),
                           fmt::join(node.states, ", "));
    }
    for (const auto& node : net.nodes) {
        if (node.parents.empty()) {
            out += fmt::format("probability ( {} ) {{\n  table {:.17g};\n}}\n", node.name, fmt::join(node.cpt[0], ", "));
            continue;
        }
        std::vector<std::string> pnames;
        for (std::size_t p : node.parents) pnames.push_back(net.nodes[p].name);
        out += fmt::format("probability ( {} | {} ) {{\n", node.name, fmt::join(pnames, ", "));
        for (std::size_t r = 0; r < node.cpt.size(); ++r) {
            std::vector<std::string> labels(node.parents.size());
            std::size_t rem = r;
            for (std::size_t p = node.parents.size(); p-- > 0;) {
                const auto& ps = net.nodes[node.parents[p]].states;
                labels[p] = ps[rem % ps.size()];
                rem /= ps.size();
            }
            out += fmt::format("  ({}) {:.17g};\n", fmt::join(labels, ", "), fmt::join(node.cpt[r], ", "));
        }
        out += "}\n";
    }
    return out;
}

NetworkSummary network_summary(const BayesNet& net) {
    NetworkSummary s;
    s.node_count = net.size();
    s.edge_count = net.edges.size();
    s.out_degrees.assign(net.size(), 0);
    for (auto [p, c] : net.edges) ++s.out_degrees[p];
    return s;
}

std::filesystem::path data_dir() {
    if (const char* env = std::getenv("LEGIT_DATA_DIR"); env && *env) return env;
    return LEGIT_DATA_DIR_DEFAULT;
}

std::string dataset_name(const std::string& name_or_path) {
    std::string stem = std::filesystem::path(name_or_path).stem().string();
    std::transform(stem.begin(), stem.end(), stem.begin(), [](unsigned char c) { return std::tolower(c); });
    return stem;
}

BayesNet load_network(const std::string& name_or_path) {
    std::filesystem::path p(name_or_path);
    if (p.has_extension() && std::filesystem::exists(p)) return load_bif(p);
    auto bundled = data_dir() / "networks" / (dataset_name(name_or_path) + ".bif");
    if (std::filesystem::exists(bundled)) return load_bif(bundled);
    throw std::invalid_argument(fmt::format("unknown network '{}'", name_or_path));
}

VariableDescriptions parse_descriptions(std::string_view text) {
    VariableDescriptions d;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t ln = 0;
    bool have_domain = false;
    while (std::getline(in, line)) {
        ++ln;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto colon = line.find(':');
        if (colon == std::string::npos || colon == 0)
            throw ParseError(ln, "expected 'name: description'");
        std::string key = line.substr(0, colon);
        std::string value = line.substr(colon + 1);
        if (!value.empty() && value[0] == ' ') value.erase(0, 1);
        if (key == "domain") {
            d.domain_blurb = value;
            have_domain = true;
            continue;
        }
        if (d.find(key)) throw ParseError(ln, fmt::format("duplicate description for '{}'", key));
        d.entries.emplace_back(std::move(key), std::move(value));
    }
    if (!have_domain) throw ParseError(0, "description file has no 'domain:' header");
    return d;
}

void check_descriptions(const VariableDescriptions& descs, const BayesNet& net) {
    for (const auto& node : net.nodes)
        if (!descs.find(node.name))
            throw std::invalid_argument(fmt::format("no description for node '{}'", node.name));
}

VariableDescriptions load_descriptions(const std::string& dataset_name_or_path) {
    std::filesystem::path p(dataset_name_or_path);
    std::filesystem::path file;
    bool bundled = false;
    if (p.has_extension() && std::filesystem::exists(p)) {
        file = p;
    } else {
        file = data_dir() / "descriptions" / (dataset_name(dataset_name_or_path) + ".txt");
        bundled = true;
    }
    std::ifstream in(file);
    if (!in) throw std::invalid_argument(fmt::format("no descriptions for dataset '{}'", dataset_name_or_path));
    std::stringstream ss;
    ss << in.rdbuf();
    VariableDescriptions d = parse_descriptions(ss.str());
    if (bundled) {
        auto net_path = data_dir() / "networks" / (dataset_name(dataset_name_or_path) + ".bif");
        if (std::filesystem::exists(net_path)) check_descriptions(d, load_bif(net_path));
    }
    return d;
}

}  // namespace legit::netio
