#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace legit::netio {

/// Raised for malformed BIF text. `line()` is 1-based, 0 when the error is not tied to a line.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct NodeSpec {
    std::string name;
    std::vector<std::string> states;
    std::vector<std::size_t> parents;
    // One row per joint parent configuration. Row index is mixed-radix over
    // `parents` in declaration order with the LAST parent varying fastest.
    std::vector<std::vector<double>> cpt;

    std::size_t cardinality() const noexcept { return states.size(); }
};

struct BayesNet {
    std::string name;
    std::vector<NodeSpec> nodes;
    // (parent, child), sorted.
    std::vector<std::pair<std::size_t, std::size_t>> edges;

    std::size_t size() const noexcept { return nodes.size(); }
    std::size_t index_of(std::string_view node_name) const;  // throws std::out_of_range
    std::vector<std::size_t> cardinalities() const;
    std::vector<std::string> node_names() const;

    /// Row of node `i`'s CPT selected by a full assignment of the network.
    std::size_t cpt_row(std::size_t i, const unsigned char* assignment) const;
};

struct VariableDescriptions {
    std::string domain_blurb;
    // Ordered as in the description file.
    std::vector<std::pair<std::string, std::string>> entries;

    const std::string* find(std::string_view name) const;
};

struct NetworkSummary {
    std::size_t node_count = 0;
    std::size_t edge_count = 0;
    std::vector<std::size_t> out_degrees;
};

inline constexpr double kCptRowTolerance = 1e-9;
// Published files round to 7 digits (Alarm's 0.3333333 rows); such rows are
// accepted and renormalized, so stored rows still meet kCptRowTolerance.
inline constexpr double kCptInputTolerance = 1e-6;

BayesNet parse_bif(std::string_view text);
BayesNet load_bif(const std::filesystem::path& path);
std::string write_bif(const BayesNet& net);

NetworkSummary network_summary(const BayesNet& net);

/// Directory holding networks/, descriptions/ and llm_fixtures/. Honors the
/// LEGIT_DATA_DIR environment variable, then falls back to the build-time path.
std::filesystem::path data_dir();

/// `name_or_path` is either a bundled network name (asia, child, insurance,
/// alarm) or a path to a .bif file.
BayesNet load_network(const std::string& name_or_path);

/// Parses the `domain:` header plus one `name: description` line per node.
VariableDescriptions parse_descriptions(std::string_view text);

/// Bundled dataset name or a path to a description file. When the name is a
/// bundled dataset, the descriptions are checked against that network.
VariableDescriptions load_descriptions(const std::string& dataset_name);

/// Throws std::invalid_argument naming the first node without a description.
void check_descriptions(const VariableDescriptions& descs, const BayesNet& net);

/// Canonical dataset name for a network argument ("asia" for ".../asia.bif").
std::string dataset_name(const std::string& name_or_path);

}  // namespace legit::netio
