#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spillover/design.hpp"
#include "spillover/network.hpp"

namespace spillover::cli {

// Input problem tied to a file and 1-based line (0 when not line specific).
class IngestError : public std::runtime_error {
public:
    IngestError(const std::string& file, std::size_t line, const std::string& what);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct Dataset {
    std::vector<std::string> ids;  // dense index -> original id
    Network net;
    BernoulliDesign design;
    ObservedData data;
    std::vector<std::string> covariate_names;
};

struct IngestOptions {
    std::optional<double> radius;         // used when no edge table is given
    bool restrict_randomizable = false;   // radius mode: keep pairs with a randomizable endpoint
};

// Node table: id, p_treat, z_obs, y_post required; x, y, y_pre optional; any other column is a
// covariate. Edge table: src, dst (ids from the node table).
Dataset ingest_streams(std::istream& nodes, const std::string& nodes_name, std::istream* edges,
                       const std::string& edges_name, const IngestOptions& options = {});
Dataset ingest(const std::string& nodes_path, const std::optional<std::string>& edges_path,
               const IngestOptions& options = {});

// Canonical export: fixed column order, shortest round-trip numbers, edges with src < dst by index.
void export_nodes(const Dataset& ds, std::ostream& os);
void export_edges(const Dataset& ds, std::ostream& os);

std::string format_number(double v);

// Two-column unit,label table keyed by the dataset ids.
std::vector<int> read_labels(const std::string& path, const Dataset& ds);
void write_labels(std::ostream& os, const Dataset& ds, const std::vector<int>& labels);

// FNV-1a of a file's bytes, as 16 hex digits.
std::string file_digest(const std::string& path);

}  // namespace spillover::cli
