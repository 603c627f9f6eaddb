#include "ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace spillover::cli {

IngestError::IngestError(const std::string& file, std::size_t line, const std::string& what)
    : std::runtime_error(file + (line ? ":" + std::to_string(line) : std::string()) + ": " + what), line_(line) {}

namespace {

std::string trim(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
    std::size_t b = 0;
    while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
    return s.substr(b);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

double parse_double(const std::string& s, const std::string& file, std::size_t line, const std::string& column) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v))
        throw IngestError(file, line, "column '" + column + "': not a finite number: '" + s + "'");
    return v;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> lines;

    std::optional<std::size_t> column(const std::string& name) const {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    }
};

Table read_table(std::istream& in, const std::string& name) {
    Table t;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (trim(line).empty()) continue;
        auto cells = split(line);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size())
            throw IngestError(name, no, "expected " + std::to_string(t.header.size()) + " fields, found " +
                                            std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
        t.lines.push_back(no);
    }
    if (t.header.empty()) throw IngestError(name, 0, "empty table");
    return t;
}

std::size_t require(const Table& t, const std::string& col, const std::string& name) {
    auto c = t.column(col);
    if (!c) throw IngestError(name, 1, "missing required column '" + col + "'");
    return *c;
}

}  // namespace

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

Dataset ingest_streams(std::istream& nodes, const std::string& nodes_name, std::istream* edges,
                       const std::string& edges_name, const IngestOptions& options) {
    const Table nt = read_table(nodes, nodes_name);
    const std::size_t c_id = require(nt, "id", nodes_name);
    const std::size_t c_p = require(nt, "p_treat", nodes_name);
    const std::size_t c_z = require(nt, "z_obs", nodes_name);
    const std::size_t c_y = require(nt, "y_post", nodes_name);
    const auto c_x = nt.column("x"), c_yc = nt.column("y"), c_pre = nt.column("y_pre");
    if (c_x.has_value() != c_yc.has_value()) throw IngestError(nodes_name, 1, "coordinates need both 'x' and 'y'");
    std::vector<std::size_t> c_cov;
    Dataset ds;
    for (std::size_t c = 0; c < nt.header.size(); ++c) {
        const auto& h = nt.header[c];
        if (h == "id" || h == "p_treat" || h == "z_obs" || h == "y_post" || h == "x" || h == "y" || h == "y_pre") continue;
        if (h.empty()) throw IngestError(nodes_name, 1, "empty column name");
        c_cov.push_back(c);
        ds.covariate_names.push_back(h);
    }

    const std::size_t n = nt.rows.size();
    std::unordered_map<std::string, UnitId> index;
    std::vector<double> probs(n);
    std::vector<Point> coords;
    ds.data.z_obs.resize(n);
    ds.data.y_post.resize(n);
    if (c_pre) ds.data.y_pre = std::vector<double>(n);
    if (!c_cov.empty()) ds.data.covariates.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        const auto& row = nt.rows[r];
        const std::size_t line = nt.lines[r];
        const std::string& id = row[c_id];
        if (id.empty()) throw IngestError(nodes_name, line, "empty id");
        if (!index.emplace(id, static_cast<UnitId>(r)).second) throw IngestError(nodes_name, line, "duplicate id '" + id + "'");
        ds.ids.push_back(id);
        const double p = parse_double(row[c_p], nodes_name, line, "p_treat");
        if (p < 0.0 || p > 1.0) throw IngestError(nodes_name, line, "p_treat " + row[c_p] + " outside [0, 1]");
        probs[r] = p;
        const std::string& zs = row[c_z];
        if (zs != "0" && zs != "1") throw IngestError(nodes_name, line, "z_obs must be 0 or 1, got '" + zs + "'");
        const std::uint8_t z = zs == "1" ? 1 : 0;
        if (z == 1 && p == 0.0) throw IngestError(nodes_name, line, "z_obs = 1 where p_treat = 0 (outside the design support)");
        if (z == 0 && p == 1.0) throw IngestError(nodes_name, line, "z_obs = 0 where p_treat = 1 (outside the design support)");
        ds.data.z_obs[r] = z;
        ds.data.y_post[r] = parse_double(row[c_y], nodes_name, line, "y_post");
        if (c_pre) (*ds.data.y_pre)[r] = parse_double(row[*c_pre], nodes_name, line, "y_pre");
        for (std::size_t k = 0; k < c_cov.size(); ++k)
            ds.data.covariates[r].push_back(parse_double(row[c_cov[k]], nodes_name, line, nt.header[c_cov[k]]));
        if (c_x) coords.push_back({parse_double(row[*c_x], nodes_name, line, "x"), parse_double(row[*c_yc], nodes_name, line, "y")});
    }
    ds.design = BernoulliDesign(probs);

    if (edges) {
        const Table et = read_table(*edges, edges_name);
        const std::size_t c_s = require(et, "src", edges_name);
        const std::size_t c_d = require(et, "dst", edges_name);
        std::vector<std::pair<UnitId, UnitId>> list;
        for (std::size_t r = 0; r < et.rows.size(); ++r) {
            const auto& row = et.rows[r];
            auto a = index.find(row[c_s]), b = index.find(row[c_d]);
            if (a == index.end()) throw IngestError(edges_name, et.lines[r], "unknown unit id '" + row[c_s] + "'");
            if (b == index.end()) throw IngestError(edges_name, et.lines[r], "unknown unit id '" + row[c_d] + "'");
            if (a->second == b->second) throw IngestError(edges_name, et.lines[r], "self-loop at '" + row[c_s] + "'");
            list.emplace_back(a->second, b->second);
        }
        ds.net = build_network(n, list);
        if (!coords.empty()) ds.net.set_coordinates(coords);
    } else {
        if (!options.radius) throw IngestError(nodes_name, 0, "no edge table and no radius given");
        if (coords.empty()) throw IngestError(nodes_name, 1, "radius mode needs 'x' and 'y' columns");
        if (!(*options.radius > 0.0)) throw IngestError(nodes_name, 0, "radius must be positive");
        if (options.restrict_randomizable) {
            ds.net = build_network(coords, *options.radius, [&probs](UnitId a, UnitId b) {
                return (probs[a] > 0.0 && probs[a] < 1.0) || (probs[b] > 0.0 && probs[b] < 1.0);
            });
        } else {
            ds.net = build_network(coords, *options.radius);
        }
    }
    return ds;
}

Dataset ingest(const std::string& nodes_path, const std::optional<std::string>& edges_path,
               const IngestOptions& options) {
    std::ifstream nodes(nodes_path);
    if (!nodes) throw IngestError(nodes_path, 0, "cannot open file");
    if (!edges_path) return ingest_streams(nodes, nodes_path, nullptr, "", options);
    std::ifstream edges(*edges_path);
    if (!edges) throw IngestError(*edges_path, 0, "cannot open file");
    return ingest_streams(nodes, nodes_path, &edges, *edges_path, options);
}

void export_nodes(const Dataset& ds, std::ostream& os) {
    const bool coords = ds.net.has_coordinates();
    const bool pre = ds.data.y_pre.has_value();
    os << "id";
    if (coords) os << ",x,y";
    os << ",p_treat,z_obs,y_post";
    if (pre) os << ",y_pre";
    for (const auto& c : ds.covariate_names) os << ',' << c;
    os << '\n';
    for (std::size_t i = 0; i < ds.ids.size(); ++i) {
        os << ds.ids[i];
        if (coords) os << ',' << format_number(ds.net.coordinates()[i].x) << ',' << format_number(ds.net.coordinates()[i].y);
        os << ',' << format_number(ds.design.p(i)) << ',' << int(ds.data.z_obs[i]) << ',' << format_number(ds.data.y_post[i]);
        if (pre) os << ',' << format_number((*ds.data.y_pre)[i]);
        if (!ds.covariate_names.empty())
            for (double v : ds.data.covariates[i]) os << ',' << format_number(v);
        os << '\n';
    }
}

void export_edges(const Dataset& ds, std::ostream& os) {
    os << "src,dst\n";
    for (auto [a, b] : ds.net.edges()) os << ds.ids[a] << ',' << ds.ids[b] << '\n';
}

std::vector<int> read_labels(const std::string& path, const Dataset& ds) {
    std::ifstream in(path);
    if (!in) throw IngestError(path, 0, "cannot open file");
    const Table t = read_table(in, path);
    if (t.header.size() != 2) throw IngestError(path, 1, "expected two columns: unit,label");
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ds.ids.size(); ++i) index.emplace(ds.ids[i], i);
    std::vector<int> labels(ds.ids.size(), -1);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        auto it = index.find(t.rows[r][0]);
        if (it == index.end()) throw IngestError(path, t.lines[r], "unknown unit id '" + t.rows[r][0] + "'");
        const double v = parse_double(t.rows[r][1], path, t.lines[r], t.header[1]);
        if (v < 0.0 || v != std::floor(v)) throw IngestError(path, t.lines[r], "label must be a nonnegative integer");
        labels[it->second] = static_cast<int>(v);
    }
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0) throw IngestError(path, 0, "no label for unit '" + ds.ids[i] + "'");
    return labels;
}

void write_labels(std::ostream& os, const Dataset& ds, const std::vector<int>& labels) {
    os << "unit,label\n";
    for (std::size_t i = 0; i < labels.size(); ++i) os << ds.ids[i] << ',' << labels[i] << '\n';
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError(path, 0, "cannot open file");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize k = 0; k < in.gcount(); ++k) {
            h ^= static_cast<unsigned char>(buf[k]);
            h *= 0x100000001b3ULL;
        }
    }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

}  // namespace spillover::cli
