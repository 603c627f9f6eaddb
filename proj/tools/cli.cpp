#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "ingest.hpp"
#include "spillover/biclique.hpp"
#include "spillover/monotone.hpp"
#include "spillover/parallel.hpp"
#include "spillover/partition.hpp"
#include "spillover/sim.hpp"

namespace spillover::cli {

using nlohmann::json;

namespace {

// Non-finite values are written as strings so reports stay valid JSON.
json num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

template <class T>
T get(const json& cfg, const char* key) {
    auto it = cfg.find(key);
    if (it == cfg.end()) throw std::invalid_argument(std::string("config: missing key '") + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument(std::string("config: key '") + key + "' has the wrong type");
    }
}

std::optional<std::string> opt_string(const json& cfg, const char* key) {
    auto it = cfg.find(key);
    if (it == cfg.end() || it->is_null()) return std::nullopt;
    return get<std::string>(cfg, key);
}

std::optional<double> opt_double(const json& cfg, const char* key) {
    auto it = cfg.find(key);
    if (it == cfg.end() || it->is_null()) return std::nullopt;
    return get<double>(cfg, key);
}

json data_defaults() {
    return {{"nodes", nullptr}, {"edges", nullptr}, {"radius", nullptr}, {"restrict_randomizable", false},
            {"levels", "0,1,2,>=3"}, {"seed", 1}};
}

json engine_defaults() {
    return {{"statistic", "dim"},     {"combiner", "fisher"}, {"combiner_weights", json::array()},
            {"epsilon", 1e-4},        {"draws", 10000},       {"direction", "decreasing"},
            {"adjust", "none"},       {"relax", false},       {"generalized", false},
            {"focal_pool", "all"},    {"stage_shares", json::array()}, {"order", "random"}};
}

// Objects merge key by key; anything else replaces.
void merge(json& into, const json& from) {
    for (auto it = from.begin(); it != from.end(); ++it) {
        if (it.value().is_object() && into.contains(it.key()) && into[it.key()].is_object())
            merge(into[it.key()], it.value());
        else
            into[it.key()] = it.value();
    }
}

struct Loaded {
    Dataset ds;
    ExposureSpec spec;
    json inputs;
};

Loaded load(const json& cfg) {
    const auto nodes = opt_string(cfg, "nodes");
    if (!nodes) throw std::invalid_argument("a node table is required (--nodes)");
    const auto edges = opt_string(cfg, "edges");
    IngestOptions io;
    io.radius = opt_double(cfg, "radius");
    io.restrict_randomizable = get<bool>(cfg, "restrict_randomizable");
    if (edges && io.radius) throw std::invalid_argument("give either an edge table or a radius, not both");
    Loaded out{ingest(*nodes, edges, io), ExposureSpec::parse(get<std::string>(cfg, "levels")), json::object()};
    out.inputs["nodes"] = file_digest(*nodes);
    if (edges) out.inputs["edges"] = file_digest(*edges);
    return out;
}

std::vector<bool> focal_pool(const std::string& name, const BernoulliDesign& design) {
    if (name == "all") return {};
    if (name == "nonrandomizable") {
        std::vector<bool> pool(design.size());
        for (std::size_t i = 0; i < design.size(); ++i) pool[i] = design.p(i) == 0.0 || design.p(i) == 1.0;
        return pool;
    }
    throw std::invalid_argument("unknown focal pool '" + name + "' (expected all or nonrandomizable)");
}

CandidateOrder parse_order(const std::string& name) {
    if (name == "random") return CandidateOrder::Random;
    if (name == "fewest-free") return CandidateOrder::FewestFree;
    throw std::invalid_argument("unknown candidate order '" + name + "' (expected random or fewest-free)");
}

std::vector<int> stages(const json& cfg, const BernoulliDesign& design, std::uint64_t seed) {
    const auto shares = get<std::vector<double>>(cfg, "stage_shares");
    if (shares.empty()) return {};
    return allocate_stages(design.randomizable(), shares, seed);
}

BuildOptions build_options(const json& cfg, const BernoulliDesign& design, std::uint64_t seed) {
    BuildOptions b;
    b.generalized = get<bool>(cfg, "generalized");
    b.order = parse_order(get<std::string>(cfg, "order"));
    b.focal_pool = focal_pool(get<std::string>(cfg, "focal_pool"), design);
    b.stage = stages(cfg, design, seed);
    return b;
}

CombinerSpec combiner_spec(const json& cfg, std::uint64_t seed) {
    CombinerSpec c;
    c.rule = parse_combine_rule(get<std::string>(cfg, "combiner"));
    c.weights = get<std::vector<double>>(cfg, "combiner_weights");
    c.epsilon = get<double>(cfg, "epsilon");
    c.seed = derive_seed(seed, 0xc0b);
    return c;
}

MonotoneOptions monotone_options(const json& cfg, const Dataset& ds) {
    const auto seed = get<std::uint64_t>(cfg, "seed");
    MonotoneOptions o;
    o.stat = StatSpec::parse(get<std::string>(cfg, "statistic"));
    o.combiner = combiner_spec(cfg, seed);
    o.draws = get<std::size_t>(cfg, "draws");
    if (o.draws < 1) throw std::invalid_argument("draws must be at least 1");
    o.seed = seed;
    o.adjust = parse_adjust_kind(get<std::string>(cfg, "adjust"));
    o.direction = parse_direction(get<std::string>(cfg, "direction"));
    o.relax = get<bool>(cfg, "relax");
    const BuildOptions b = build_options(cfg, ds.design, seed);
    o.generalized = b.generalized;
    o.focal_pool = b.focal_pool;
    o.stage = b.stage;
    o.order = b.order;
    return o;
}

json module_set_json(const ModuleSet& m) {
    std::size_t rand = 0;
    for (const auto& mod : m.modules) rand += mod.rand.size();
    return {{"modules", m.modules.size()},
            {"focal_units", m.focal_units().size()},
            {"randomization_units", rand},
            {"conditioned_units", m.conditioned.size()},
            {"generalized", m.generalized}};
}

json step_json(const StepResult& s, const ExposureSpec& spec) {
    const auto& r = s.result;
    json j = {{"contrast", {s.contrast.low, s.contrast.high}},
              {"levels", {spec.label(s.contrast.low), spec.label(s.contrast.high)}},
              {"pval", num(r.pval)},
              {"t_obs", num(r.t_obs)},
              {"active_focal", r.active_focal_count},
              {"active_modules", r.active_module_count},
              {"dropped_modules", r.dropped_modules},
              {"degenerate", r.degenerate},
              {"conditioned_units", s.conditioned_units},
              {"diagnostics", r.diagnostics}};
    if (!s.module_set.modules.empty()) j["module_set"] = module_set_json(s.module_set);
    return j;
}

json monotone_json(const MonotoneReport& rep, const ExposureSpec& spec) {
    json steps = json::array();
    for (const auto& s : rep.steps) steps.push_back(step_json(s, spec));
    json w = json::array();
    for (double v : rep.combiner_weights) w.push_back(num(v));
    return {{"steps", steps},
            {"pvals", rep.pvals()},
            {"combined_pval", num(rep.combined_pval)},
            {"combiner", to_string(rep.combiner.rule)},
            {"combiner_weights", w},
            {"direction", to_string(rep.direction)},
            {"degenerate_everywhere", rep.degenerate_everywhere()}};
}

json envelope(const std::string& command, const json& cfg, const json& inputs, json results) {
    return {{"schema_version", kSchemaVersion},
            {"command", command},
            {"config", cfg},
            {"inputs", inputs},
            {"seed", get<std::uint64_t>(cfg, "seed")},
            {"results", std::move(results)}};
}

CommandResult cmd_test_monotone(const json& cfg) {
    auto L = load(cfg);
    const auto opts = monotone_options(cfg, L.ds);
    const auto rep = test_monotone(L.ds.net, L.spec, L.ds.design, L.ds.data, opts);
    CommandResult out;
    out.report = envelope("test-monotone", cfg, L.inputs, monotone_json(rep, L.spec));
    out.exit_code = rep.degenerate_everywhere() ? kExitDegenerate : kExitOk;
    return out;
}

CommandResult cmd_aggregate(const json& cfg) {
    auto L = load(cfg);
    const auto opts = monotone_options(cfg, L.ds);
    const auto n = get<std::size_t>(cfg, "constructions");
    const auto agg = aggregate_monotone(L.ds.net, L.spec, L.ds.design, L.ds.data, opts, n);
    json pv = json::array();
    for (double p : agg.pvals) pv.push_back(num(p));
    json results = {{"construction_pvals", pv}, {"construction_seeds", agg.seeds}, {"aggregate_pval", num(agg.aggregate)},
                    {"rule", "min(1, 2 * lower median)"}};
    CommandResult out;
    out.report = envelope("aggregate", cfg, L.inputs, results);
    return out;
}

CommandResult cmd_test_contrast(const json& cfg) {
    auto L = load(cfg);
    const auto seed = get<std::uint64_t>(cfg, "seed");
    const Contrast c{get<int>(cfg, "low"), get<int>(cfg, "high")};
    check_contrast(L.spec, c);
    const auto& ds = L.ds;
    const std::size_t n = ds.net.size();
    ds.data.validate(n);
    if (!std::isfinite(ds.design.log_prob(ds.data.z_obs)))
        throw std::invalid_argument("observed assignment has zero probability under the design");
    const BuildOptions b = build_options(cfg, ds.design, seed);
    const auto mset = build_module_set(ds.net, L.spec, ds.design, ds.design.randomizable(), c, std::vector<bool>(n, false),
                                       PartialAssignment(n, kFree), derive_seed(seed, 0xb1d), b);
    std::vector<double> y = ds.data.y_post;
    const Direction dir = parse_direction(get<std::string>(cfg, "direction"));
    if (dir == Direction::Increasing) y = flip_direction(y);
    CrtOptions crt;
    crt.draws = get<std::size_t>(cfg, "draws");
    if (crt.draws < 1) throw std::invalid_argument("draws must be at least 1");
    crt.seed = derive_seed(seed, 0xc27);
    const auto stat = StatSpec::parse(get<std::string>(cfg, "statistic"));
    const auto res = test_contrast(ds.net, L.spec, ds.design, mset, ds.data.z_obs, y, c, stat,
                                   std::vector<bool>(n, false), crt);
    StepResult step{c, mset, res, 0};
    json results = step_json(step, L.spec);
    results["direction"] = to_string(dir);
    CommandResult out;
    out.report = envelope("test-contrast", cfg, L.inputs, results);
    out.exit_code = res.degenerate ? kExitDegenerate : kExitOk;

    // 20 equal-width bins over the finite draws.
    std::vector<double> finite;
    for (double d : res.draws)
        if (std::isfinite(d)) finite.push_back(d);
    out.histogram_csv.push_back("bin_low,bin_high,count");
    if (!finite.empty()) {
        const auto [lo_it, hi_it] = std::minmax_element(finite.begin(), finite.end());
        const double lo = *lo_it, hi = *hi_it;
        const std::size_t bins = lo == hi ? 1 : 20;
        const double width = lo == hi ? 1.0 : (hi - lo) / bins;
        std::vector<std::size_t> count(bins, 0);
        for (double d : finite) count[std::min(bins - 1, static_cast<std::size_t>((d - lo) / width))]++;
        for (std::size_t k = 0; k < bins; ++k)
            out.histogram_csv.push_back(format_number(lo + k * width) + "," + format_number(lo + (k + 1) * width) + "," +
                                        std::to_string(count[k]));
    }
    return out;
}

CommandResult cmd_select(const json& cfg) {
    auto L = load(cfg);
    const auto seed = get<std::uint64_t>(cfg, "seed");
    const BuildOptions b = build_options(cfg, L.ds.design, seed);
    const auto sel = select_module_sets(L.ds.net, L.spec, L.ds.design, get<std::size_t>(cfg, "candidates"),
                                        get<std::size_t>(cfg, "mc_draws"), seed, {}, b);
    json chain = json::array();
    for (const auto& m : sel.module_sets) chain.push_back(module_set_json(m));
    json scores = json::array();
    for (double s : sel.scores) scores.push_back(num(s));
    json results = {{"chosen", sel.chosen}, {"chosen_seed", sel.chosen_seed}, {"scores", scores}, {"module_sets", chain}};
    CommandResult out;
    out.report = envelope("select-modulesets", cfg, L.inputs, results);
    return out;
}

PartitionSpec partition_spec(const json& cfg, std::uint64_t seed) {
    PartitionSpec p;
    const auto q = get<std::string>(cfg, "quality");
    if (q == "modularity") p.quality = PartitionQuality::Modularity;
    else if (q == "cpm") p.quality = PartitionQuality::CPM;
    else throw std::invalid_argument("unknown partition quality '" + q + "' (expected modularity or cpm)");
    p.resolution = get<double>(cfg, "resolution");
    p.beta = get<double>(cfg, "beta");
    p.iterations = get<std::size_t>(cfg, "iterations");
    p.seed = seed;
    p.validate();
    return p;
}

std::vector<int> relabel(const std::vector<int>& labels) {
    std::map<int, int> seen;
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = seen.emplace(labels[i], static_cast<int>(seen.size())).first;
        out[i] = it->second;
    }
    return out;
}

std::size_t community_count(const std::vector<int>& labels) {
    return labels.empty() ? 0 : static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end()) + 1);
}

CommandResult cmd_partition(const json& cfg) {
    auto L = load(cfg);
    const auto seed = get<std::uint64_t>(cfg, "seed");
    const auto spec = partition_spec(cfg, seed);
    const auto labels = detect_communities(L.ds.net, spec);
    json results = {{"communities", community_count(labels)},
                    {"modularity", num(modularity(L.ds.net, labels, spec.quality == PartitionQuality::Modularity ? spec.resolution : 1.0))},
                    {"labels", labels}};
    CommandResult out;
    out.report = envelope("partition", cfg, L.inputs, results);
    std::ostringstream os;
    write_labels(os, L.ds, labels);
    out.labels_csv = os.str();
    return out;
}

CommandResult cmd_general(const json& cfg) {
    auto L = load(cfg);
    const auto seed = get<std::uint64_t>(cfg, "seed");
    const auto& ds = L.ds;
    std::vector<int> labels;
    if (auto file = opt_string(cfg, "labels_file")) {
        labels = relabel(read_labels(*file, ds));
        L.inputs["labels_file"] = file_digest(*file);
    } else {
        labels = detect_communities(ds.net, partition_spec(cfg, derive_seed(seed, 1)));
    }
    const BernoulliSampler sampler(ds.design);
    const auto metric = parse_informativeness(get<std::string>(cfg, "metric"));
    const auto problem = informativeness_problem(ds.net, L.spec, sampler, labels, get<std::size_t>(cfg, "n_rand_informativeness"),
                                                 metric, derive_seed(seed, 2));
    const auto m = get<std::string>(cfg, "assignment");
    AssignmentMethod method = AssignmentMethod::Auto;
    if (m == "exact") method = AssignmentMethod::Exact;
    else if (m == "heuristic") method = AssignmentMethod::Heuristic;
    else if (m != "auto") throw std::invalid_argument("unknown assignment method '" + m + "' (expected auto, exact or heuristic)");
    const auto assignment = assign_communities(problem, method);
    const auto part = parts_from_assignment(labels, assignment.hypothesis);

    GeneralTestOptions o;
    o.stat = StatSpec::parse(get<std::string>(cfg, "statistic"));
    o.combiner = combiner_spec(cfg, seed);
    o.n_rand = get<std::size_t>(cfg, "n_rand");
    o.draws = get<std::size_t>(cfg, "draws");
    o.seed = derive_seed(seed, 3);
    o.direction = parse_direction(get<std::string>(cfg, "direction"));
    if (o.n_rand < 1) throw std::invalid_argument("n_rand must be at least 1");
    const auto rep = test_monotone_general(ds.net, L.spec, sampler, part, ds.data, o);

    json results = monotone_json(rep, L.spec);
    std::vector<std::size_t> part_sizes(L.spec.size(), 0);
    for (int p : part) part_sizes[static_cast<std::size_t>(p)]++;
    json scores = json::array();
    for (double s : assignment.scores) scores.push_back(num(s));
    results["partition"] = {{"communities", community_count(labels)},
                            {"assignment_method", assignment.method},
                            {"hypothesis_of_community", assignment.hypothesis},
                            {"hypothesis_scores", scores},
                            {"objective", num(assignment.objective)},
                            {"part_sizes", part_sizes}};
    CommandResult out;
    out.report = envelope("test-monotone-general", cfg, L.inputs, results);
    out.exit_code = rep.degenerate_everywhere() ? kExitDegenerate : kExitOk;
    return out;
}

CommandResult cmd_grouping(const json& cfg) {
    auto L = load(cfg);
    const auto& ds = L.ds;
    ds.data.validate(ds.net.size());
    const auto r = aic_grouping_test(ds.net, get<std::size_t>(cfg, "g_low"), get<std::size_t>(cfg, "g_high"), ds.design,
                                     ds.data.z_obs, ds.data.y_post, get<std::size_t>(cfg, "draws"),
                                     get<std::uint64_t>(cfg, "seed"));
    json results = {{"pval", num(r.pval)}, {"t_obs", num(r.t_obs)}, {"draws", r.draws}, {"exact", r.exact}};
    CommandResult out;
    out.report = envelope("check-grouping", cfg, L.inputs, results);
    return out;
}

std::string param_label(const DgpConfig& d) {
    switch (d.kind) {
        case DgpKind::DGP3: return "theta=" + format_number(d.theta);
        case DgpKind::DGP4: return "r=" + format_number(d.radius);
        default: return "tau=" + format_number(d.tau);
    }
}

CommandResult cmd_simulate(const json& cfg) {
    const auto seed = get<std::uint64_t>(cfg, "seed");
    const json net_cfg = get<json>(cfg, "network");
    SyntheticConfig sc;
    sc.n = get<std::size_t>(net_cfg, "n");
    sc.hotspot_share = get<double>(net_cfg, "hotspot_share");
    sc.p_treat = get<double>(net_cfg, "p_treat");
    sc.radius = get<double>(net_cfg, "radius");
    sc.side = get<double>(net_cfg, "side");
    sc.new_cluster_prob = get<double>(net_cfg, "new_cluster_prob");
    sc.cluster_spread = get<double>(net_cfg, "cluster_spread");
    sc.seed = get<std::uint64_t>(net_cfg, "seed");
    const auto syn = make_synthetic_network(sc);
    const auto spec = ExposureSpec::parse(get<std::string>(cfg, "levels"));
    const json gamma = get<json>(cfg, "gamma");

    StudyOptions so;
    so.reps = get<std::size_t>(cfg, "reps");
    so.draws = get<std::size_t>(cfg, "draws");
    so.alpha = get<double>(cfg, "alpha");
    so.seed = seed;
    so.direction = parse_direction(get<std::string>(cfg, "direction"));
    so.focal_pool = focal_pool(get<std::string>(cfg, "focal_pool"), syn.design);
    so.order = parse_order(get<std::string>(cfg, "order"));
    so.stage = stages(cfg, syn.design, get<std::uint64_t>(cfg, "stage_seed"));
    if (so.reps < 1 || so.draws < 1) throw std::invalid_argument("reps and draws must be at least 1");
    for (const auto& c : get<json>(cfg, "cells")) {
        StudyCell cell;
        cell.dgp.kind = parse_dgp_kind(get<std::string>(c, "dgp"));
        cell.dgp.tau = c.value("tau", 0.0);
        cell.dgp.theta = c.value("theta", 0.0);
        cell.dgp.radius = c.value("radius", 0.0);
        cell.dgp.gamma = {get<double>(gamma, "shape"), get<double>(gamma, "rate")};
        cell.param = c.contains("label") ? get<std::string>(c, "label") : param_label(cell.dgp);
        so.cells.push_back(cell);
    }
    for (const auto& m : get<json>(cfg, "methods")) {
        StudyMethod method;
        const auto stat = get<std::string>(m, "statistic");
        if (stat == "ols") {
            method.ols = true;
        } else {
            method.stat = StatSpec::parse(stat);
            method.combiner = parse_combine_rule(m.value("combiner", std::string("fisher")));
        }
        so.methods.push_back(method);
    }
    if (so.cells.empty() || so.methods.empty()) throw std::invalid_argument("a study needs cells and methods");
    const auto rows = run_study(syn.net, spec, syn.design, so);

    json table = json::array();
    for (const auto& r : rows)
        table.push_back({{"dgp", r.dgp}, {"param", r.param}, {"method", r.method}, {"statistic", r.statistic},
                         {"combiner", r.combiner}, {"rejection_rate", r.rejection_rate}, {"mc_se", r.mc_se}, {"reps", r.reps}});
    const std::size_t hot = static_cast<std::size_t>(std::count(syn.hotspot.begin(), syn.hotspot.end(), true));
    json results = {{"network", {{"units", syn.net.size()}, {"edges", syn.net.edge_count()}, {"hotspots", hot}}},
                    {"rows", table}};
    CommandResult out;
    out.report = envelope("simulate", cfg, json::object(), results);
    std::ostringstream os;
    write_study_csv(os, rows);
    out.study_csv = os.str();
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::invalid_argument("cannot write '" + path + "'");
    f << text;
}

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::invalid_argument("cannot read '" + path + "'");
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

}  // namespace

json default_config(const std::string& command) {
    if (command == "simulate") {
        return {{"seed", 1},
                {"levels", "0,1,2,>=3"},
                {"network",
                 {{"n", 2000}, {"hotspot_share", 0.05}, {"p_treat", 0.4}, {"radius", 1.0}, {"side", 40.0},
                  {"new_cluster_prob", 0.17}, {"cluster_spread", 1.5}, {"seed", 7}}},
                {"gamma", {{"shape", 2.0}, {"rate", 2.0}}},
                {"cells", json::array({{{"dgp", "DGP1"}, {"tau", 0.0}}})},
                {"methods", json::array({{{"statistic", "dim"}, {"combiner", "fisher"}}, {{"statistic", "ols"}}})},
                {"reps", 200},
                {"draws", 500},
                {"alpha", 0.05},
                {"direction", "decreasing"},
                {"focal_pool", "nonrandomizable"},
                {"stage_shares", {0.4, 0.37}},
                {"stage_seed", 11},
                {"order", "fewest-free"}};
    }
    json cfg = data_defaults();
    if (command == "test-monotone" || command == "aggregate") {
        merge(cfg, engine_defaults());
        if (command == "aggregate") cfg["constructions"] = 9;
    } else if (command == "test-contrast") {
        merge(cfg, engine_defaults());
        for (const char* k : {"combiner", "combiner_weights", "epsilon", "adjust", "relax"}) cfg.erase(k);
        cfg["low"] = 0;
        cfg["high"] = 1;
    } else if (command == "select-modulesets") {
        merge(cfg, {{"candidates", 10}, {"mc_draws", 200}, {"generalized", false}, {"focal_pool", "all"},
                    {"stage_shares", json::array()}, {"order", "random"}});
    } else if (command == "partition") {
        merge(cfg, {{"quality", "modularity"}, {"resolution", 1.0}, {"beta", 0.01}, {"iterations", 200}});
    } else if (command == "test-monotone-general") {
        merge(cfg, {{"statistic", "dim"}, {"combiner", "fisher"}, {"combiner_weights", json::array()}, {"epsilon", 1e-4},
                    {"draws", 10000}, {"n_rand", 10000}, {"direction", "decreasing"}, {"labels_file", nullptr},
                    {"quality", "modularity"}, {"resolution", 1.0}, {"beta", 0.01}, {"iterations", 200},
                    {"metric", "density"}, {"n_rand_informativeness", 1000}, {"assignment", "auto"}});
    } else if (command == "check-grouping") {
        merge(cfg, {{"g_low", 2}, {"g_high", 3}, {"draws", 2000}});
    } else {
        throw std::invalid_argument("unknown command '" + command + "'");
    }
    return cfg;
}

CommandResult run_command(const std::string& command, const json& config) {
    if (command == "test-monotone") return cmd_test_monotone(config);
    if (command == "test-monotone-general") return cmd_general(config);
    if (command == "test-contrast") return cmd_test_contrast(config);
    if (command == "select-modulesets") return cmd_select(config);
    if (command == "aggregate") return cmd_aggregate(config);
    if (command == "partition") return cmd_partition(config);
    if (command == "simulate") return cmd_simulate(config);
    if (command == "check-grouping") return cmd_grouping(config);
    throw std::invalid_argument("unknown command '" + command + "'");
}

const json& report_results(const json& report) {
    auto it = report.find("results");
    if (it == report.end()) throw std::invalid_argument("report has no results");
    return *it;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Randomization tests of monotone spillover hypotheses on networks"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "Cap on worker threads (0: hardware default)");

    struct Sub {
        CLI::App* app;
        json cfg;
        std::string output, histogram, csv, labels_out, config_file;
    };
    std::map<std::string, Sub> subs;
    // Options write straight into the config; CLI11 stores strings, converted below.
    std::map<std::string, std::map<std::string, std::string>> raw;

    auto add = [&](const std::string& name, const std::string& desc) -> Sub& {
        Sub& s = subs[name];
        s.app = app.add_subcommand(name, desc);
        s.cfg = default_config(name);
        s.app->add_option("-o,--output", s.output, "Report path (default: stdout)");
        for (auto it = s.cfg.begin(); it != s.cfg.end(); ++it) {
            if (it->is_object() || (name == "simulate" && it.key() != "seed" && it.key() != "reps" && it.key() != "draws"))
                continue;
            std::string flag = "--" + it.key();
            std::replace(flag.begin(), flag.end(), '_', '-');
            std::string key = it.key();
            if (it->is_boolean()) {
                s.app->add_flag_callback(flag, [&s, key] { s.cfg[key] = true; }, "Set " + key);
            } else {
                s.app->add_option(flag, raw[name][key], "Default: " + it->dump());
            }
        }
        return s;
    };
    add("test-monotone", "Sequential test of the monotone null over adjacent contrasts");
    add("test-monotone-general", "General-design test on a community partition with biclique tests");
    auto& tc = add("test-contrast", "Randomization test of a single contrast");
    tc.app->add_option("--histogram", tc.histogram, "CSV histogram of the randomization draws");
    add("select-modulesets", "Choose a module-set chain by expected active focal units");
    add("aggregate", "Twice-median aggregate over independent constructions");
    auto& pa = add("partition", "Community detection on the network");
    pa.app->add_option("--labels-out", pa.labels_out, "CSV of unit,label");
    auto& si = add("simulate", "Rejection-rate study on a synthetic network");
    si.app->add_option("--config", si.config_file, "Study configuration (JSON), merged over the defaults");
    si.app->add_option("--csv", si.csv, "Rejection table (CSV)");
    add("check-grouping", "AIC randomization check of the exposure grouping");

    std::string rerun_report, rerun_output;
    bool verify = false;
    auto* rerun = app.add_subcommand("rerun", "Run again from a report's embedded configuration");
    rerun->add_option("report", rerun_report, "Report to re-run")->required();
    rerun->add_option("-o,--output", rerun_output, "Report path (default: stdout)");
    rerun->add_flag("--verify", verify, "Exit 1 unless the results match the original report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }
    set_max_threads(threads);

    try {
        if (rerun->parsed()) {
            const json old = json::parse(read_text(rerun_report));
            if (old.value("schema_version", 0) != kSchemaVersion)
                throw std::invalid_argument("unsupported report schema version");
            const auto res = run_command(get<std::string>(old, "command"), get<json>(old, "config"));
            const std::string text = res.report.dump(2) + "\n";
            if (rerun_output.empty()) out << text;
            else write_text(rerun_output, text);
            if (verify) {
                const bool same = report_results(res.report) == report_results(old);
                err << (same ? "results identical\n" : "results differ\n");
                if (!same) return kExitMismatch;
            }
            return res.exit_code;
        }
        for (auto& [name, s] : subs) {
            if (!s.app->parsed()) continue;
            if (!s.config_file.empty()) merge(s.cfg, json::parse(read_text(s.config_file)));
            for (const auto& [key, value] : raw[name]) {
                if (value.empty()) continue;
                json& slot = s.cfg[key];
                if (slot.is_string() || key == "nodes" || key == "edges" || key == "labels_file") {
                    slot = value;
                } else if (slot.is_array()) {
                    json arr = json::array();
                    std::stringstream ss(value);
                    std::string part;
                    while (std::getline(ss, part, ',')) arr.push_back(std::stod(part));
                    slot = arr;
                } else if (slot.is_number_float() || key == "radius") {
                    slot = std::stod(value);
                } else {
                    if (value.find_first_not_of("0123456789") != std::string::npos)
                        throw std::invalid_argument("--" + key + " expects a nonnegative integer");
                    slot = std::stoull(value);
                }
            }
            auto res = run_command(name, s.cfg);
            const std::string text = res.report.dump(2) + "\n";
            if (s.output.empty()) out << text;
            else write_text(s.output, text);
            if (!s.histogram.empty()) {
                std::string h;
                for (const auto& line : res.histogram_csv) h += line + "\n";
                write_text(s.histogram, h);
            }
            if (!s.csv.empty()) write_text(s.csv, res.study_csv);
            if (!s.labels_out.empty()) write_text(s.labels_out, res.labels_csv);
            if (res.exit_code == kExitDegenerate) err << "every contrast was degenerate\n";
            return res.exit_code;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitValidation;
}

}  // namespace spillover::cli
