#include "spillover/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace spillover {

bool Network::adjacent(std::size_t i, std::size_t j) const {
    auto nb = neighbors(i);
    return std::binary_search(nb.begin(), nb.end(), static_cast<UnitId>(j));
}

std::vector<std::pair<UnitId, UnitId>> Network::edges() const {
    std::vector<std::pair<UnitId, UnitId>> out;
    out.reserve(edge_count());
    for (std::size_t i = 0; i < size(); ++i)
        for (UnitId j : neighbors(i))
            if (j > i) out.emplace_back(static_cast<UnitId>(i), j);
    return out;
}

void Network::set_coordinates(std::vector<Point> coords) {
    if (!coords.empty() && coords.size() != size())
        throw std::invalid_argument("coordinate count does not match network size");
    coords_ = std::move(coords);
}

Network Network::from_adjacency(std::vector<std::vector<UnitId>> lists) {
    Network net;
    const std::size_t n = lists.size();
    net.offsets_.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        auto& l = lists[i];
        std::sort(l.begin(), l.end());
        l.erase(std::unique(l.begin(), l.end()), l.end());
        for (UnitId j : l) {
            if (j >= n) throw std::invalid_argument("neighbor id out of range");
            if (j == i) throw std::invalid_argument("self-loop at unit " + std::to_string(i));
        }
        net.offsets_[i + 1] = net.offsets_[i] + l.size();
    }
    net.adj_.reserve(net.offsets_[n]);
    for (auto& l : lists) net.adj_.insert(net.adj_.end(), l.begin(), l.end());
    for (std::size_t i = 0; i < n; ++i)
        for (UnitId j : net.neighbors(i))
            if (!net.adjacent(j, i)) throw std::invalid_argument("adjacency is not symmetric");
    return net;
}

Network build_network(std::size_t n, const std::vector<std::pair<UnitId, UnitId>>& edges) {
    std::vector<std::vector<UnitId>> lists(n);
    for (auto [a, b] : edges) {
        if (a >= n || b >= n)
            throw std::invalid_argument("edge (" + std::to_string(a) + "," + std::to_string(b) +
                                        ") references a unit outside [0," + std::to_string(n) + ")");
        if (a == b) throw std::invalid_argument("self-loop at unit " + std::to_string(a));
        lists[a].push_back(b);
        lists[b].push_back(a);
    }
    return Network::from_adjacency(std::move(lists));
}

Network build_network(const std::vector<Point>& coords, double radius,
                      const std::function<bool(UnitId, UnitId)>& restrict_pairs) {
    if (!(radius > 0.0)) throw std::invalid_argument("radius must be positive");
    const std::size_t n = coords.size();
    // Bucket points on a grid of cell size radius so only adjacent cells are compared.
    double minx = 0, miny = 0;
    if (n > 0) {
        minx = coords[0].x;
        miny = coords[0].y;
        for (const auto& p : coords) {
            minx = std::min(minx, p.x);
            miny = std::min(miny, p.y);
        }
    }
    auto cell_of = [&](const Point& p) {
        return std::pair<long long, long long>{static_cast<long long>(std::floor((p.x - minx) / radius)),
                                               static_cast<long long>(std::floor((p.y - miny) / radius))};
    };
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::vector<std::pair<long long, long long>> cells(n);
    for (std::size_t i = 0; i < n; ++i) cells[i] = cell_of(coords[i]);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return cells[a] != cells[b] ? cells[a] < cells[b] : a < b;
    });
    std::vector<std::pair<long long, long long>> sorted_cells(n);
    for (std::size_t k = 0; k < n; ++k) sorted_cells[k] = cells[order[k]];

    const double r2 = radius * radius;
    std::vector<std::vector<UnitId>> lists(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (long long dx = -1; dx <= 1; ++dx) {
            for (long long dy = -1; dy <= 1; ++dy) {
                std::pair<long long, long long> c{cells[i].first + dx, cells[i].second + dy};
                auto lo = std::lower_bound(sorted_cells.begin(), sorted_cells.end(), c);
                for (auto it = lo; it != sorted_cells.end() && *it == c; ++it) {
                    const std::size_t j = order[static_cast<std::size_t>(it - sorted_cells.begin())];
                    if (j <= i) continue;
                    const double ddx = coords[i].x - coords[j].x, ddy = coords[i].y - coords[j].y;
                    if (ddx * ddx + ddy * ddy > r2) continue;
                    if (restrict_pairs && !restrict_pairs(static_cast<UnitId>(i), static_cast<UnitId>(j))) continue;
                    lists[i].push_back(static_cast<UnitId>(j));
                    lists[j].push_back(static_cast<UnitId>(i));
                }
            }
        }
    }
    Network net = Network::from_adjacency(std::move(lists));
    net.set_coordinates(coords);
    return net;
}

ExposureSpec::ExposureSpec(std::size_t exact_count, bool terminal) : exact_count_(exact_count), terminal_(terminal) {
    if (size() == 0) throw std::invalid_argument("exposure spec needs at least one level");
}

ExposureSpec ExposureSpec::parse(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        if (ch == ',') {
            tokens.push_back(cur);
            cur.clear();
        } else if (ch != ' ' && ch != '{' && ch != '}') {
            cur.push_back(ch);
        }
    }
    tokens.push_back(cur);
    std::size_t exact = 0;
    bool terminal = false;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        std::string tok = tokens[t];
        if (!tok.empty() && tok.front() == '[' && tok.back() == ']') tok = tok.substr(1, tok.size() - 2);
        if (tok.rfind(">=", 0) == 0) {
            if (t + 1 != tokens.size()) throw std::invalid_argument("terminal level must be last: " + std::string(text));
            std::size_t c = 0;
            try {
                c = std::stoul(tok.substr(2));
            } catch (const std::exception&) {
                throw std::invalid_argument("bad exposure level '" + tokens[t] + "'");
            }
            if (c != exact) throw std::invalid_argument("terminal threshold must follow the exact levels: " + std::string(text));
            terminal = true;
        } else {
            std::size_t c = 0;
            try {
                std::size_t pos = 0;
                c = std::stoul(tok, &pos);
                if (pos != tok.size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw std::invalid_argument("bad exposure level '" + tokens[t] + "'");
            }
            if (c != exact) throw std::invalid_argument("exact levels must be contiguous from 0: " + std::string(text));
            ++exact;
        }
    }
    return ExposureSpec(exact, terminal);
}

int ExposureSpec::level_of(std::size_t count) const {
    if (count < exact_count_) return static_cast<int>(count);
    return terminal_ ? static_cast<int>(exact_count_) : kUnmapped;
}

std::string ExposureSpec::label(std::size_t level) const {
    if (level < exact_count_) return std::to_string(level);
    return ">=" + std::to_string(exact_count_);
}

std::string ExposureSpec::to_string() const {
    std::ostringstream os;
    for (std::size_t k = 0; k < size(); ++k) os << (k ? "," : "") << label(k);
    return os.str();
}

void check_contrast(const ExposureSpec& spec, const Contrast& c) {
    if (c.low < 0 || c.high <= c.low || static_cast<std::size_t>(c.high) >= spec.size())
        throw std::invalid_argument("invalid contrast (" + std::to_string(c.low) + "," + std::to_string(c.high) + ")");
}

std::size_t raw_exposure(const Network& net, std::span<const std::uint8_t> z, std::size_t i) {
    std::size_t c = 0;
    for (UnitId j : net.neighbors(i)) c += z[j] ? 1 : 0;
    return c;
}

int exposure(const Network& net, const ExposureSpec& spec, std::span<const std::uint8_t> z, std::size_t i) {
    return spec.level_of(raw_exposure(net, z, i));
}

ExposureBounds exposure_bounds(const Network& net, const ExposureSpec& spec, std::size_t i,
                               const PartialAssignment& fixed, const std::vector<bool>& randomizable,
                               std::span<const double> probs) {
    ExposureBounds b;
    for (UnitId j : net.neighbors(i)) {
        if (fixed[j] != kFree) {
            b.base += fixed[j] ? 1 : 0;
        } else if (!probs.empty() && probs[j] <= 0.0) {
        } else if (!probs.empty() && probs[j] >= 1.0) {
            b.base += 1;
        } else if (randomizable[j]) {
            ++b.free;
        } else {
            ++b.uncontrolled;
        }
    }
    auto bound_level = [&](std::size_t count) {
        const int l = spec.level_of(count);
        return l == kUnmapped ? static_cast<int>(spec.size()) : l;
    };
    b.none = bound_level(b.base);
    b.all = bound_level(b.base + b.free + b.uncontrolled);
    return b;
}

void ObservedData::validate(std::size_t n) const {
    if (z_obs.size() != n) throw std::invalid_argument("z_obs length does not match network size");
    if (y_post.size() != n) throw std::invalid_argument("y_post length does not match network size");
    if (y_pre && y_pre->size() != n) throw std::invalid_argument("y_pre length does not match network size");
    if (!covariates.empty() && covariates.size() != n)
        throw std::invalid_argument("covariate rows do not match network size");
    for (auto v : z_obs)
        if (v > 1) throw std::invalid_argument("z_obs must be binary");
}

PartialAssignment pin_units(std::size_t n, std::span<const std::uint8_t> z, const std::vector<bool>& mask) {
    PartialAssignment out(n, kFree);
    for (std::size_t i = 0; i < n; ++i)
        if (mask[i]) out[i] = static_cast<std::int8_t>(z[i]);
    return out;
}

}  // namespace spillover
