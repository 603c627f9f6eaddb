#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace spillover {

using UnitId = std::uint32_t;
using Assignment = std::vector<std::uint8_t>;
using UnitSet = std::vector<UnitId>;  // sorted, unique

// Per-unit pinned value: -1 free, 0 control, 1 treated.
using PartialAssignment = std::vector<std::int8_t>;
inline constexpr std::int8_t kFree = -1;

inline constexpr int kUnmapped = -1;

struct Point {
    double x = 0.0;
    double y = 0.0;
};

class Network {
public:
    Network() = default;

    std::size_t size() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
    std::span<const UnitId> neighbors(std::size_t i) const {
        return {adj_.data() + offsets_[i], adj_.data() + offsets_[i + 1]};
    }
    std::size_t degree(std::size_t i) const { return offsets_[i + 1] - offsets_[i]; }
    std::size_t edge_count() const { return adj_.size() / 2; }
    bool adjacent(std::size_t i, std::size_t j) const;
    std::vector<std::pair<UnitId, UnitId>> edges() const;

    bool has_coordinates() const { return !coords_.empty(); }
    const std::vector<Point>& coordinates() const { return coords_; }
    void set_coordinates(std::vector<Point> coords);

    static Network from_adjacency(std::vector<std::vector<UnitId>> lists);

private:
    std::vector<std::size_t> offsets_;
    std::vector<UnitId> adj_;
    std::vector<Point> coords_;
};

// Throws std::invalid_argument on self-loops or out-of-range ids; duplicates are collapsed.
Network build_network(std::size_t n, const std::vector<std::pair<UnitId, UnitId>>& edges);

// Edge iff d(i,j) <= radius and restrict_pairs(i,j) holds (when given).
Network build_network(const std::vector<Point>& coords, double radius,
                      const std::function<bool(UnitId, UnitId)>& restrict_pairs = {});

// Ordered exposure levels: exact counts 0..exact_count-1, optionally followed by a terminal
// group collecting every count >= exact_count.
class ExposureSpec {
public:
    ExposureSpec() = default;
    ExposureSpec(std::size_t exact_count, bool terminal);

    // Accepts e.g. "0,1,2,>=3" or "0,1,2,[>=3]".
    static ExposureSpec parse(std::string_view text);

    std::size_t size() const { return exact_count_ + (terminal_ ? 1 : 0); }
    std::size_t exact_count() const { return exact_count_; }
    bool terminal() const { return terminal_; }
    int level_of(std::size_t count) const;
    std::size_t min_count(std::size_t level) const { return level; }
    std::string label(std::size_t level) const;
    std::string to_string() const;

    std::optional<double> radius;

    friend bool operator==(const ExposureSpec& a, const ExposureSpec& b) {
        return a.exact_count_ == b.exact_count_ && a.terminal_ == b.terminal_ && a.radius == b.radius;
    }

private:
    std::size_t exact_count_ = 0;
    bool terminal_ = false;
};

// Pair of level indices (low, high) with low < high.
struct Contrast {
    int low = 0;
    int high = 1;
    bool contains(int level) const { return level == low || level == high; }
};

void check_contrast(const ExposureSpec& spec, const Contrast& c);

std::size_t raw_exposure(const Network& net, std::span<const std::uint8_t> z, std::size_t i);
int exposure(const Network& net, const ExposureSpec& spec, std::span<const std::uint8_t> z, std::size_t i);

struct ExposureBounds {
    int none = 0;               // level with every free neighbor in control
    int all = 0;                // level with every free neighbor treated
    std::size_t base = 0;       // treated count contributed by pinned neighbors
    std::size_t free = 0;       // randomizable, unpinned neighbors
    std::size_t uncontrolled = 0;  // unpinned, non-degenerate neighbors outside the randomizable set
};

// Pinned neighbors contribute their value; neighbors with probability 0 (1) contribute control
// (treated) when probs is non-empty; randomizable neighbors vary. Unpinned neighbors outside the
// randomizable set are counted as free for bracketing and reported as uncontrolled. Counts above
// the last exact level without a terminal group report spec.size() as their level.
ExposureBounds exposure_bounds(const Network& net, const ExposureSpec& spec, std::size_t i,
                               const PartialAssignment& fixed, const std::vector<bool>& randomizable,
                               std::span<const double> probs = {});

struct ObservedData {
    Assignment z_obs;
    std::vector<double> y_post;
    std::optional<std::vector<double>> y_pre;
    std::vector<std::vector<double>> covariates;  // per unit, possibly empty
    void validate(std::size_t n) const;
};

PartialAssignment pin_units(std::size_t n, std::span<const std::uint8_t> z, const std::vector<bool>& mask);

}  // namespace spillover
