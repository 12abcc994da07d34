#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lorenz/map.hpp"

namespace lorenz {

class NoSuchBranch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NoRootInBranch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The word pair (w-, w+) of a renormalization. Monotone types are (0 1^a, 1 0^b).
struct CombinatorialType {
    std::string omega_minus;
    std::string omega_plus;

    static CombinatorialType monotone(int a, int b);

    bool is_monotone() const;
    int a() const { return static_cast<int>(omega_minus.size()) - 1; }
    int b() const { return static_cast<int>(omega_plus.size()) - 1; }
    std::string to_string() const;

    bool operator==(const CombinatorialType&) const = default;
};

struct RenormResult {
    /// C = [p, q] in the coordinates of the map that was renormalized.
    Interval window;
    long left_return = 0;   // a + 1
    long right_return = 0;  // b + 1
    CombinatorialType type;
    IteratedMapDescriptor renormalized;
    /// |f^{a+1}(p) - p| and |f^{b+1}(q) - q|, own coordinates.
    double left_residual = 0.0;
    double right_residual = 0.0;
    /// [p0, q0]: the two preimages of c.
    Interval preimage_bounds;
    /// Critical values of the renormalization, its own coordinates.
    double rescaled_left_value = 0.0;
    double rescaled_right_value = 0.0;
    double rescaled_singular_point = 0.0;
};

enum class RenormFailure {
    non_triviality,
    branch_missing,
    root_missing,
    return_condition,
    disjointness,
    containment,
    degenerate_window,
    collision,
};

std::string to_string(RenormFailure f);

struct NotRenormalizable {
    RenormFailure reason;
    std::string detail;
};

using RenormOutcome = std::variant<RenormResult, NotRenormalizable>;

/// Closure of the maximal interval whose first |word| iterates follow `word`.
Interval find_branch(const LorenzMap& map, const std::string& word);

/// Fixed point of f^{|word|} on the branch with itinerary `word`.
double find_periodic_boundary(const LorenzMap& map, const std::string& word);

/// Iterate along a prescribed itinerary; a point on c takes the side the word names.
double iterate_word(const LorenzMap& map, double x, const std::string& word);

RenormOutcome find_renorm_interval(const LorenzMap& map, int a, int b);

/// Pf on C: f^{a+1} on C-, f^{b+1} on C+, by direct iteration of the map.
class PrerenormalizedMap {
public:
    PrerenormalizedMap(LorenzMap map, RenormResult result)
        : map_(std::move(map)), result_(std::move(result)) {}

    const Interval& window() const { return result_.window; }
    double eval(double x, Side side = Side::none) const;

private:
    LorenzMap map_;
    RenormResult result_;
};

PrerenormalizedMap prerenormalization(const LorenzMap& map, const RenormResult& result);

/// Rf = A^{-1} o Pf o A as a descriptor over the same standard-family base.
IteratedMapDescriptor renormalize(const LorenzMap& map, const RenormResult& result);

struct DetectedType {
    CombinatorialType type;
    RenormResult result;
};

/// Smallest monotone type with |w-| + |w+| <= max_len (ties: smaller a first).
std::variant<DetectedType, NotRenormalizable> detect_type(const LorenzMap& map, int max_len);

struct MonotoneStep {
    int a = 1;
    int b = 1;
};

/// Parse "2,2;2,2;1,3" or the shorthand "2,2x4".
std::vector<MonotoneStep> parse_type_sequence(const std::string& text);

/// Kneading word of c- (minus) or c+ under any map renormalizable along `types`,
/// obtained by substituting 0 -> w-, 1 -> w+ level by level. Truncated to max_len.
std::string target_kneading(const std::vector<MonotoneStep>& types, bool minus, std::size_t max_len);

struct KneadingComparison {
    /// Sign of itinerary(critical value) - target in the lexicographic order, 0 if they agree.
    int sign = 0;
    /// Number of leading symbols that agree.
    std::size_t agree = 0;
    /// The orbit reached c before the words diverged.
    bool inconclusive = false;
};

/// Compare the itinerary of the critical value on `side` with target[1..].
KneadingComparison compare_kneading(const StandardFamilyMap& f, Side side, const std::string& target);

struct TuneOptions {
    /// Certifications allowed before giving up.
    std::int64_t budget = 100000;
    /// Search stops once the parameter rectangle is this small.
    double target_diameter = 1e-10;
    /// Extra levels of the last type the search keeps steering towards (at least 2 are used).
    int lookahead = 6;
    int threads = 1;
};

struct TuneResult {
    double u = 0.0;
    double v = 0.0;
    double diameter = 0.0;
    int certified_depth = 0;
    std::int64_t certifications = 0;
    std::vector<RenormResult> cascade;
    /// Deepest prefix of the extended target the final point satisfies.
    int steered_depth = 0;
};

class TuningFailed : public std::runtime_error {
public:
    TuningFailed(int depth, TuneResult partial)
        : std::runtime_error("tuning failed at depth " + std::to_string(depth + 1)),
          depth_(depth),
          partial_(std::move(partial)) {}
    int achieved_depth() const { return depth_; }
    const TuneResult& partial() const { return partial_; }

private:
    int depth_;
    TuneResult partial_;
};

/// Renormalize repeatedly along `types`, stopping at the first failure.
struct Cascade {
    std::vector<RenormResult> levels;
    NotRenormalizable failure{RenormFailure::non_triviality, ""};
    bool complete = false;
};
Cascade certify_cascade(const LorenzMap& map, const std::vector<MonotoneStep>& types);

TuneResult tune_parameters(double c, double alpha, const std::vector<MonotoneStep>& target,
                           const TuneOptions& options = {});

}  // namespace lorenz
