#pragma once

#include "trendsearch/random.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace trendsearch {

/// A hyperparameter value: integer, real, or categorical label.
using ParamValue = std::variant<std::int64_t, double, std::string>;

std::string to_string(const ParamValue& v);
nlohmann::json to_json(const ParamValue& v);
ParamValue param_value_from_json(const nlohmann::json& j);

enum class ParamKind { Categorical, Integer, Continuous };

/// Active only when the parent is active and holds one of `values`.
struct Condition {
    std::string parent;
    std::vector<ParamValue> values;
};

struct ParamDef {
    std::string name;
    ParamKind kind{ParamKind::Categorical};
    std::vector<ParamValue> choices;  // categorical
    double lo{0.0};                   // integer / continuous bounds, inclusive
    double hi{0.0};
    bool log_scale{false};
    std::optional<Condition> condition;

    bool is_discrete() const { return kind != ParamKind::Continuous; }
    bool contains(const ParamValue& v) const;
};

struct Configuration {
    std::string id;
    std::map<std::string, ParamValue> values;

    bool has(const std::string& name) const { return values.count(name) != 0; }
    const ParamValue& at(const std::string& name) const;
    std::int64_t get_int(const std::string& name) const;
    double get_real(const std::string& name) const;  // accepts integer values too
    std::string get_string(const std::string& name) const;

    /// Equality of assignments; ids are ignored.
    bool same_values(const Configuration& other) const { return values == other.values; }
};

nlohmann::json to_json(const Configuration& c);
Configuration configuration_from_json(const nlohmann::json& j);

class ConfigurationSpace {
public:
    struct Counts {
        std::size_t total{0};
        std::size_t discrete{0};  // categorical + integer
        std::size_t continuous{0};
    };

    ConfigurationSpace() = default;
    /// Validates names, domains and condition ordering; throws SpaceError.
    explicit ConfigurationSpace(std::vector<ParamDef> params);

    const std::vector<ParamDef>& params() const { return params_; }
    std::size_t dimension() const { return params_.size(); }
    const ParamDef& param(const std::string& name) const;
    std::optional<std::size_t> index_of(const std::string& name) const;
    const Counts& counts() const { return counts_; }

    /// Parameter count per sub-space: unconditional parameters that others
    /// depend on are "selector" groups of their own (keyed by name), parameters
    /// hanging off a selector value are keyed by that value, and unconditional
    /// leaf parameters are keyed "shared".
    std::map<std::string, std::size_t> group_counts() const;

    /// Copy with `name` restricted to the single categorical choice `value`.
    ConfigurationSpace pinned(const std::string& name, const ParamValue& value) const;

    /// Canonical document (sorted keys) and its FNV-1a hash.
    nlohmann::json to_json() const;
    std::string canonical() const { return to_json().dump(); }
    std::uint64_t hash() const { return fnv1a(canonical()); }

private:
    std::vector<ParamDef> params_;
    std::unordered_map<std::string, std::size_t> index_;
    Counts counts_;
};

ConfigurationSpace load_space(std::string_view document);
ConfigurationSpace load_space_file(const std::filesystem::path& path);

/// The shipped 24-parameter MLP/LSTM/CNN space.
const ConfigurationSpace& default_space();
std::string_view default_space_document();

/// Topological-order sampling: each parameter is drawn only when its condition
/// holds. The returned id is a content hash.
Configuration sample(const ConfigurationSpace& space, Rng& rng);

/// Human-readable problems with `config`; empty when valid.
std::vector<std::string> validation_errors(const ConfigurationSpace& space, const Configuration& config);
bool is_valid(const ConfigurationSpace& space, const Configuration& config);
/// Throws SpaceError listing every problem.
void validate(const ConfigurationSpace& space, const Configuration& config);

/// Names of parameters whose conditions are satisfied by `config`.
/// Throws SpaceError if `config` assigns a parameter unknown to the space.
std::set<std::string> active_params(const ConfigurationSpace& space, const Configuration& config);

/// Slot value for inactive parameters.
inline constexpr double kInactiveSlot = 0.5;

/// One [0, 1] slot per parameter in space order.
std::vector<double> vectorize(const ConfigurationSpace& space, const Configuration& config);

/// Nearest valid configuration to a slot vector; conditions are re-applied in
/// space order so only active parameters are assigned.
Configuration devectorize(const ConfigurationSpace& space, const std::vector<double>& slots);

std::string content_id(const Configuration& config);

} // namespace trendsearch
