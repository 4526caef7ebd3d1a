#include "trendsearch/configspace.hpp"

#include "trendsearch/default_space.hpp"
#include "trendsearch/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace trendsearch {
namespace {

const char* kind_name(ParamKind k) {
    switch (k) {
    case ParamKind::Categorical: return "categorical";
    case ParamKind::Integer: return "integer";
    case ParamKind::Continuous: return "continuous";
    }
    return "?";
}

ParamKind parse_kind(const std::string& s, const std::string& param) {
    if (s == "categorical") return ParamKind::Categorical;
    if (s == "integer") return ParamKind::Integer;
    if (s == "continuous") return ParamKind::Continuous;
    throw SpaceError("parameter '" + param + "': unknown kind '" + s + "'");
}

bool condition_holds(const Condition& cond, const std::map<std::string, ParamValue>& assigned) {
    const auto it = assigned.find(cond.parent);
    if (it == assigned.end()) return false;
    return std::find(cond.values.begin(), cond.values.end(), it->second) != cond.values.end();
}

double to_unit(const ParamDef& p, double v) {
    if (p.log_scale) return (std::log(v) - std::log(p.lo)) / (std::log(p.hi) - std::log(p.lo));
    return (v - p.lo) / (p.hi - p.lo);
}

double from_unit(const ParamDef& p, double x) {
    const double v = p.log_scale ? std::exp(std::log(p.lo) + x * (std::log(p.hi) - std::log(p.lo)))
                                 : p.lo + x * (p.hi - p.lo);
    return std::clamp(v, p.lo, p.hi);
}

} // namespace

std::string to_string(const ParamValue& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    return nlohmann::json(std::get<double>(v)).dump();
}

nlohmann::json to_json(const ParamValue& v) {
    return std::visit([](const auto& x) { return nlohmann::json(x); }, v);
}

ParamValue param_value_from_json(const nlohmann::json& j) {
    if (j.is_number_integer()) return ParamValue{j.get<std::int64_t>()};
    if (j.is_number_float()) return ParamValue{j.get<double>()};
    if (j.is_string()) return ParamValue{j.get<std::string>()};
    throw SpaceError("parameter value must be a number or string, got " + j.dump());
}

bool ParamDef::contains(const ParamValue& v) const {
    switch (kind) {
    case ParamKind::Categorical:
        return std::find(choices.begin(), choices.end(), v) != choices.end();
    case ParamKind::Integer: {
        const auto* i = std::get_if<std::int64_t>(&v);
        return i != nullptr && static_cast<double>(*i) >= lo && static_cast<double>(*i) <= hi;
    }
    case ParamKind::Continuous: {
        const auto* d = std::get_if<double>(&v);
        return d != nullptr && std::isfinite(*d) && *d >= lo && *d <= hi;
    }
    }
    return false;
}

const ParamValue& Configuration::at(const std::string& name) const {
    const auto it = values.find(name);
    if (it == values.end()) throw SpaceError("configuration has no value for '" + name + "'");
    return it->second;
}

std::int64_t Configuration::get_int(const std::string& name) const {
    const auto& v = at(name);
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
    throw SpaceError("configuration value '" + name + "' is not an integer");
}

double Configuration::get_real(const std::string& name) const {
    const auto& v = at(name);
    if (const auto* d = std::get_if<double>(&v)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    throw SpaceError("configuration value '" + name + "' is not numeric");
}

std::string Configuration::get_string(const std::string& name) const {
    const auto& v = at(name);
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    throw SpaceError("configuration value '" + name + "' is not a string");
}

nlohmann::json to_json(const Configuration& c) {
    nlohmann::json values = nlohmann::json::object();
    for (const auto& [k, v] : c.values) values[k] = to_json(v);
    return nlohmann::json{{"id", c.id}, {"values", values}};
}

Configuration configuration_from_json(const nlohmann::json& j) {
    Configuration c;
    const nlohmann::json& values = j.contains("values") ? j.at("values") : j;
    if (!values.is_object()) throw ParseError("configuration document must be an object");
    if (j.contains("id") && j.at("id").is_string()) c.id = j.at("id").get<std::string>();
    for (const auto& [k, v] : values.items()) {
        if (k == "id" && !j.contains("values")) continue;
        c.values[k] = param_value_from_json(v);
    }
    if (c.id.empty()) c.id = content_id(c);
    return c;
}

std::string content_id(const Configuration& config) {
    Configuration copy = config;
    copy.id.clear();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(to_json(copy).at("values").dump())));
    return buf;
}

ConfigurationSpace::ConfigurationSpace(std::vector<ParamDef> params) : params_(std::move(params)) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const ParamDef& p = params_[i];
        if (p.name.empty()) throw SpaceError("parameter " + std::to_string(i) + " has an empty name");
        if (!index_.emplace(p.name, i).second) throw SpaceError("duplicate parameter name '" + p.name + "'");
        switch (p.kind) {
        case ParamKind::Categorical:
            if (p.choices.empty()) throw SpaceError("parameter '" + p.name + "': empty choice list");
            for (std::size_t a = 0; a < p.choices.size(); ++a) {
                for (std::size_t b = a + 1; b < p.choices.size(); ++b) {
                    if (p.choices[a] == p.choices[b]) {
                        throw SpaceError("parameter '" + p.name + "': duplicate choice " + to_string(p.choices[a]));
                    }
                }
            }
            break;
        case ParamKind::Integer:
            if (!(p.lo < p.hi) || p.lo != std::floor(p.lo) || p.hi != std::floor(p.hi)) {
                throw SpaceError("parameter '" + p.name + "': integer range needs integral lo < hi");
            }
            break;
        case ParamKind::Continuous:
            if (!(p.lo < p.hi) || !std::isfinite(p.lo) || !std::isfinite(p.hi)) {
                throw SpaceError("parameter '" + p.name + "': continuous range needs finite lo < hi");
            }
            if (p.log_scale && !(p.lo > 0.0)) {
                throw SpaceError("parameter '" + p.name + "': log-scale range needs lo > 0");
            }
            break;
        }
        if (p.condition) {
            const auto it = index_.find(p.condition->parent);
            if (it == index_.end() || it->second == i) {
                const bool defined_later =
                    std::any_of(params_.begin() + static_cast<std::ptrdiff_t>(i) + 1, params_.end(),
                                [&](const ParamDef& q) { return q.name == p.condition->parent; });
                throw SpaceError("parameter '" + p.name + "': condition parent '" + p.condition->parent + "' " +
                                 (defined_later ? "is defined after it (conditions must reference earlier parameters)"
                                                : "is not defined"));
            }
            const ParamDef& parent = params_[it->second];
            if (parent.kind == ParamKind::Continuous) {
                throw SpaceError("parameter '" + p.name + "': condition parent '" + parent.name + "' is continuous");
            }
            if (p.condition->values.empty()) {
                throw SpaceError("parameter '" + p.name + "': condition has no values");
            }
            for (const auto& v : p.condition->values) {
                if (!parent.contains(v)) {
                    throw SpaceError("parameter '" + p.name + "': condition value " + to_string(v) +
                                     " is outside the domain of '" + parent.name + "'");
                }
            }
        }
        ++counts_.total;
        if (p.is_discrete()) {
            ++counts_.discrete;
        } else {
            ++counts_.continuous;
        }
    }
}

const ParamDef& ConfigurationSpace::param(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw SpaceError("unknown parameter '" + name + "'");
    return params_[it->second];
}

std::optional<std::size_t> ConfigurationSpace::index_of(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::map<std::string, std::size_t> ConfigurationSpace::group_counts() const {
    std::set<std::string> parents;
    for (const auto& p : params_) {
        if (p.condition) parents.insert(p.condition->parent);
    }
    std::map<std::string, std::size_t> out;
    for (const auto& p : params_) {
        if (!p.condition) {
            ++out[parents.count(p.name) ? p.name : std::string("shared")];
            continue;
        }
        // Walk up to the condition that hangs directly off an unconditional parameter.
        const ParamDef* cur = &p;
        while (param(cur->condition->parent).condition) cur = &param(cur->condition->parent);
        ++out[to_string(cur->condition->values.front())];
    }
    return out;
}

ConfigurationSpace ConfigurationSpace::pinned(const std::string& name, const ParamValue& value) const {
    std::vector<ParamDef> copy = params_;
    auto& p = copy.at(index_.at(name));
    if (!p.contains(value)) {
        throw SpaceError("cannot pin '" + name + "' to " + to_string(value) + ": outside its domain");
    }
    p.kind = ParamKind::Categorical;
    p.choices = {value};
    // Drop parameters that can no longer become active.
    std::vector<ParamDef> kept;
    std::set<std::string> dropped;
    for (auto& q : copy) {
        if (q.condition) {
            if (dropped.count(q.condition->parent)) {
                dropped.insert(q.name);
                continue;
            }
            if (q.condition->parent == name &&
                std::find(q.condition->values.begin(), q.condition->values.end(), value) == q.condition->values.end()) {
                dropped.insert(q.name);
                continue;
            }
            if (q.condition->parent == name) q.condition->values = {value};
        }
        kept.push_back(q);
    }
    return ConfigurationSpace(std::move(kept));
}

nlohmann::json ConfigurationSpace::to_json() const {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : params_) {
        nlohmann::json j;
        j["name"] = p.name;
        j["kind"] = kind_name(p.kind);
        if (p.kind == ParamKind::Categorical) {
            j["domain"] = nlohmann::json::array();
            for (const auto& c : p.choices) j["domain"].push_back(trendsearch::to_json(c));
        } else if (p.kind == ParamKind::Integer) {
            j["domain"] = {static_cast<std::int64_t>(p.lo), static_cast<std::int64_t>(p.hi)};
        } else {
            j["domain"] = {p.lo, p.hi};
        }
        j["log"] = p.log_scale;
        if (p.condition) {
            nlohmann::json values = nlohmann::json::array();
            for (const auto& v : p.condition->values) values.push_back(trendsearch::to_json(v));
            j["condition"] = {{"parent", p.condition->parent}, {"values", values}};
        }
        params.push_back(std::move(j));
    }
    return nlohmann::json{{"version", 1}, {"params", params}};
}

ConfigurationSpace load_space(std::string_view document) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(document);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("space document is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("params") || !doc.at("params").is_array()) {
        throw SpaceError("space document needs a 'params' array");
    }
    std::vector<ParamDef> params;
    for (const auto& jp : doc.at("params")) {
        ParamDef p;
        try {
            p.name = jp.at("name").get<std::string>();
            p.kind = parse_kind(jp.at("kind").get<std::string>(), p.name);
            const auto& domain = jp.at("domain");
            if (!domain.is_array()) throw SpaceError("parameter '" + p.name + "': 'domain' must be an array");
            if (p.kind == ParamKind::Categorical) {
                for (const auto& c : domain) p.choices.push_back(param_value_from_json(c));
            } else {
                if (domain.size() != 2 || !domain[0].is_number() || !domain[1].is_number()) {
                    throw SpaceError("parameter '" + p.name + "': range domain must be [lo, hi]");
                }
                p.lo = domain[0].get<double>();
                p.hi = domain[1].get<double>();
            }
            p.log_scale = jp.value("log", false);
            if (jp.contains("condition") && !jp.at("condition").is_null()) {
                const auto& jc = jp.at("condition");
                Condition c;
                c.parent = jc.at("parent").get<std::string>();
                const auto& vals = jc.at("values");
                if (vals.is_array()) {
                    for (const auto& v : vals) c.values.push_back(param_value_from_json(v));
                } else {
                    c.values.push_back(param_value_from_json(vals));
                }
                p.condition = std::move(c);
            }
        } catch (const nlohmann::json::exception& e) {
            throw SpaceError("malformed parameter entry " + jp.dump() + ": " + e.what());
        }
        params.push_back(std::move(p));
    }
    return ConfigurationSpace(std::move(params));
}

ConfigurationSpace load_space_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open space file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_space(ss.str());
}

std::string_view default_space_document() { return detail::kDefaultSpaceJson; }

const ConfigurationSpace& default_space() {
    static const ConfigurationSpace space = load_space(default_space_document());
    return space;
}

Configuration sample(const ConfigurationSpace& space, Rng& rng) {
    Configuration c;
    for (const auto& p : space.params()) {
        if (p.condition && !condition_holds(*p.condition, c.values)) continue;
        switch (p.kind) {
        case ParamKind::Categorical: {
            std::uniform_int_distribution<std::size_t> pick(0, p.choices.size() - 1);
            c.values[p.name] = p.choices[pick(rng)];
            break;
        }
        case ParamKind::Integer: {
            std::uniform_int_distribution<std::int64_t> pick(static_cast<std::int64_t>(p.lo),
                                                             static_cast<std::int64_t>(p.hi));
            c.values[p.name] = pick(rng);
            break;
        }
        case ParamKind::Continuous: {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            c.values[p.name] = from_unit(p, u(rng));
            break;
        }
        }
    }
    c.id = content_id(c);
    return c;
}

std::vector<std::string> validation_errors(const ConfigurationSpace& space, const Configuration& config) {
    std::vector<std::string> errors;
    for (const auto& [name, value] : config.values) {
        if (!space.index_of(name)) errors.push_back("unknown parameter '" + name + "'");
    }
    std::map<std::string, ParamValue> active;
    for (const auto& p : space.params()) {
        const bool on = !p.condition || condition_holds(*p.condition, active);
        const auto it = config.values.find(p.name);
        if (on && it == config.values.end()) {
            errors.push_back("active parameter '" + p.name + "' is not assigned");
        } else if (!on && it != config.values.end()) {
            errors.push_back("inactive parameter '" + p.name + "' is assigned");
        } else if (on) {
            if (!p.contains(it->second)) {
                errors.push_back("parameter '" + p.name + "' value " + to_string(it->second) + " is outside its domain");
            }
            active.emplace(p.name, it->second);
        }
    }
    return errors;
}

bool is_valid(const ConfigurationSpace& space, const Configuration& config) {
    return validation_errors(space, config).empty();
}

void validate(const ConfigurationSpace& space, const Configuration& config) {
    const auto errors = validation_errors(space, config);
    if (errors.empty()) return;
    std::string msg = "invalid configuration";
    if (!config.id.empty()) msg += " " + config.id;
    for (const auto& e : errors) msg += "; " + e;
    throw SpaceError(msg);
}

std::set<std::string> active_params(const ConfigurationSpace& space, const Configuration& config) {
    for (const auto& [name, value] : config.values) {
        if (!space.index_of(name)) throw SpaceError("configuration assigns unknown parameter '" + name + "'");
    }
    std::set<std::string> out;
    std::map<std::string, ParamValue> active;
    for (const auto& p : space.params()) {
        if (p.condition && !condition_holds(*p.condition, active)) continue;
        out.insert(p.name);
        if (const auto it = config.values.find(p.name); it != config.values.end()) active.emplace(p.name, it->second);
    }
    return out;
}

std::vector<double> vectorize(const ConfigurationSpace& space, const Configuration& config) {
    std::vector<double> out;
    out.reserve(space.dimension());
    for (const auto& p : space.params()) {
        const auto it = config.values.find(p.name);
        if (it == config.values.end()) {
            out.push_back(kInactiveSlot);
            continue;
        }
        switch (p.kind) {
        case ParamKind::Categorical: {
            const auto pos = std::find(p.choices.begin(), p.choices.end(), it->second) - p.choices.begin();
            out.push_back(p.choices.size() == 1 ? 0.0
                                                : static_cast<double>(pos) / static_cast<double>(p.choices.size() - 1));
            break;
        }
        case ParamKind::Integer:
            out.push_back((static_cast<double>(std::get<std::int64_t>(it->second)) - p.lo) / (p.hi - p.lo));
            break;
        case ParamKind::Continuous:
            out.push_back(std::clamp(to_unit(p, std::get<double>(it->second)), 0.0, 1.0));
            break;
        }
    }
    return out;
}

Configuration devectorize(const ConfigurationSpace& space, const std::vector<double>& slots) {
    if (slots.size() != space.dimension()) {
        throw SpaceError("devectorize: vector has " + std::to_string(slots.size()) + " slots, space has " +
                         std::to_string(space.dimension()));
    }
    Configuration c;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const ParamDef& p = space.params()[i];
        if (p.condition && !condition_holds(*p.condition, c.values)) continue;
        const double x = std::clamp(std::isfinite(slots[i]) ? slots[i] : kInactiveSlot, 0.0, 1.0);
        switch (p.kind) {
        case ParamKind::Categorical: {
            const auto k = p.choices.size();
            const auto pos = static_cast<std::size_t>(std::lround(x * static_cast<double>(k - 1)));
            c.values[p.name] = p.choices[std::min(pos, k - 1)];
            break;
        }
        case ParamKind::Integer:
            c.values[p.name] = static_cast<std::int64_t>(std::clamp(std::round(p.lo + x * (p.hi - p.lo)), p.lo, p.hi));
            break;
        case ParamKind::Continuous:
            c.values[p.name] = from_unit(p, x);
            break;
        }
    }
    c.id = content_id(c);
    return c;
}

} // namespace trendsearch
