#include "benchforge/config.hpp"

#include <yaml-cpp/yaml.h>

#include <json.hpp>

#include <algorithm>
#include <limits>
#include <set>

#include "benchforge/errors.hpp"
#include "benchforge/util.hpp"

namespace benchforge::config {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorKind::Config, msg); }
[[noreturn]] void fail_schema(const std::string& msg) { throw Error(ErrorKind::Schema, msg); }

bool forced_string(const YAML::Node& node) {
    const std::string& tag = node.Tag();
    return tag == "!" || (tag.size() >= 3 && tag.compare(tag.size() - 3, 3, "str") == 0);
}

Value scalar_from_node(const YAML::Node& node, const std::string& at) {
    if (!node.IsScalar()) fail("'" + at + "' is not a scalar");
    const std::string& text = node.Scalar();
    if (forced_string(node)) return Value(text);
    return parse_scalar_text(text);
}

void check_key(const std::string& key, const std::string& at) {
    if (key.empty()) fail("empty key under '" + (at.empty() ? std::string("<root>") : at) + "'");
    if (key.find('.') != std::string::npos)
        fail("key '" + key + "' contains '.', which is reserved for path separation");
    if (key == kDeleteSentinel) fail("'" + std::string(kDeleteSentinel) + "' cannot be used as a key");
}

void flatten(const YAML::Node& node, const std::string& prefix, std::map<std::string, Entry>& out) {
    if (node.IsMap()) {
        std::set<std::string> seen;
        for (const auto& kv : node) {
            std::string key = kv.first.Scalar();
            check_key(key, prefix);
            if (!seen.insert(key).second)
                fail("duplicate key '" + key + "' under '" + (prefix.empty() ? "<root>" : prefix) + "'");
            std::string path = prefix.empty() ? key : prefix + "." + key;
            flatten(kv.second, path, out);
        }
        if (node.size() == 0) fail("'" + prefix + "' is an empty mapping");
        return;
    }
    if (node.IsSequence()) {
        ValueList values;
        for (const auto& item : node) {
            if (item.IsMap() || item.IsSequence())
                fail("list '" + prefix + "' must contain only scalars");
            if (item.IsNull()) fail("list '" + prefix + "' contains an empty element");
            Value v = scalar_from_node(item, prefix);
            if (v.kind() == ValueKind::String && v.as_string() == kDeleteSentinel)
                fail("'" + std::string(kDeleteSentinel) + "' is not allowed inside lists ('" + prefix + "')");
            if (!values.empty() && values.front().kind() != v.kind())
                fail("list '" + prefix + "' mixes " + std::string(to_string(values.front().kind())) +
                     " and " + to_string(v.kind()) + " elements");
            values.push_back(std::move(v));
        }
        out.emplace(prefix, Entry(std::move(values)));
        return;
    }
    if (node.IsNull()) fail("'" + prefix + "' has no value");
    out.emplace(prefix, Entry(scalar_from_node(node, prefix)));
}

std::map<std::string, Role> parse_roles(const YAML::Node& node) {
    if (!node.IsMap()) fail("'roles' must be a mapping of section name to role");
    std::map<std::string, Role> roles;
    std::set<std::string> seen;
    for (const auto& kv : node) {
        std::string section = kv.first.Scalar();
        check_key(section, kRolesKey);
        if (!seen.insert(section).second) fail("duplicate key '" + section + "' under 'roles'");
        if (!kv.second.IsScalar()) fail("role for section '" + section + "' must be a scalar");
        auto role = role_from_string(kv.second.Scalar());
        if (!role)
            fail("unknown role '" + kv.second.Scalar() + "' for section '" + section +
                 "' (expected machine, platform, software, model, or user)");
        roles.emplace(section, *role);
    }
    return roles;
}

bool kinds_compatible(const Entry& a, const Entry& b) {
    if (a.is_list() != b.is_list()) return false;
    if (!a.is_list()) return a.scalar().kind() == b.scalar().kind();
    if (a.list().empty() || b.list().empty()) return true;
    return a.list().front().kind() == b.list().front().kind();
}

std::string kind_label(const Entry& e) {
    if (e.is_list())
        return e.list().empty() ? "empty list"
                                : "list of " + std::string(to_string(e.list().front().kind()));
    return to_string(e.scalar().kind());
}

bool is_delete_sentinel(const Entry& e) {
    return !e.is_list() && e.scalar().kind() == ValueKind::String &&
           e.scalar().as_string() == kDeleteSentinel;
}

// Erase `path` and everything underneath it.
void erase_subtree(ResolvedConfig& rc, const std::string& path) {
    rc.entries.erase(path);
    rc.provenance.erase(path);
    std::string prefix = path + ".";
    for (auto it = rc.entries.lower_bound(prefix);
         it != rc.entries.end() && util::starts_with(it->first, prefix);)
        it = rc.entries.erase(it);
    for (auto it = rc.provenance.lower_bound(prefix);
         it != rc.provenance.end() && util::starts_with(it->first, prefix);)
        it = rc.provenance.erase(it);
}

void apply_document(ResolvedConfig& rc, const ConfigDocument& doc) {
    for (const auto& [path, entry] : doc.entries) {
        if (is_delete_sentinel(entry)) {
            erase_subtree(rc, path);
            continue;
        }
        // A leaf may not override an inherited section...
        std::string prefix = path + ".";
        auto below = rc.entries.lower_bound(prefix);
        if (below != rc.entries.end() && util::starts_with(below->first, prefix))
            fail_schema("'" + doc.name + "' overrides section '" + path + "' with a scalar");
        // ...nor may a section override an inherited leaf.
        auto segments = split_key_path(path);
        std::string ancestor;
        for (std::size_t i = 0; i + 1 < segments.size(); ++i) {
            ancestor += (i ? "." : "") + segments[i];
            if (rc.entries.count(ancestor))
                fail_schema("'" + doc.name + "' overrides scalar '" + ancestor + "' with a section");
        }
        auto it = rc.entries.find(path);
        if (it != rc.entries.end() && !kinds_compatible(it->second, entry))
            fail_schema("'" + doc.name + "' changes the kind of '" + path + "' from " +
                        kind_label(it->second) + " to " + kind_label(entry));
        rc.entries[path] = entry;
        rc.provenance[path] = doc.name;
    }
    for (const auto& [section, role] : doc.section_roles) rc.section_roles[section] = role;
}

void validate_schema(const ResolvedConfig& rc, const Schema& schema) {
    for (const auto& [key, req] : schema.required) {
        const Entry* e = rc.find(key);
        if (!e) fail_schema("missing required key '" + key + "' (schema '" + schema.id + "')");
        bool ok;
        if (req.is_list)
            ok = e->is_list() && (e->list().empty() || e->list().front().kind() == req.kind);
        else
            ok = !e->is_list() && e->scalar().kind() == req.kind;
        if (!ok)
            fail_schema("key '" + key + "' must be " + (req.is_list ? "a list of " : "") +
                        to_string(req.kind) + ", got " + kind_label(*e) + " (schema '" + schema.id +
                        "')");
    }
}

json entry_to_json(const Entry& e) {
    auto one = [](const Value& v) -> json {
        switch (v.kind()) {
        case ValueKind::Bool: return v.as_bool();
        case ValueKind::Int: return v.as_int();
        case ValueKind::Float: return v.as_float();
        case ValueKind::String: return v.as_string();
        }
        return nullptr;
    };
    if (!e.is_list()) return one(e.scalar());
    json arr = json::array();
    for (const auto& v : e.list()) arr.push_back(one(v));
    return arr;
}

Entry entry_from_json(const json& j, const std::string& at) {
    auto one = [&](const json& v) -> Value {
        if (v.is_boolean()) return Value(v.get<bool>());
        if (v.is_number_integer()) return Value(static_cast<std::int64_t>(v.get<std::int64_t>()));
        if (v.is_number_float()) return Value(v.get<double>());
        if (v.is_string()) return Value(v.get<std::string>());
        fail("snapshot entry '" + at + "' has unsupported JSON type");
    };
    if (j.is_array()) {
        ValueList values;
        for (const auto& v : j) {
            Value val = one(v);
            if (!values.empty() && values.front().kind() != val.kind())
                fail("snapshot list '" + at + "' mixes element kinds");
            values.push_back(std::move(val));
        }
        return Entry(std::move(values));
    }
    return Entry(one(j));
}

std::optional<Schema::Requirement> parse_requirement(const std::string& text) {
    Schema::Requirement req;
    std::string base = text;
    static constexpr const char* kListSuffix = "_list";
    if (base.size() > 5 && base.compare(base.size() - 5, 5, kListSuffix) == 0) {
        req.is_list = true;
        base = base.substr(0, base.size() - 5);
    }
    if (base == "bool") req.kind = ValueKind::Bool;
    else if (base == "int") req.kind = ValueKind::Int;
    else if (base == "float") req.kind = ValueKind::Float;
    else if (base == "string") req.kind = ValueKind::String;
    else return std::nullopt;
    return req;
}

}  // namespace

const char* to_string(Role role) {
    switch (role) {
    case Role::Machine: return "machine";
    case Role::Platform: return "platform";
    case Role::Software: return "software";
    case Role::Model: return "model";
    case Role::User: return "user";
    }
    return "?";
}

std::optional<Role> role_from_string(const std::string& text) {
    if (text == "machine") return Role::Machine;
    if (text == "platform") return Role::Platform;
    if (text == "software") return Role::Software;
    if (text == "model") return Role::Model;
    if (text == "user") return Role::User;
    return std::nullopt;
}

ConfigDocument parse_document(const std::string& yaml_text, const std::string& fallback_name,
                              const std::filesystem::path& source_path) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        fail("YAML parse error in '" + fallback_name + "': " + e.what());
    }
    if (root.IsNull()) fail("document '" + fallback_name + "' is empty");
    if (!root.IsMap()) fail("document '" + fallback_name + "' must be a mapping at top level");

    ConfigDocument doc;
    doc.name = fallback_name;
    doc.source_path = source_path;
    std::set<std::string> seen;
    for (const auto& kv : root) {
        std::string key = kv.first.Scalar();
        check_key(key, "");
        if (!seen.insert(key).second) fail("duplicate key '" + key + "' under '<root>'");
        if (key == kNameKey) {
            if (!kv.second.IsScalar()) fail("'name' must be a scalar");
            doc.name = kv.second.Scalar();
            if (doc.name.empty()) fail("'name' must not be empty");
        } else if (key == kExtendsKey) {
            if (!kv.second.IsScalar()) fail("'extends' must name a document or file");
            doc.parent = kv.second.Scalar();
            if (doc.parent->empty()) fail("'extends' must not be empty");
        } else if (key == kRolesKey) {
            doc.section_roles = parse_roles(kv.second);
        } else {
            flatten(kv.second, key, doc.entries);
        }
    }
    return doc;
}

ConfigDocument load_document(const std::filesystem::path& path) {
    auto doc = parse_document(util::read_file(path), path.stem().string(), path);
    return doc;
}

const ConfigDocument& DocumentRepository::get(const std::string& ref) const {
    if (ref.empty()) fail("empty config reference");
    auto it = cache_.find(ref);
    if (it != cache_.end()) return it->second;

    namespace fs = std::filesystem;
    bool path_like = ref.find('/') != std::string::npos || ref.ends_with(".yaml") ||
                     ref.ends_with(".yml");
    fs::path p;
    if (path_like) {
        if (fs::exists(ref)) p = ref;
        else if (!root_.empty() && fs::exists(root_ / ref)) p = root_ / ref;
    } else if (!root_.empty()) {
        if (fs::is_regular_file(root_ / ref)) p = root_ / ref;
        else if (fs::is_regular_file(root_ / (ref + ".yaml"))) p = root_ / (ref + ".yaml");
    }
    if (p.empty())
        fail("unknown config document '" + ref + "'" +
             (root_.empty() ? "" : " (searched under " + root_.string() + ")"));

    ConfigDocument doc = load_document(p);
    if (doc.name != ref && !cache_.count(doc.name)) cache_.emplace(doc.name, doc);
    return cache_.emplace(ref, std::move(doc)).first->second;
}

void DocumentRepository::put(ConfigDocument doc) {
    std::string name = doc.name;
    cache_[name] = std::move(doc);
}

Schema parse_schema(const std::string& yaml_text, const std::string& id) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        fail_schema("YAML parse error in schema '" + id + "': " + e.what());
    }
    if (!root.IsMap()) fail_schema("schema '" + id + "' must be a mapping");
    Schema schema;
    schema.id = id;
    if (root["id"] && root["id"].IsScalar()) schema.id = root["id"].Scalar();
    YAML::Node required = root["required"];
    if (!required) return schema;
    if (!required.IsMap()) fail_schema("schema 'required' section must be a mapping");
    std::map<std::string, Entry> flat;
    flatten(required, "", flat);
    for (const auto& [key, entry] : flat) {
        if (entry.is_list() || entry.scalar().kind() != ValueKind::String)
            fail_schema("schema requirement for '" + key + "' must be a kind name");
        auto req = parse_requirement(entry.scalar().as_string());
        if (!req)
            fail_schema("unknown kind '" + entry.scalar().as_string() + "' for '" + key +
                        "' (expected bool, int, float, string, or *_list)");
        schema.required.emplace(key, *req);
    }
    return schema;
}

Schema load_schema(const std::filesystem::path& path) {
    return parse_schema(util::read_file(path), path.stem().string());
}

const Entry* ResolvedConfig::find(const std::string& key_path) const {
    auto it = entries.find(key_path);
    return it == entries.end() ? nullptr : &it->second;
}

const Entry& ResolvedConfig::at(const std::string& key_path) const {
    const Entry* e = find(key_path);
    if (!e) fail("missing config key '" + key_path + "'");
    return *e;
}

std::int64_t ResolvedConfig::get_int(const std::string& key_path, std::int64_t fallback) const {
    const Entry* e = find(key_path);
    if (!e) return fallback;
    if (e->is_list() || e->scalar().kind() != ValueKind::Int)
        fail("config key '" + key_path + "' must be an int, got " + kind_label(*e));
    return e->scalar().as_int();
}

double ResolvedConfig::get_float(const std::string& key_path, double fallback) const {
    const Entry* e = find(key_path);
    if (!e) return fallback;
    if (!e->is_list() && e->scalar().kind() == ValueKind::Float) return e->scalar().as_float();
    if (!e->is_list() && e->scalar().kind() == ValueKind::Int)
        return static_cast<double>(e->scalar().as_int());
    fail("config key '" + key_path + "' must be numeric, got " + kind_label(*e));
}

bool ResolvedConfig::get_bool(const std::string& key_path, bool fallback) const {
    const Entry* e = find(key_path);
    if (!e) return fallback;
    if (e->is_list() || e->scalar().kind() != ValueKind::Bool)
        fail("config key '" + key_path + "' must be a bool, got " + kind_label(*e));
    return e->scalar().as_bool();
}

std::string ResolvedConfig::get_string(const std::string& key_path,
                                       const std::string& fallback) const {
    const Entry* e = find(key_path);
    if (!e) return fallback;
    if (e->is_list() || e->scalar().kind() != ValueKind::String)
        fail("config key '" + key_path + "' must be a string, got " + kind_label(*e));
    return e->scalar().as_string();
}

std::string ResolvedConfig::to_json() const {
    json j;
    j["schema_id"] = schema_id;
    json entries_json = json::object();
    for (const auto& [key, entry] : entries) entries_json[key] = entry_to_json(entry);
    j["entries"] = entries_json;
    json prov_json = json::object();
    for (const auto& [key, origin] : provenance) prov_json[key] = origin;
    j["provenance"] = prov_json;
    json roles_json = json::object();
    for (const auto& [section, role] : section_roles) roles_json[section] = to_string(role);
    j["roles"] = roles_json;
    return j.dump(2) + "\n";
}

ResolvedConfig ResolvedConfig::from_json(const std::string& json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) fail("config snapshot is not valid JSON");
    if (!j.is_object() || !j.contains("entries") || !j["entries"].is_object())
        fail("config snapshot has no 'entries' object");
    ResolvedConfig rc;
    rc.schema_id = j.value("schema_id", std::string("none"));
    for (const auto& [key, value] : j["entries"].items()) {
        if (!valid_key_path(key)) fail("snapshot contains invalid key path '" + key + "'");
        rc.entries.emplace(key, entry_from_json(value, key));
    }
    if (j.contains("provenance") && j["provenance"].is_object())
        for (const auto& [key, value] : j["provenance"].items())
            rc.provenance.emplace(key, value.get<std::string>());
    if (j.contains("roles") && j["roles"].is_object())
        for (const auto& [section, value] : j["roles"].items()) {
            auto role = role_from_string(value.get<std::string>());
            if (role) rc.section_roles.emplace(section, *role);
        }
    return rc;
}

ResolvedConfig resolve(const ConfigDocument& doc, const DocumentRepository& repo,
                       const Schema& schema, const ResolveOptions& opts) {
    std::vector<const ConfigDocument*> chain{&doc};  // leaf first
    std::set<std::string> seen{doc.name};
    const ConfigDocument* cur = &doc;
    while (cur->parent) {
        if (static_cast<int>(chain.size()) >= opts.max_chain_depth)
            fail("inheritance chain starting at '" + doc.name + "' exceeds depth " +
                 std::to_string(opts.max_chain_depth));
        const ConfigDocument& parent = repo.get(*cur->parent);
        if (!seen.insert(parent.name).second)
            fail("inheritance cycle involving '" + parent.name + "'");
        chain.push_back(&parent);
        cur = &parent;
    }
    ResolvedConfig rc;
    rc.schema_id = schema.id;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) apply_document(rc, **it);
    validate_schema(rc, schema);
    return rc;
}

std::vector<ParameterAxis> parameter_axes(const ResolvedConfig& rc) {
    std::vector<ParameterAxis> axes;
    const std::string prefix = kAxisPrefix;
    for (auto it = rc.entries.lower_bound(prefix);
         it != rc.entries.end() && util::starts_with(it->first, prefix); ++it) {
        std::string key = it->first.substr(prefix.size());
        if (!valid_key_path(key)) fail("invalid axis key '" + it->first + "'");
        if (!it->second.is_list())
            fail("axis '" + key + "' must be a list of values, got " + kind_label(it->second));
        if (it->second.list().empty()) fail("axis '" + key + "' has no values");
        axes.push_back({key, it->second.list()});
    }
    return axes;
}

std::vector<ParameterCombination> expand_parameter_space(const ResolvedConfig& rc,
                                                         const ExpandOptions& opts) {
    auto axes = parameter_axes(rc);
    if (axes.size() > opts.max_axes)
        fail("parameter space has " + std::to_string(axes.size()) + " axes (limit " +
             std::to_string(opts.max_axes) + ")");
    for (const auto& axis : axes) {
        const Entry* target = rc.find(axis.key_path);
        if (!target) continue;
        if (target->is_list())
            fail_schema("axis '" + axis.key_path + "' targets a list-valued key");
        if (target->scalar().kind() != axis.values.front().kind())
            fail_schema("axis '" + axis.key_path + "' has " +
                        std::string(to_string(axis.values.front().kind())) +
                        " values but the key it overrides is " +
                        to_string(target->scalar().kind()));
    }
    std::size_t total = 1;
    for (const auto& axis : axes) {
        if (total > std::numeric_limits<std::size_t>::max() / axis.values.size())
            fail("parameter space too large");
        total *= axis.values.size();
    }
    std::vector<ParameterCombination> combos;
    combos.reserve(total);
    for (std::size_t i = 0; i < total; ++i) {
        ParameterCombination combo;
        combo.ordinal = i;
        std::size_t rem = i;
        for (std::size_t a = axes.size(); a-- > 0;) {
            std::size_t idx = rem % axes[a].values.size();
            rem /= axes[a].values.size();
            combo.assignments.emplace(axes[a].key_path, axes[a].values[idx]);
        }
        combos.push_back(std::move(combo));
    }
    return combos;
}

const Entry* effective_entry(const ResolvedConfig& rc, const ParameterCombination& combo,
                             const std::string& key_path, Entry& scratch) {
    auto it = combo.assignments.find(key_path);
    if (it != combo.assignments.end()) {
        scratch = Entry(it->second);
        return &scratch;
    }
    return rc.find(key_path);
}

std::vector<DiffEntry> diff(const ResolvedConfig& a, const ResolvedConfig& b) {
    std::vector<DiffEntry> out;
    auto ia = a.entries.begin();
    auto ib = b.entries.begin();
    while (ia != a.entries.end() || ib != b.entries.end()) {
        if (ib == b.entries.end() || (ia != a.entries.end() && ia->first < ib->first)) {
            out.push_back({ia->first, ia->second, std::nullopt});
            ++ia;
        } else if (ia == a.entries.end() || ib->first < ia->first) {
            out.push_back({ib->first, std::nullopt, ib->second});
            ++ib;
        } else {
            if (!(ia->second == ib->second)) out.push_back({ia->first, ia->second, ib->second});
            ++ia;
            ++ib;
        }
    }
    return out;
}

}  // namespace benchforge::config
