#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "benchforge/value.hpp"

namespace benchforge::config {

// Ownership role a top-level section is attributed to.  Roles make it
// explicit which party is responsible for a group of keys; they are carried
// through inheritance but do not affect merging.
enum class Role { Machine, Platform, Software, Model, User };

const char* to_string(Role role);
std::optional<Role> role_from_string(const std::string& text);

// One parsed configuration document.  Nested YAML maps are flattened to
// dotted leaf paths at load time: scalars and lists are leaves, maps are
// interior nodes.  Within one document every leaf path is unique and no
// leaf is a prefix of another (YAML structure guarantees the latter, the
// loader enforces the former by rejecting duplicate keys).
struct ConfigDocument {
    std::string name;
    std::optional<std::string> parent;          // value of `extends`, verbatim
    std::map<std::string, Entry> entries;       // dotted leaf path -> value
    std::map<std::string, Role> section_roles;  // top-level section -> role
    std::filesystem::path source_path;
};

// Reserved key names inside documents.
inline constexpr const char* kNameKey = "name";
inline constexpr const char* kExtendsKey = "extends";
inline constexpr const char* kRolesKey = "roles";
inline constexpr const char* kDeleteSentinel = "__delete__";
inline constexpr const char* kAxisPrefix = "experiment.axes.";

ConfigDocument parse_document(const std::string& yaml_text, const std::string& fallback_name,
                              const std::filesystem::path& source_path = {});
ConfigDocument load_document(const std::filesystem::path& path);

// Resolves `extends` references by name (looked up under the root as
// `<name>` or `<name>.yaml`) or by explicit path.  Documents are cached;
// in-memory documents can be registered for lookup by name.
class DocumentRepository {
public:
    DocumentRepository() = default;
    explicit DocumentRepository(std::filesystem::path root) : root_(std::move(root)) {}

    const ConfigDocument& get(const std::string& name_or_path) const;
    void put(ConfigDocument doc);
    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
    mutable std::map<std::string, ConfigDocument> cache_;
};

// A minimal validation contract: required keys and their kinds.  Keys not
// mentioned by the schema are always allowed.
struct Schema {
    struct Requirement {
        ValueKind kind = ValueKind::String;
        bool is_list = false;
    };
    std::string id = "none";
    std::map<std::string, Requirement> required;

    static Schema none() { return {}; }
};

Schema parse_schema(const std::string& yaml_text, const std::string& id);
Schema load_schema(const std::filesystem::path& path);

// Fully merged configuration with per-key origin tracking.
struct ResolvedConfig {
    std::map<std::string, Entry> entries;           // dotted leaf path -> value
    std::map<std::string, std::string> provenance;  // dotted leaf path -> document name
    std::map<std::string, Role> section_roles;
    std::string schema_id = "none";

    const Entry* find(const std::string& key_path) const;
    const Entry& at(const std::string& key_path) const;  // throws Config error

    // Typed accessors with defaults; throw on kind mismatch.
    std::int64_t get_int(const std::string& key_path, std::int64_t fallback) const;
    double get_float(const std::string& key_path, double fallback) const;
    bool get_bool(const std::string& key_path, bool fallback) const;
    std::string get_string(const std::string& key_path, const std::string& fallback) const;

    // Canonical JSON snapshot (sorted keys, round-trip floats).  The
    // snapshot is self-contained: feeding it back through from_json yields
    // an equal ResolvedConfig.
    std::string to_json() const;
    static ResolvedConfig from_json(const std::string& json_text);

    bool operator==(const ResolvedConfig&) const = default;
};

struct ResolveOptions {
    int max_chain_depth = 16;
};

ResolvedConfig resolve(const ConfigDocument& doc, const DocumentRepository& repo,
                       const Schema& schema = Schema::none(), const ResolveOptions& opts = {});

// --- parameter space ----------------------------------------------------

struct ParameterAxis {
    std::string key_path;  // target key, axis prefix already stripped
    ValueList values;      // non-empty, homogeneous kind
};

struct ParameterCombination {
    std::size_t ordinal = 0;
    std::map<std::string, Value> assignments;  // exactly one value per axis
};

struct ExpandOptions {
    std::size_t max_axes = 8;
};

// Axes sorted lexicographically by key path.
std::vector<ParameterAxis> parameter_axes(const ResolvedConfig& rc);
// Cross product in row-major order: the last axis varies fastest.  A config
// without axes yields a single empty combination.
std::vector<ParameterCombination> expand_parameter_space(const ResolvedConfig& rc,
                                                         const ExpandOptions& opts = {});

// Effective entry for a key under a combination: the assignment shadows the
// resolved value.
const Entry* effective_entry(const ResolvedConfig& rc, const ParameterCombination& combo,
                             const std::string& key_path, Entry& scratch);

// --- diff ---------------------------------------------------------------

struct DiffEntry {
    std::string key_path;
    std::optional<Entry> left, right;  // nullopt = key absent on that side
};

std::vector<DiffEntry> diff(const ResolvedConfig& a, const ResolvedConfig& b);

}  // namespace benchforge::config
