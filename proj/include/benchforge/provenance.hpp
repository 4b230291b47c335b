#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "benchforge/config.hpp"

namespace benchforge::prov {

// Hardware/software context captured alongside every benchmark record.  All
// fields are always present; anything we cannot determine is the literal
// string "unknown" rather than an omission.
struct MetadataSnapshot {
    std::string machine = "unknown";
    std::string node_class = "unknown";
    std::map<std::string, std::string> captured_env;
    std::map<std::string, std::string> software_versions;
    std::string timestamp;  // UTC ISO-8601
    std::string collector_version = "unknown";

    std::string to_json() const;
    static MetadataSnapshot from_json(const std::string& text);
};

struct CollectContext {
    std::string machine;
    std::string node_class;
    std::vector<std::string> env_allowlist;
    std::map<std::string, std::string> software_versions;
};

// Never fails: missing pieces degrade to "unknown".
MetadataSnapshot collect_metadata(const CollectContext& ctx);

struct BenchmarkRecord {
    std::string record_id;  // assigned by the archive on store
    std::string run_id;
    config::ParameterCombination combination;
    std::string resolved_config_json;           // stored verbatim
    std::map<std::string, std::string> raw_files;  // name -> bytes
    MetadataSnapshot metadata;
    std::map<std::string, std::string> annotations;
};

enum class FilterOp { Eq, Ne, Lt, Le, Gt, Ge, Contains };

struct Predicate {
    std::string key;
    FilterOp op = FilterOp::Eq;
    std::string value;
};

struct RecordFilter {
    std::vector<Predicate> predicates;  // conjunction; empty matches everything
};

// Each expression looks like "machine=mock-A", "config.run.nodes>=2" or
// "annotations.tag contains weak".
Predicate parse_predicate(const std::string& expr);
RecordFilter parse_filter(const std::vector<std::string>& exprs);

// Predicate evaluation over the namespaced key space: record_id, run_id,
// ordinal, machine, combination.<axis>, annotations.<key>, config.<key>, and
// metadata.{machine,node_class,timestamp,collector_version,env.<VAR>,
// software.<name>}.  Unknown (but well-formed) keys simply never match.
bool matches(const BenchmarkRecord& rec, const RecordFilter& filter);

// One directory per record, published atomically via rename:
//   <root>/<id>/manifest       checksummed file list + readable header
//   <root>/<id>/record.json    immutable identity + metadata
//   <root>/<id>/config.json    resolved config snapshot, byte-for-byte
//   <root>/<id>/raw/<name>     raw result blobs
//   <root>/<id>/annotations.json   the only mutable file
class Archive {
public:
    explicit Archive(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }

    // Assigns the id (creation-ordered within this process) and persists the
    // record durably before returning.
    std::string store(BenchmarkRecord rec);

    // Verifies every checksum in the manifest before returning content.
    BenchmarkRecord fetch(const std::string& id) const;

    // Adds or overwrites one annotation; everything else stays byte-identical.
    BenchmarkRecord annotate(const std::string& id, const std::string& key,
                             const std::string& value);

    std::vector<std::string> query(const RecordFilter& filter) const;
    std::vector<std::string> list_ids() const;

private:
    std::filesystem::path record_dir(const std::string& id) const;
    std::string next_id();

    std::filesystem::path root_;
    std::mutex mutex_;
    std::string last_id_;
    std::string last_timestamp_;
};

}  // namespace benchforge::prov
