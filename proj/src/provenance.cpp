#include "benchforge/provenance.hpp"

#include <fcntl.h>
#include <sys/utsname.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <optional>
#include <thread>

#include <json.hpp>

#include "benchforge/errors.hpp"
#include "benchforge/util.hpp"

namespace benchforge::prov {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kCollectorVersion = "0.1.0";

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorKind::Archive, msg); }
[[noreturn]] void fail_usage(const std::string& msg) { throw Error(ErrorKind::Usage, msg); }

json value_to_json(const Value& v) {
    switch (v.kind()) {
    case ValueKind::Bool: return v.as_bool();
    case ValueKind::Int: return v.as_int();
    case ValueKind::Float: return v.as_float();
    case ValueKind::String: return v.as_string();
    }
    return nullptr;
}

Value value_from_json(const json& j, const std::string& at) {
    if (j.is_boolean()) return Value(j.get<bool>());
    if (j.is_number_integer()) return Value(static_cast<std::int64_t>(j.get<std::int64_t>()));
    if (j.is_number_float()) return Value(j.get<double>());
    if (j.is_string()) return Value(j.get<std::string>());
    fail("record field '" + at + "' has an unsupported JSON type");
}

json metadata_to_json(const MetadataSnapshot& m) {
    json j;
    j["machine"] = m.machine;
    j["node_class"] = m.node_class;
    j["captured_env"] = m.captured_env;
    j["software_versions"] = m.software_versions;
    j["timestamp"] = m.timestamp;
    j["collector_version"] = m.collector_version;
    return j;
}

MetadataSnapshot metadata_from_json(const json& j) {
    if (!j.is_object()) fail("metadata is not a JSON object");
    MetadataSnapshot m;
    m.machine = j.value("machine", std::string("unknown"));
    m.node_class = j.value("node_class", std::string("unknown"));
    m.timestamp = j.value("timestamp", std::string());
    m.collector_version = j.value("collector_version", std::string("unknown"));
    if (j.contains("captured_env"))
        for (const auto& [k, v] : j["captured_env"].items()) m.captured_env[k] = v.get<std::string>();
    if (j.contains("software_versions"))
        for (const auto& [k, v] : j["software_versions"].items())
            m.software_versions[k] = v.get<std::string>();
    return m;
}

json parse_json(const std::string& text, const std::string& what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) fail(what + " is not valid JSON");
    return j;
}

bool valid_component(std::string_view name) {
    if (name.empty() || name.front() == '.') return false;
    return std::all_of(name.begin(), name.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '.' || c == '_' || c == '-';
    });
}

void fsync_dir(const fs::path& dir) {
    int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd >= 0) {
        ::fsync(fd);
        ::close(fd);
    }
}

// --- predicate evaluation -------------------------------------------------

struct Target {
    bool found = false;
    bool is_list = false;
    ValueKind kind = ValueKind::String;
    std::string text;                // canonical scalar rendering
    double num = 0.0;                // meaningful for Int/Float
    std::vector<std::string> elems;  // canonical element renderings
};

Target from_string(std::string text) {
    Target t;
    t.found = true;
    t.text = std::move(text);
    return t;
}

Target from_value(const Value& v) {
    Target t;
    t.found = true;
    t.kind = v.kind();
    t.text = v.render();
    if (v.kind() == ValueKind::Int) t.num = static_cast<double>(v.as_int());
    if (v.kind() == ValueKind::Float) t.num = v.as_float();
    return t;
}

Target from_entry(const Entry& e) {
    if (!e.is_list()) return from_value(e.scalar());
    Target t;
    t.found = true;
    t.is_list = true;
    t.text = e.render();
    for (const auto& v : e.list()) t.elems.push_back(v.render());
    return t;
}

Target lookup(const BenchmarkRecord& rec, const std::optional<config::ResolvedConfig>& cfg,
              const std::string& key) {
    auto tail = [&](std::string_view prefix) { return key.substr(prefix.size()); };
    if (key == "record_id") return from_string(rec.record_id);
    if (key == "run_id") return from_string(rec.run_id);
    if (key == "ordinal") return from_value(Value(static_cast<std::int64_t>(rec.combination.ordinal)));
    if (key == "machine" || key == "metadata.machine") return from_string(rec.metadata.machine);
    if (key == "metadata.node_class") return from_string(rec.metadata.node_class);
    if (key == "metadata.timestamp") return from_string(rec.metadata.timestamp);
    if (key == "metadata.collector_version") return from_string(rec.metadata.collector_version);
    if (util::starts_with(key, "metadata.env.")) {
        auto it = rec.metadata.captured_env.find(std::string(tail("metadata.env.")));
        return it == rec.metadata.captured_env.end() ? Target{} : from_string(it->second);
    }
    if (util::starts_with(key, "metadata.software.")) {
        auto it = rec.metadata.software_versions.find(std::string(tail("metadata.software.")));
        return it == rec.metadata.software_versions.end() ? Target{} : from_string(it->second);
    }
    if (util::starts_with(key, "combination.")) {
        auto it = rec.combination.assignments.find(std::string(tail("combination.")));
        return it == rec.combination.assignments.end() ? Target{} : from_value(it->second);
    }
    if (util::starts_with(key, "annotations.")) {
        auto it = rec.annotations.find(std::string(tail("annotations.")));
        return it == rec.annotations.end() ? Target{} : from_string(it->second);
    }
    if (util::starts_with(key, "config.")) {
        if (!cfg) return {};
        const Entry* e = cfg->find(std::string(tail("config.")));
        return e ? from_entry(*e) : Target{};
    }
    return {};
}

bool parse_number(const std::string& text, double& out) {
    if (text.empty()) return false;
    char* end = nullptr;
    errno = 0;
    out = std::strtod(text.c_str(), &end);
    return errno == 0 && end == text.c_str() + text.size();
}

bool eval(const Target& t, const Predicate& p) {
    if (!t.found) return false;
    switch (p.op) {
    case FilterOp::Eq:
    case FilterOp::Ne: {
        bool eq;
        double fnum;
        if (!t.is_list && (t.kind == ValueKind::Int || t.kind == ValueKind::Float) &&
            parse_number(p.value, fnum))
            eq = t.num == fnum;
        else
            eq = t.text == p.value;
        return p.op == FilterOp::Eq ? eq : !eq;
    }
    case FilterOp::Lt:
    case FilterOp::Le:
    case FilterOp::Gt:
    case FilterOp::Ge: {
        if (t.is_list) fail_usage("cannot order the list-valued key '" + p.key + "'");
        if (t.kind == ValueKind::Bool) fail_usage("cannot order the boolean key '" + p.key + "'");
        int cmp;
        if (t.kind == ValueKind::Int || t.kind == ValueKind::Float) {
            double fnum;
            if (!parse_number(p.value, fnum))
                fail_usage("key '" + p.key + "' holds a number but '" + p.value + "' is not one");
            cmp = t.num < fnum ? -1 : (t.num > fnum ? 1 : 0);
        } else {
            cmp = t.text.compare(p.value);
            cmp = cmp < 0 ? -1 : (cmp > 0 ? 1 : 0);
        }
        switch (p.op) {
        case FilterOp::Lt: return cmp < 0;
        case FilterOp::Le: return cmp <= 0;
        case FilterOp::Gt: return cmp > 0;
        default: return cmp >= 0;
        }
    }
    case FilterOp::Contains:
        if (t.is_list)
            return std::find(t.elems.begin(), t.elems.end(), p.value) != t.elems.end();
        return t.text.find(p.value) != std::string::npos;
    }
    return false;
}

}  // namespace

// --- metadata ---------------------------------------------------------------

std::string MetadataSnapshot::to_json() const { return metadata_to_json(*this).dump(2) + "\n"; }

MetadataSnapshot MetadataSnapshot::from_json(const std::string& text) {
    return metadata_from_json(parse_json(text, "metadata snapshot"));
}

MetadataSnapshot collect_metadata(const CollectContext& ctx) {
    MetadataSnapshot snap;
    if (!ctx.machine.empty()) snap.machine = ctx.machine;
    if (!ctx.node_class.empty()) snap.node_class = ctx.node_class;
    for (const auto& name : ctx.env_allowlist)
        if (const char* v = ::getenv(name.c_str())) snap.captured_env[name] = v;
    snap.software_versions = ctx.software_versions;
    snap.software_versions.emplace("benchforge", kCollectorVersion);
    struct utsname u {};
    if (::uname(&u) == 0)
        snap.software_versions.emplace("os", std::string(u.sysname) + " " + u.release);
    else
        snap.software_versions.emplace("os", "unknown");
    snap.timestamp = util::utc_iso_now();
    snap.collector_version = kCollectorVersion;
    return snap;
}

// --- filters ----------------------------------------------------------------

Predicate parse_predicate(const std::string& expr) {
    Predicate p;
    std::string rhs;
    auto cpos = expr.find(" contains ");
    if (cpos != std::string::npos) {
        p.key = util::trim(expr.substr(0, cpos));
        p.op = FilterOp::Contains;
        rhs = expr.substr(cpos + 10);
    } else {
        static const std::pair<const char*, FilterOp> ops[] = {
            {"!=", FilterOp::Ne}, {"<=", FilterOp::Le}, {">=", FilterOp::Ge},
            {"=", FilterOp::Eq},  {"<", FilterOp::Lt},  {">", FilterOp::Gt},
        };
        std::size_t pos = std::string::npos;
        std::size_t len = 0;
        for (std::size_t i = 0; i < expr.size() && pos == std::string::npos; ++i)
            for (const auto& [tok, op] : ops)
                if (expr.compare(i, std::strlen(tok), tok) == 0) {
                    pos = i;
                    len = std::strlen(tok);
                    p.op = op;
                    break;
                }
        if (pos == std::string::npos)
            fail_usage("filter '" + expr + "' has no operator (=, !=, <, <=, >, >=, contains)");
        p.key = util::trim(expr.substr(0, pos));
        rhs = expr.substr(pos + len);
    }
    p.value = util::trim(rhs);
    if (!valid_component(p.key) || p.key.find("..") != std::string::npos || p.key.back() == '.')
        fail_usage("filter '" + expr + "' has an invalid key path");
    return p;
}

RecordFilter parse_filter(const std::vector<std::string>& exprs) {
    RecordFilter f;
    for (const auto& e : exprs) f.predicates.push_back(parse_predicate(e));
    return f;
}

bool matches(const BenchmarkRecord& rec, const RecordFilter& filter) {
    std::optional<config::ResolvedConfig> cfg;
    for (const auto& p : filter.predicates) {
        if (util::starts_with(p.key, "config.") && !cfg)
            cfg = config::ResolvedConfig::from_json(rec.resolved_config_json);
        if (!eval(lookup(rec, cfg, p.key), p)) return false;
    }
    return true;
}

// --- archive ------------------------------------------------------------------

Archive::Archive(fs::path root) : root_(std::move(root)) { util::ensure_dir(root_); }

fs::path Archive::record_dir(const std::string& id) const {
    if (id.empty() || id.front() == '.' || id.find('/') != std::string::npos)
        fail("malformed record id '" + id + "'");
    return root_ / id;
}

std::string Archive::next_id() {
    // Caller holds mutex_.  Ids are creation-ordered within the process; when
    // several land in the same second we redraw the suffix until it sorts
    // after the previous one, letting the clock advance if we are unlucky.
    for (int tries = 1;; ++tries) {
        std::string candidate =
            util::utc_compact_stamp(std::chrono::system_clock::now()) + "-" + util::random_base32(6);
        if (last_id_.empty() || candidate > last_id_) {
            last_id_ = candidate;
            return candidate;
        }
        if (tries % 64 == 0) std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
}

std::string Archive::store(BenchmarkRecord rec) {
    for (const auto& [name, bytes] : rec.raw_files) {
        (void)bytes;
        if (!valid_component(name) || name.find('.') == 0)
            fail("raw file name '" + name + "' is not a plain file name");
    }

    for (;;) {
        std::string id;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            id = next_id();
            if (rec.metadata.timestamp.empty()) rec.metadata.timestamp = util::utc_iso_now();
            // ISO-8601 UTC strings order chronologically, so a plain string
            // max keeps archive timestamps nondecreasing.
            if (rec.metadata.timestamp < last_timestamp_) rec.metadata.timestamp = last_timestamp_;
            last_timestamp_ = rec.metadata.timestamp;
        }
        rec.record_id = id;

        json rj;
        rj["record_id"] = rec.record_id;
        rj["run_id"] = rec.run_id;
        json combo;
        combo["ordinal"] = rec.combination.ordinal;
        json assigns = json::object();
        for (const auto& [k, v] : rec.combination.assignments) assigns[k] = value_to_json(v);
        combo["assignments"] = assigns;
        rj["combination"] = combo;
        rj["metadata"] = metadata_to_json(rec.metadata);

        std::map<std::string, std::string> blobs;  // rel path -> bytes
        blobs["record.json"] = rj.dump(2) + "\n";
        blobs["config.json"] = rec.resolved_config_json;
        for (const auto& [name, bytes] : rec.raw_files) blobs["raw/" + name] = bytes;

        std::string manifest;
        manifest += "# benchforge archive record\n";
        manifest += "# id: " + id + "\n";
        manifest += "# created: " + rec.metadata.timestamp + "\n";
        manifest += "# machine: " + rec.metadata.machine + "\n";
        auto note = [&](const char* label, const char* key) {
            auto it = rec.annotations.find(key);
            manifest += std::string("# ") + label + ": " +
                        (it == rec.annotations.end() ? "unknown" : it->second) + "\n";
        };
        note("requester", "requester");
        note("config", "config_name");
        for (const auto& [rel, bytes] : blobs)
            manifest +=
                rel + " " + std::to_string(bytes.size()) + " " + util::crc32_hex(bytes) + "\n";

        fs::path staging = root_ / (".staging-" + id + "-" + util::random_base32(4));
        util::ensure_dir(staging / "raw");
        for (const auto& [rel, bytes] : blobs) util::write_file_atomic(staging / rel, bytes);
        util::write_file_atomic(staging / "manifest", manifest);
        util::write_file_atomic(staging / "annotations.json", json(rec.annotations).dump(2) + "\n");

        std::error_code ec;
        fs::rename(staging, record_dir(id), ec);
        if (!ec) {
            fsync_dir(root_);
            return id;
        }
        // Another process took the id; throw the staging dir away and redraw.
        fs::remove_all(staging, ec);
        if (!fs::exists(record_dir(id))) fail("cannot publish record '" + id + "'");
    }
}

BenchmarkRecord Archive::fetch(const std::string& id) const {
    fs::path dir = record_dir(id);
    if (!fs::is_directory(dir)) fail("unknown record id '" + id + "'");

    std::string manifest = util::read_file(dir / "manifest");
    std::map<std::string, std::string> blobs;
    std::size_t raw_listed = 0;
    for (const auto& line : util::split(manifest, '\n')) {
        if (line.empty() || line.front() == '#') continue;
        auto parts = util::split(line, ' ');
        if (parts.size() != 3) fail("record '" + id + "' has a malformed manifest line: " + line);
        const std::string& rel = parts[0];
        fs::path file = dir / rel;
        if (!fs::is_regular_file(file))
            fail("record '" + id + "' is missing the file '" + rel + "'");
        std::string bytes = util::read_file(file);
        if (std::to_string(bytes.size()) != parts[1] || util::crc32_hex(bytes) != parts[2])
            fail("checksum mismatch for '" + rel + "' in record '" + id + "'");
        if (util::starts_with(rel, "raw/")) ++raw_listed;
        blobs[rel] = std::move(bytes);
    }
    if (!blobs.count("record.json") || !blobs.count("config.json"))
        fail("record '" + id + "' has an incomplete manifest");
    // Files that appeared after the fact are corruption too.
    if (fs::is_directory(dir / "raw")) {
        std::size_t raw_present = 0;
        for (const auto& e : fs::directory_iterator(dir / "raw"))
            if (e.is_regular_file()) ++raw_present;
        if (raw_present != raw_listed)
            fail("record '" + id + "' has raw files not covered by its manifest");
    }

    json rj = parse_json(blobs["record.json"], "record '" + id + "'");
    BenchmarkRecord rec;
    rec.record_id = rj.value("record_id", std::string());
    if (rec.record_id != id) fail("record '" + id + "' carries a different id inside");
    rec.run_id = rj.value("run_id", std::string());
    if (rj.contains("combination")) {
        const json& combo = rj["combination"];
        rec.combination.ordinal = combo.value("ordinal", std::size_t{0});
        if (combo.contains("assignments"))
            for (const auto& [k, v] : combo["assignments"].items())
                rec.combination.assignments.emplace(k, value_from_json(v, "combination." + k));
    }
    if (rj.contains("metadata")) rec.metadata = metadata_from_json(rj["metadata"]);
    rec.resolved_config_json = std::move(blobs["config.json"]);
    for (auto& [rel, bytes] : blobs)
        if (util::starts_with(rel, "raw/")) rec.raw_files[rel.substr(4)] = std::move(bytes);

    fs::path notes = dir / "annotations.json";
    if (fs::is_regular_file(notes)) {
        json aj = parse_json(util::read_file(notes), "annotations of record '" + id + "'");
        for (const auto& [k, v] : aj.items()) rec.annotations[k] = v.get<std::string>();
    }
    return rec;
}

BenchmarkRecord Archive::annotate(const std::string& id, const std::string& key,
                                  const std::string& value) {
    static const char* kReserved[] = {"record_id", "run_id", "ordinal", "machine", "combination"};
    static const char* kReservedPrefixes[] = {"metadata.", "config.", "annotations.",
                                              "combination."};
    if (key.empty()) fail("annotation keys must not be empty");
    for (const char* r : kReserved)
        if (key == r) fail("annotation key '" + key + "' is reserved");
    for (const char* p : kReservedPrefixes)
        if (util::starts_with(key, p)) fail("annotation key '" + key + "' shadows " + p + "*");

    std::lock_guard<std::mutex> lock(mutex_);
    BenchmarkRecord rec = fetch(id);
    rec.annotations[key] = value;
    util::write_file_atomic(record_dir(id) / "annotations.json",
                            json(rec.annotations).dump(2) + "\n");
    return rec;
}

std::vector<std::string> Archive::query(const RecordFilter& filter) const {
    std::vector<std::string> hits;
    for (const auto& id : list_ids())
        if (matches(fetch(id), filter)) hits.push_back(id);
    return hits;
}

std::vector<std::string> Archive::list_ids() const {
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(root_)) {
        std::string name = entry.path().filename().string();
        if (entry.is_directory() && !name.empty() && name.front() != '.') ids.push_back(name);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace benchforge::prov
