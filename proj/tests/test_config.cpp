#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>

#include "benchforge/config.hpp"
#include "benchforge/errors.hpp"
#include "benchforge/util.hpp"

using namespace benchforge;
using namespace benchforge::config;

namespace {

ConfigDocument doc_from(const std::string& yaml, const std::string& name) {
    return parse_document(yaml, name);
}

// --- independent merge oracle -------------------------------------------
//
// Re-implements chain resolution on a nested tree representation instead of
// flattened dotted paths: recursive map merge, wholesale leaf replacement,
// delete-sentinel pruning.  Agreement between the two implementations is
// checked on randomized document chains below.

struct TreeNode {
    std::map<std::string, TreeNode> children;
    std::optional<Entry> leaf;
    std::string origin;

    bool is_leaf() const { return leaf.has_value(); }
};

bool is_sentinel(const Entry& e) {
    return !e.is_list() && e.scalar().kind() == ValueKind::String &&
           e.scalar().as_string() == kDeleteSentinel;
}

TreeNode to_tree(const ConfigDocument& doc) {
    TreeNode root;
    for (const auto& [path, entry] : doc.entries) {
        TreeNode* node = &root;
        for (const auto& seg : util::split(path, '.')) node = &node->children[seg];
        node->leaf = entry;
        node->origin = doc.name;
    }
    return root;
}

// Deep copy that drops delete sentinels (a delete of a key the base never
// had must not materialize as a literal entry).
std::optional<TreeNode> strip_sentinels(const TreeNode& node) {
    if (node.is_leaf()) {
        if (is_sentinel(*node.leaf)) return std::nullopt;
        return node;
    }
    TreeNode out;
    for (const auto& [key, child] : node.children) {
        auto kept = strip_sentinels(child);
        if (kept) out.children.emplace(key, std::move(*kept));
    }
    if (out.children.empty()) return std::nullopt;
    return out;
}

void merge_into(TreeNode& base, const TreeNode& child) {
    for (const auto& [key, cnode] : child.children) {
        if (cnode.is_leaf() && is_sentinel(*cnode.leaf)) {
            base.children.erase(key);
            continue;
        }
        auto it = base.children.find(key);
        if (it == base.children.end()) {
            auto kept = strip_sentinels(cnode);
            if (kept) base.children.emplace(key, std::move(*kept));
        } else if (!it->second.is_leaf() && !cnode.is_leaf()) {
            merge_into(it->second, cnode);
        } else {
            auto kept = strip_sentinels(cnode);
            if (kept) it->second = std::move(*kept);
            else base.children.erase(it);
        }
    }
}

void flatten_tree(const TreeNode& node, const std::string& prefix,
                  std::map<std::string, Entry>& entries,
                  std::map<std::string, std::string>& provenance) {
    if (node.is_leaf()) {
        entries.emplace(prefix, *node.leaf);
        provenance.emplace(prefix, node.origin);
        return;
    }
    for (const auto& [key, child] : node.children)
        flatten_tree(child, prefix.empty() ? key : prefix + "." + key, entries, provenance);
}

// chain given base-first
std::pair<std::map<std::string, Entry>, std::map<std::string, std::string>> oracle_resolve(
    const std::vector<ConfigDocument>& chain) {
    TreeNode acc;
    for (const auto& doc : chain) merge_into(acc, to_tree(doc));
    std::map<std::string, Entry> entries;
    std::map<std::string, std::string> provenance;
    flatten_tree(acc, "", entries, provenance);
    return {entries, provenance};
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("scalar kinds are inferred like YAML") {
    auto doc = doc_from(R"(
a:
  count: 5
  rate: 2.5
  whole: 1.0
  flag: true
  off: False
  label: plain text
  quoted: "5"
  quoted_float: '2.5'
  sci: 1e3
  hexish: 0x10
)", "t");
    CHECK(doc.entries.at("a.count") == Entry(std::int64_t{5}));
    CHECK(doc.entries.at("a.rate") == Entry(2.5));
    CHECK(doc.entries.at("a.whole") == Entry(1.0));
    CHECK(doc.entries.at("a.whole").scalar().kind() == ValueKind::Float);
    CHECK(doc.entries.at("a.flag") == Entry(true));
    CHECK(doc.entries.at("a.off") == Entry(false));
    CHECK(doc.entries.at("a.label") == Entry("plain text"));
    CHECK(doc.entries.at("a.quoted") == Entry("5"));
    CHECK(doc.entries.at("a.quoted_float") == Entry("2.5"));
    CHECK(doc.entries.at("a.sci") == Entry(1000.0));
    CHECK(doc.entries.at("a.hexish") == Entry("0x10"));
}

TEST_CASE("lists flatten as leaves and stay homogeneous") {
    auto doc = doc_from("xs:\n  ys: [1, 2, 3]\n", "t");
    const Entry& e = doc.entries.at("xs.ys");
    REQUIRE(e.is_list());
    CHECK(e.list().size() == 3);
    CHECK(e.list()[1] == Value(std::int64_t{2}));
    CHECK_THROWS_AS(doc_from("xs: [1, two]\n", "t"), Error);
    CHECK_THROWS_AS(doc_from("xs: [[1], [2]]\n", "t"), Error);
    CHECK_THROWS_AS(doc_from("xs:\n  - k: v\n", "t"), Error);
}

TEST_CASE("malformed documents are rejected") {
    CHECK_THROWS_AS(doc_from("", "t"), Error);
    CHECK_THROWS_AS(doc_from("- 1\n- 2\n", "t"), Error);
    CHECK_THROWS_AS(doc_from("a:\n", "t"), Error);                 // empty value
    CHECK_THROWS_AS(doc_from("a: 1\na: 2\n", "t"), Error);         // duplicate key
    CHECK_THROWS_AS(doc_from("b:\n  a: 1\n  a: 2\n", "t"), Error); // nested duplicate
    CHECK_THROWS_AS(doc_from("a.b: 1\n", "t"), Error);             // dot in key
    CHECK_THROWS_AS(doc_from("__delete__: 1\n", "t"), Error);      // sentinel as key
    CHECK_THROWS_AS(doc_from("a: [__delete__]\n", "t"), Error);    // sentinel in list
    CHECK_THROWS_AS(doc_from("a: {}\n", "t"), Error);              // empty mapping
    CHECK_THROWS_AS(doc_from("a: [", "t"), Error);                 // YAML syntax
}

TEST_CASE("reserved keys: name, extends, roles") {
    auto doc = doc_from(R"(
name: leaf
extends: base
roles:
  run: machine
  model: model
run:
  nodes: 2
)", "fallback");
    CHECK(doc.name == "leaf");
    REQUIRE(doc.parent.has_value());
    CHECK(*doc.parent == "base");
    CHECK(doc.section_roles.at("run") == Role::Machine);
    CHECK(doc.section_roles.at("model") == Role::Model);
    CHECK(doc.entries.count("name") == 0);

    CHECK_THROWS_AS(doc_from("roles:\n  run: boss\n", "t"), Error);
    CHECK_THROWS_AS(doc_from("roles: machine\n", "t"), Error);
    CHECK_THROWS_AS(doc_from("name: [a]\n", "t"), Error);
    CHECK_THROWS_AS(doc_from("extends: [a]\n", "t"), Error);
}

TEST_CASE("resolve merges child over parent with provenance") {
    DocumentRepository repo;
    repo.put(doc_from("run:\n  nodes: 1\n  seed: 7\nmodel:\n  steps: 100\n", "base"));
    auto leaf = doc_from("extends: base\nrun:\n  nodes: 4\n", "leaf");
    auto rc = resolve(leaf, repo);
    CHECK(rc.entries.at("run.nodes") == Entry(4));
    CHECK(rc.entries.at("run.seed") == Entry(7));
    CHECK(rc.entries.at("model.steps") == Entry(100));
    CHECK(rc.provenance.at("run.nodes") == "leaf");
    CHECK(rc.provenance.at("run.seed") == "base");
    CHECK(rc.provenance.at("model.steps") == "base");
}

TEST_CASE("roles inherit and can be overridden") {
    DocumentRepository repo;
    repo.put(doc_from("roles:\n  run: machine\n  env: software\nrun:\n  nodes: 1\n", "base"));
    auto leaf = doc_from("extends: base\nroles:\n  env: user\n", "leaf");
    auto rc = resolve(leaf, repo);
    CHECK(rc.section_roles.at("run") == Role::Machine);
    CHECK(rc.section_roles.at("env") == Role::User);
}

TEST_CASE("overrides must preserve value kind") {
    DocumentRepository repo;
    repo.put(doc_from("a: 1\nb: 1.5\nc: true\nxs: [1, 2]\n", "base"));
    auto check_rejected = [&](const std::string& body) {
        auto leaf = doc_from("extends: base\n" + body, "leaf");
        CHECK_THROWS_AS(resolve(leaf, repo), Error);
    };
    check_rejected("a: text\n");       // int -> string
    check_rejected("a: 2.0\n");        // int -> float
    check_rejected("c: 1\n");          // bool -> int
    check_rejected("xs: 3\n");         // list -> scalar
    check_rejected("a: [1]\n");        // scalar -> list
    check_rejected("xs: [x, y]\n");    // int list -> string list

    auto ok = doc_from("extends: base\na: 9\nxs: [5]\n", "leaf");
    auto rc = resolve(ok, repo);
    CHECK(rc.entries.at("a") == Entry(9));
    CHECK(rc.entries.at("xs").list().size() == 1);
}

TEST_CASE("overrides must preserve shape") {
    DocumentRepository repo;
    repo.put(doc_from("sec:\n  inner: 1\nleafy: 2\n", "base"));
    CHECK_THROWS_AS(resolve(doc_from("extends: base\nsec: 5\n", "l1"), repo), Error);
    CHECK_THROWS_AS(resolve(doc_from("extends: base\nleafy:\n  sub: 5\n", "l2"), repo), Error);
}

TEST_CASE("delete sentinel removes keys and subtrees") {
    DocumentRepository repo;
    repo.put(doc_from("sec:\n  a: 1\n  b: 2\nother: 3\n", "base"));

    auto rc1 = resolve(doc_from("extends: base\nsec:\n  a: __delete__\n", "l"), repo);
    CHECK(rc1.entries.count("sec.a") == 0);
    CHECK(rc1.entries.at("sec.b") == Entry(2));

    auto rc2 = resolve(doc_from("extends: base\nsec: __delete__\n", "l"), repo);
    CHECK(rc2.entries.count("sec.a") == 0);
    CHECK(rc2.entries.count("sec.b") == 0);
    CHECK(rc2.entries.at("other") == Entry(3));

    // deleting something that was never there is a no-op, and the sentinel
    // itself never reaches the resolved config
    auto rc3 = resolve(doc_from("extends: base\nghost: __delete__\n", "l"), repo);
    CHECK(rc3.entries.count("ghost") == 0);
    for (const auto& [k, v] : rc3.entries)
        CHECK_FALSE(v.render() == kDeleteSentinel);
}

TEST_CASE("a deleted key can be reintroduced with a new kind further down") {
    DocumentRepository repo;
    repo.put(doc_from("x: 1\n", "a"));
    repo.put(doc_from("extends: a\nx: __delete__\n", "b"));
    auto rc = resolve(doc_from("extends: b\nx: label\n", "c"), repo);
    CHECK(rc.entries.at("x") == Entry("label"));
    CHECK(rc.provenance.at("x") == "c");
}

TEST_CASE("inheritance cycles and missing parents are errors") {
    DocumentRepository repo;
    repo.put(doc_from("name: a\nextends: b\nk: 1\n", "a"));
    repo.put(doc_from("name: b\nextends: a\nk: 2\n", "b"));
    CHECK_THROWS_WITH_AS(resolve(repo.get("a"), repo), doctest::Contains("cycle"), Error);
    CHECK_THROWS_WITH_AS(resolve(doc_from("extends: nowhere\n", "l"), repo),
                         doctest::Contains("nowhere"), Error);
}

TEST_CASE("chain depth is bounded") {
    DocumentRepository repo;
    repo.put(doc_from("k: 0\n", "d0"));
    for (int i = 1; i < 20; ++i)
        repo.put(doc_from("extends: d" + std::to_string(i - 1) + "\nk: " + std::to_string(i) + "\n",
                          "d" + std::to_string(i)));
    CHECK(resolve(repo.get("d15"), repo).entries.at("k") == Entry(15));  // 16 documents
    CHECK_THROWS_WITH_AS(resolve(repo.get("d16"), repo), doctest::Contains("depth"), Error);
}

TEST_CASE("repository resolves names and paths on disk") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / ("bf-cfg-" + util::random_base32(8));
    fs::create_directories(dir / "sub");
    util::write_file(dir / "base.yaml", "k: 1\n");
    util::write_file(dir / "leaf.yaml", "extends: base\nk: 2\n");
    util::write_file(dir / "sub" / "other.yaml", "extends: base\nk: 3\n");

    DocumentRepository repo(dir);
    CHECK(resolve(repo.get("leaf"), repo).entries.at("k") == Entry(2));
    CHECK(resolve(repo.get("leaf.yaml"), repo).entries.at("k") == Entry(2));
    CHECK(resolve(repo.get("sub/other.yaml"), repo).entries.at("k") == Entry(3));
    CHECK(resolve(repo.get((dir / "leaf.yaml").string()), repo).entries.at("k") == Entry(2));
    CHECK_THROWS_WITH_AS(repo.get("missing"), doctest::Contains("missing"), Error);
    fs::remove_all(dir);
}

TEST_CASE("schema validation checks required keys and kinds") {
    Schema schema = parse_schema(R"(
id: demo
required:
  run:
    nodes: int
    seeds: int_list
  model:
    rate: float
    name: string
    fast: bool
)", "demo");
    CHECK(schema.id == "demo");
    CHECK(schema.required.size() == 5);

    DocumentRepository repo;
    auto good = doc_from(
        "run:\n  nodes: 2\n  seeds: [1, 2]\nmodel:\n  rate: 1.5\n  name: m\n  fast: true\n", "g");
    auto rc = resolve(good, repo, schema);
    CHECK(rc.schema_id == "demo");

    auto missing = doc_from("run:\n  nodes: 2\n  seeds: [1]\nmodel:\n  rate: 1.5\n  name: m\n", "m");
    CHECK_THROWS_WITH_AS(resolve(missing, repo, schema), doctest::Contains("model.fast"), Error);

    auto wrong = doc_from(
        "run:\n  nodes: 2.5\n  seeds: [1]\nmodel:\n  rate: 1.5\n  name: m\n  fast: true\n", "w");
    CHECK_THROWS_WITH_AS(resolve(wrong, repo, schema), doctest::Contains("run.nodes"), Error);

    CHECK_THROWS_AS(parse_schema("required:\n  a: number\n", "s"), Error);
}

TEST_CASE("snapshot round-trips exactly, preserving kinds") {
    DocumentRepository repo;
    repo.put(doc_from(
        "roles:\n  m: model\nm:\n  steps: 100\n  rate: 0.1\n  whole: 1.0\n  on: true\n"
        "  tag: hi\n  xs: [1, 2, 3]\n  ys: [a, b]\n", "base"));
    auto rc = resolve(doc_from("extends: base\nm:\n  steps: 250\n", "leaf"), repo);

    std::string snapshot = rc.to_json();
    auto back = ResolvedConfig::from_json(snapshot);
    CHECK(back == rc);
    CHECK(back.entries.at("m.whole").scalar().kind() == ValueKind::Float);
    CHECK(back.entries.at("m.steps").scalar().kind() == ValueKind::Int);
    CHECK(back.provenance.at("m.steps") == "leaf");
    CHECK(back.section_roles.at("m") == Role::Model);
    // serialization is canonical: same config, same bytes
    CHECK(back.to_json() == snapshot);
    CHECK_THROWS_AS(ResolvedConfig::from_json("not json"), Error);
    CHECK_THROWS_AS(ResolvedConfig::from_json("{}"), Error);
}

TEST_CASE("axes enumerate in row-major order, last axis fastest") {
    DocumentRepository repo;
    auto rc = resolve(doc_from(R"(
experiment:
  axes:
    a: [1, 2]
    b: [x, y]
    c: [u]
)", "t"), repo);
    auto axes = parameter_axes(rc);
    REQUIRE(axes.size() == 3);
    CHECK(axes[0].key_path == "a");
    CHECK(axes[1].key_path == "b");
    CHECK(axes[2].key_path == "c");

    auto combos = expand_parameter_space(rc);
    REQUIRE(combos.size() == 4);
    auto at = [&](std::size_t i, const char* k) { return combos[i].assignments.at(k); };
    CHECK(combos[0].ordinal == 0);
    CHECK(at(0, "a") == Value(1)); CHECK(at(0, "b") == Value("x")); CHECK(at(0, "c") == Value("u"));
    CHECK(at(1, "a") == Value(1)); CHECK(at(1, "b") == Value("y"));
    CHECK(at(2, "a") == Value(2)); CHECK(at(2, "b") == Value("x"));
    CHECK(at(3, "a") == Value(2)); CHECK(at(3, "b") == Value("y"));
    for (std::size_t i = 0; i < combos.size(); ++i) CHECK(combos[i].ordinal == i);
}

TEST_CASE("a config without axes yields exactly one empty combination") {
    DocumentRepository repo;
    auto rc = resolve(doc_from("run:\n  nodes: 1\n", "t"), repo);
    auto combos = expand_parameter_space(rc);
    REQUIRE(combos.size() == 1);
    CHECK(combos[0].ordinal == 0);
    CHECK(combos[0].assignments.empty());
}

TEST_CASE("axis validation errors") {
    DocumentRepository repo;
    auto rc_scalar = resolve(doc_from("experiment:\n  axes:\n    a: 5\n", "t"), repo);
    CHECK_THROWS_WITH_AS(expand_parameter_space(rc_scalar), doctest::Contains("list"), Error);

    CHECK_THROWS_WITH_AS(
        expand_parameter_space(resolve(doc_from("experiment:\n  axes:\n    a: []\n", "t"), repo)),
        doctest::Contains("no values"), Error);

    std::string many = "experiment:\n  axes:\n";
    for (char c = 'a'; c < 'a' + 9; ++c) many += std::string("    ") + c + ": [1, 2]\n";
    CHECK_THROWS_WITH_AS(expand_parameter_space(resolve(doc_from(many, "t"), repo)),
                         doctest::Contains("axes"), Error);

    auto rc_kind = resolve(
        doc_from("run:\n  nodes: 1\nexperiment:\n  axes:\n    run:\n      nodes: [1.5, 2.5]\n", "t"),
        repo);
    CHECK_THROWS_AS(expand_parameter_space(rc_kind), Error);
}

TEST_CASE("combination assignments shadow the resolved config") {
    DocumentRepository repo;
    auto rc = resolve(
        doc_from("run:\n  nodes: 1\nexperiment:\n  axes:\n    run:\n      nodes: [1, 2, 4]\n", "t"),
        repo);
    auto combos = expand_parameter_space(rc);
    REQUIRE(combos.size() == 3);
    Entry scratch;
    const Entry* e = effective_entry(rc, combos[2], "run.nodes", scratch);
    REQUIRE(e != nullptr);
    CHECK(*e == Entry(4));
    e = effective_entry(rc, combos[2], "experiment.axes.run.nodes", scratch);
    REQUIRE(e != nullptr);
    CHECK(e->is_list());
}

TEST_CASE("diff reports exactly the differing keys") {
    DocumentRepository repo;
    auto a = resolve(doc_from("k: 1\nonly_a: x\nf: 1.0\n", "a"), repo);
    auto b = resolve(doc_from("k: 2\nonly_b: y\nf: 1.0\n", "b"), repo);
    auto d = diff(a, b);
    REQUIRE(d.size() == 3);
    CHECK(d[0].key_path == "k");
    CHECK(*d[0].left == Entry(1));
    CHECK(*d[0].right == Entry(2));
    CHECK(d[1].key_path == "only_a");
    CHECK_FALSE(d[1].right.has_value());
    CHECK(d[2].key_path == "only_b");
    CHECK_FALSE(d[2].left.has_value());

    // same rendering, different kind: still a difference
    auto c1 = resolve(doc_from("v: 1\n", "c1"), repo);
    auto c2 = resolve(doc_from("v: 1.0\n", "c2"), repo);
    CHECK(diff(c1, c2).size() == 1);
    CHECK(diff(a, a).empty());
}

TEST_CASE("resolution agrees with a naive nested-tree merge oracle") {
    std::mt19937 rng(20260815);
    // A fixed universe of prefix-free paths, each with a fixed kind, so the
    // generated chains never trip shape or kind violations.
    const std::vector<std::pair<std::string, int>> universe = {
        {"alpha.one", 0},  {"alpha.two", 1},   {"alpha.deep.x", 2}, {"alpha.deep.y", 3},
        {"beta.one", 1},   {"beta.three", 4},  {"gamma", 0},        {"delta.a.b.c", 2},
        {"delta.a.b.d", 0}, {"epsilon.list", 4}, {"zeta.flag", 3},  {"zeta.text", 2},
    };
    auto random_value = [&](int kind) -> Entry {
        switch (kind) {
        case 0: return Entry(static_cast<std::int64_t>(rng() % 1000));
        case 1: return Entry(static_cast<double>(rng() % 1000) / 8.0);
        case 2: return Entry("s" + std::to_string(rng() % 100));
        case 3: return Entry(rng() % 2 == 0);
        default: {
            ValueList l;
            std::size_t n = 1 + rng() % 4;
            for (std::size_t i = 0; i < n; ++i) l.push_back(Value(static_cast<std::int64_t>(rng() % 50)));
            return Entry(std::move(l));
        }
        }
    };

    for (int trial = 0; trial < 60; ++trial) {
        std::size_t chain_len = 2 + rng() % 5;
        std::vector<ConfigDocument> chain;  // base first
        for (std::size_t d = 0; d < chain_len; ++d) {
            ConfigDocument doc;
            doc.name = "doc" + std::to_string(d);
            if (d > 0) doc.parent = "doc" + std::to_string(d - 1);
            for (const auto& [path, kind] : universe) {
                int roll = static_cast<int>(rng() % 10);
                if (roll < 4) continue;                     // omit
                if (roll == 4 && d > 0) doc.entries.emplace(path, Entry(kDeleteSentinel));
                else doc.entries.emplace(path, random_value(kind));
            }
            chain.push_back(std::move(doc));
        }
        DocumentRepository repo;
        for (const auto& d : chain) repo.put(d);

        auto rc = resolve(chain.back(), repo);
        auto [expect_entries, expect_prov] = oracle_resolve(chain);
        CHECK(rc.entries == expect_entries);
        CHECK(rc.provenance == expect_prov);
    }
}

TEST_CASE("resolution is deterministic") {
    DocumentRepository repo;
    repo.put(doc_from("a:\n  x: 0.30000000000000004\n  y: [1.5, 2.25]\nb: true\n", "base"));
    auto leaf = doc_from("extends: base\na:\n  x: 0.1\n", "leaf");
    auto s1 = resolve(leaf, repo).to_json();
    auto s2 = resolve(leaf, repo).to_json();
    CHECK(s1 == s2);
}

}  // TEST_SUITE
