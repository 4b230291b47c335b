#include <doctest.h>

#include <filesystem>

#include "benchforge/config.hpp"
#include "benchforge/errors.hpp"
#include "benchforge/templates.hpp"
#include "benchforge/util.hpp"

using namespace benchforge;
using namespace benchforge::templates;

namespace {

// A small three-layer fixture: two-stage workflow, platform skeletons with
// one slot each, machine blocks that pull in an implementation.
TemplateSet fixture_set() {
    TemplateSet set;
    set.workflow = parse_workflow("# build then run\nBuild\nExecution\n", "bench");
    set.platform.push_back(parse_platform_stage(
        "echo preparing {{model.name}}\n@block compile\n", "Build"));
    set.platform.push_back(parse_platform_stage("@block launch\n", "Execution"));
    set.machine_blocks.push_back(parse_machine_block(
        "echo module load {{env.stack}}\n@impl make-model\n", "compile"));
    set.machine_blocks.push_back(parse_machine_block("@impl run-model\n", "launch"));
    set.implementations.push_back(parse_implementation(
        "make -j {{build.jobs}} {{model.name}}\n", "make-model"));
    set.implementations.push_back(parse_implementation(
        "simulate --nodes {{run.nodes}} --seed {{run.seed}} --rate {{model.rate}}\n", "run-model"));
    return set;
}

config::ResolvedConfig fixture_config() {
    config::DocumentRepository repo;
    auto doc = config::parse_document(R"(
model:
  name: netA
  rate: 2.0
env:
  stack: 2026a
build:
  jobs: 8
run:
  nodes: 1
  seed: 1
experiment:
  axes:
    run:
      nodes: [1, 2]
      seed: [1, 2, 3]
)", "fix");
    return config::resolve(doc, repo);
}

}  // namespace

TEST_SUITE("templates") {

TEST_CASE("workflow files list stages in order") {
    auto wf = parse_workflow("# comment\nPreparation\n\nBuild\nExecution\n", "w");
    CHECK(wf.stages == std::vector<std::string>{"Preparation", "Build", "Execution"});
    CHECK_THROWS_AS(parse_workflow("", "w"), Error);
    CHECK_THROWS_AS(parse_workflow("Build\nBuild\n", "w"), Error);
    CHECK_THROWS_AS(parse_workflow("Two Words\n", "w"), Error);
}

TEST_CASE("platform skeletons mix literals and slots") {
    auto tpl = parse_platform_stage("echo hi\n@block setup\nrun {{a.b}}\n", "S");
    REQUIRE(tpl.skeleton.size() == 3);
    CHECK(tpl.skeleton[0].kind == SkeletonLine::Kind::Literal);
    CHECK(tpl.skeleton[1].kind == SkeletonLine::Kind::Slot);
    CHECK(tpl.skeleton[1].text == "setup");
    CHECK_THROWS_AS(parse_platform_stage("@block\n", "S"), Error);
    CHECK_THROWS_AS(parse_platform_stage("@impl x\n", "S"), Error);  // machine-layer directive
}

TEST_CASE("machine blocks support impl and block references") {
    auto block = parse_machine_block("echo a\n@impl tool\n@block other\n", "b");
    REQUIRE(block.body.size() == 3);
    CHECK(block.body[0].kind == MachineBlockLine::Kind::Literal);
    CHECK(block.body[1].kind == MachineBlockLine::Kind::ImplRef);
    CHECK(block.body[2].kind == MachineBlockLine::Kind::BlockRef);
    CHECK_THROWS_AS(parse_machine_block("@magic x\n", "b"), Error);
}

TEST_CASE("implementations are plain command lists") {
    auto impl = parse_implementation("cmd one\ncmd two\n", "i");
    CHECK(impl.commands.size() == 2);
    CHECK_THROWS_AS(parse_implementation("", "i"), Error);
    CHECK_THROWS_AS(parse_implementation("@block x\n", "i"), Error);
}

TEST_CASE("placeholder scanning validates syntax") {
    auto keys = scan_placeholders("run --n {{run.nodes}} --s {{run.seed}} plain");
    CHECK(keys == std::set<std::string>{"run.nodes", "run.seed"});
    CHECK(scan_placeholders("no placeholders").empty());
    CHECK_THROWS_AS(scan_placeholders("broken {{run.nodes"), Error);
    CHECK_THROWS_AS(scan_placeholders("broken run.nodes}} {{x}}"), Error);
    CHECK_THROWS_AS(scan_placeholders("empty {{}}"), Error);
    CHECK_THROWS_AS(scan_placeholders("spaced {{a b}}"), Error);
    CHECK_THROWS_AS(scan_placeholders("nested {{a{{b}}}}"), Error);
    CHECK_THROWS_AS(scan_placeholders("dots {{a..b}}"), Error);
}

TEST_CASE("blueprint composition expands slots, blocks, and impls in order") {
    auto bp = compose_blueprint(fixture_set());
    CHECK(bp.stages == std::vector<std::string>{"Build", "Execution"});
    const auto& build = bp.stage_commands.at("Build");
    REQUIRE(build.size() == 3);
    CHECK(build[0] == "echo preparing {{model.name}}");
    CHECK(build[1] == "echo module load {{env.stack}}");
    CHECK(build[2] == "make -j {{build.jobs}} {{model.name}}");
    const auto& exec = bp.stage_commands.at("Execution");
    REQUIRE(exec.size() == 1);
    CHECK(bp.stage_keys.at("Build") ==
          std::set<std::string>{"model.name", "env.stack", "build.jobs"});
    CHECK(bp.stage_keys.at("Execution") ==
          std::set<std::string>{"run.nodes", "run.seed", "model.rate"});
    CHECK(bp.referenced_keys.count("env.stack") == 1);
}

TEST_CASE("composition errors name the offending reference") {
    auto set = fixture_set();
    set.platform[0].skeleton.push_back({SkeletonLine::Kind::Slot, "ghost"});
    CHECK_THROWS_WITH_AS(compose_blueprint(set), doctest::Contains("ghost"), Error);

    set = fixture_set();
    set.machine_blocks[0].body.push_back({MachineBlockLine::Kind::ImplRef, "ghost-impl"});
    CHECK_THROWS_WITH_AS(compose_blueprint(set), doctest::Contains("ghost-impl"), Error);

    set = fixture_set();
    set.platform.erase(set.platform.begin());  // drop Build template
    CHECK_THROWS_WITH_AS(compose_blueprint(set), doctest::Contains("Build"), Error);

    // self-cycle and two-block cycle
    set = fixture_set();
    set.machine_blocks[0].body.push_back({MachineBlockLine::Kind::BlockRef, "compile"});
    CHECK_THROWS_WITH_AS(compose_blueprint(set), doctest::Contains("cycle"), Error);

    set = fixture_set();
    set.machine_blocks[0].body.push_back({MachineBlockLine::Kind::BlockRef, "launch"});
    set.machine_blocks[1].body.push_back({MachineBlockLine::Kind::BlockRef, "compile"});
    CHECK_THROWS_WITH_AS(compose_blueprint(set), doctest::Contains("cycle"), Error);
}

TEST_CASE("instantiation substitutes axis assignments over resolved values") {
    auto bp = compose_blueprint(fixture_set());
    auto rc = fixture_config();
    auto combos = config::expand_parameter_space(rc);
    REQUIRE(combos.size() == 6);

    auto inst = instantiate(bp, rc, combos[5]);  // nodes=2, seed=3
    CHECK(inst.ordinal == 5);
    CHECK(inst.stage_commands.at("Execution")[0] ==
          "simulate --nodes 2 --seed 3 --rate 2");  // 2.0 renders as shortest round-trip
    CHECK(inst.stage_commands.at("Build")[1] == "echo module load 2026a");

    // every combination yields a distinct instance
    std::set<std::string> serialized;
    for (const auto& c : combos) serialized.insert(instantiate(bp, rc, c).serialize());
    CHECK(serialized.size() == combos.size());
    for (const auto& s : serialized) CHECK(s.find("{{") == std::string::npos);
}

TEST_CASE("instantiation is deterministic byte for byte") {
    auto rc = fixture_config();
    auto combos = config::expand_parameter_space(rc);
    auto a = instantiate(compose_blueprint(fixture_set()), rc, combos[3]).serialize();
    auto b = instantiate(compose_blueprint(fixture_set()), rc, combos[3]).serialize();
    CHECK(a == b);
    CHECK(a.find("combination: 3") != std::string::npos);
}

TEST_CASE("instantiation failure modes") {
    auto set = fixture_set();
    set.implementations[1].commands[0] += " --extra {{run.missing}}";
    auto bp = compose_blueprint(set);
    auto rc = fixture_config();
    auto combos = config::expand_parameter_space(rc);
    CHECK_THROWS_WITH_AS(instantiate(bp, rc, combos[0]), doctest::Contains("run.missing"), Error);

    // a placeholder may not resolve to a list
    set = fixture_set();
    set.implementations[1].commands[0] = "simulate {{experiment.axes.run.seed}}";
    bp = compose_blueprint(set);
    CHECK_THROWS_WITH_AS(instantiate(bp, rc, combos[0]), doctest::Contains("list"), Error);

    // a substituted value may not reintroduce placeholder syntax
    config::DocumentRepository repo;
    auto sneaky = config::resolve(
        config::parse_document("model:\n  name: \"{{env.stack}}\"\n  rate: 1.0\nenv:\n  stack: s\n"
                               "build:\n  jobs: 1\nrun:\n  nodes: 1\n  seed: 1\n", "sneaky"),
        repo);
    bp = compose_blueprint(fixture_set());
    config::ParameterCombination empty;
    CHECK_THROWS_WITH_AS(instantiate(bp, sneaky, empty), doctest::Contains("reintroduces"), Error);
}

TEST_CASE("stage split is the longest axis-free prefix") {
    auto bp = compose_blueprint(fixture_set());
    auto rc = fixture_config();
    auto axes = config::parameter_axes(rc);

    auto split = plan_stage_split(bp, axes);
    CHECK(split.shared == std::vector<std::string>{"Build"});
    CHECK(split.fanout == std::vector<std::string>{"Execution"});

    // no axes: everything is shared
    auto none = plan_stage_split(bp, {});
    CHECK(none.shared.size() == 2);
    CHECK(none.fanout.empty());

    // axis referenced by the first stage: everything fans out
    std::vector<config::ParameterAxis> early = {{"model.name", {Value("a"), Value("b")}}};
    auto all = plan_stage_split(bp, early);
    CHECK(all.shared.empty());
    CHECK(all.fanout.size() == 2);

    // once fanned out, later axis-free stages stay fanned out
    TemplateSet set = fixture_set();
    set.workflow = parse_workflow("Build\nExecution\nWrapup\n", "bench");
    set.platform.push_back(parse_platform_stage("echo done\n", "Wrapup"));
    auto split3 = plan_stage_split(compose_blueprint(set), config::parameter_axes(rc));
    CHECK(split3.shared == std::vector<std::string>{"Build"});
    CHECK(split3.fanout == std::vector<std::string>{"Execution", "Wrapup"});
}

TEST_CASE("template sets load from a site directory") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / ("bf-tpl-" + util::random_base32(8));
    fs::create_directories(dir / "templates" / "bench");
    fs::create_directories(dir / "templates" / "platform" / "shell");
    fs::create_directories(dir / "templates" / "machine" / "boxy");
    fs::create_directories(dir / "templates" / "impl");
    util::write_file(dir / "templates" / "bench" / "stages", "Build\nExecution\n");
    util::write_file(dir / "templates" / "platform" / "shell" / "Build", "@block compile\n");
    util::write_file(dir / "templates" / "platform" / "shell" / "Execution", "@block launch\n");
    util::write_file(dir / "templates" / "machine" / "boxy" / "compile", "echo make\n");
    util::write_file(dir / "templates" / "machine" / "boxy" / "launch", "@impl runit\n");
    util::write_file(dir / "templates" / "impl" / "runit", "run --n {{run.nodes}}\n");

    auto set = load_template_set(dir, "bench", "shell", "boxy");
    CHECK(set.workflow.stages.size() == 2);
    CHECK(set.machine_blocks.size() == 2);
    REQUIRE(set.implementations.size() == 1);
    CHECK(set.implementations[0].name == "runit");
    auto bp = compose_blueprint(set);
    CHECK(bp.stage_commands.at("Execution")[0] == "run --n {{run.nodes}}");

    CHECK_THROWS_WITH_AS(load_template_set(dir, "nope", "shell", "boxy"),
                         doctest::Contains("nope"), Error);
    CHECK_THROWS_WITH_AS(load_template_set(dir, "bench", "gone", "boxy"),
                         doctest::Contains("gone"), Error);
    CHECK_THROWS_WITH_AS(load_template_set(dir, "bench", "shell", "ghost"),
                         doctest::Contains("ghost"), Error);

    // platform must cover every stage of the workflow
    fs::remove(dir / "templates" / "platform" / "shell" / "Execution");
    CHECK_THROWS_WITH_AS(load_template_set(dir, "bench", "shell", "boxy"),
                         doctest::Contains("Execution"), Error);
    fs::remove_all(dir);
}

}  // TEST_SUITE
