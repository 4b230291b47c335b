#include "benchforge/templates.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "benchforge/errors.hpp"
#include "benchforge/util.hpp"

namespace benchforge::templates {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorKind::Template, msg); }

constexpr const char* kBlockDirective = "@block";
constexpr const char* kImplDirective = "@impl";

// Splits template text into meaningful lines; blank lines and '#' comments
// carry no commands.
std::vector<std::string> template_lines(const std::string& text) {
    std::vector<std::string> out;
    for (const auto& raw : util::split(text, '\n')) {
        std::string line = util::trim(raw);
        if (line.empty() || line[0] == '#') continue;
        out.push_back(std::move(line));
    }
    return out;
}

// Returns the argument of "@directive <arg>" or nullopt.
std::optional<std::string> directive_arg(const std::string& line, const char* directive,
                                         const std::string& where) {
    if (!util::starts_with(line, directive)) return std::nullopt;
    std::string rest = line.substr(std::strlen(directive));
    if (!rest.empty() && rest[0] != ' ' && rest[0] != '\t') return std::nullopt;
    std::string arg = util::trim(rest);
    if (arg.empty()) fail("'" + std::string(directive) + "' without a name in " + where);
    return arg;
}

void check_placeholder_syntax(const std::string& line, const std::string& where) {
    scan_placeholders(line);  // throws on malformed syntax
    (void)where;
}

void expand_block(const std::string& block_name,
                  const std::map<std::string, const MachineBlock*>& blocks,
                  const std::map<std::string, const ImplementationTemplate*>& impls,
                  std::vector<std::string>& stack, std::vector<std::string>& out) {
    auto bit = blocks.find(block_name);
    if (bit == blocks.end()) fail("no machine block named '" + block_name + "'");
    if (std::find(stack.begin(), stack.end(), block_name) != stack.end()) {
        std::string cycle;
        for (const auto& b : stack) cycle += b + " -> ";
        fail("block reference cycle: " + cycle + block_name);
    }
    stack.push_back(block_name);
    for (const auto& line : bit->second->body) {
        switch (line.kind) {
        case MachineBlockLine::Kind::Literal:
            out.push_back(line.text);
            break;
        case MachineBlockLine::Kind::ImplRef: {
            auto iit = impls.find(line.text);
            if (iit == impls.end())
                fail("block '" + block_name + "' references unknown implementation '" + line.text +
                     "'");
            for (const auto& cmd : iit->second->commands) out.push_back(cmd);
            break;
        }
        case MachineBlockLine::Kind::BlockRef:
            expand_block(line.text, blocks, impls, stack, out);
            break;
        }
    }
    stack.pop_back();
}

}  // namespace

std::set<std::string> scan_placeholders(const std::string& line) {
    std::set<std::string> keys;
    std::size_t pos = 0;
    while (true) {
        std::size_t open = line.find("{{", pos);
        if (open == std::string::npos) break;
        std::size_t close = line.find("}}", open + 2);
        if (close == std::string::npos)
            fail("unbalanced '{{' in template line: " + line);
        std::string key = line.substr(open + 2, close - open - 2);
        if (key.empty() || key.find('{') != std::string::npos ||
            key.find(' ') != std::string::npos || key.find('\t') != std::string::npos ||
            !valid_key_path(key))
            fail("malformed placeholder '{{" + key + "}}' in template line: " + line);
        keys.insert(key);
        pos = close + 2;
    }
    // a lone closing pair after the last placeholder is fine; a stray one
    // before any opening pair is almost certainly a mistake
    std::size_t stray = line.find("}}");
    std::size_t first_open = line.find("{{");
    if (stray != std::string::npos && (first_open == std::string::npos || stray < first_open))
        fail("unbalanced '}}' in template line: " + line);
    return keys;
}

WorkflowTemplate parse_workflow(const std::string& text, const std::string& name) {
    WorkflowTemplate wf;
    wf.name = name;
    std::set<std::string> seen;
    for (const auto& line : template_lines(text)) {
        if (line.find(' ') != std::string::npos || line.find('\t') != std::string::npos)
            fail("stage name '" + line + "' in workflow '" + name + "' contains whitespace");
        if (!seen.insert(line).second)
            fail("stage '" + line + "' listed twice in workflow '" + name + "'");
        wf.stages.push_back(line);
    }
    if (wf.stages.empty()) fail("workflow '" + name + "' defines no stages");
    return wf;
}

PlatformStageTemplate parse_platform_stage(const std::string& text, const std::string& stage) {
    PlatformStageTemplate tpl;
    tpl.stage = stage;
    for (const auto& line : template_lines(text)) {
        if (auto arg = directive_arg(line, kBlockDirective, "stage '" + stage + "'")) {
            tpl.skeleton.push_back({SkeletonLine::Kind::Slot, *arg});
        } else if (line[0] == '@') {
            fail("unknown directive in stage '" + stage + "': " + line);
        } else {
            check_placeholder_syntax(line, "stage '" + stage + "'");
            tpl.skeleton.push_back({SkeletonLine::Kind::Literal, line});
        }
    }
    return tpl;
}

MachineBlock parse_machine_block(const std::string& text, const std::string& name) {
    MachineBlock block;
    block.name = name;
    for (const auto& line : template_lines(text)) {
        if (auto arg = directive_arg(line, kImplDirective, "block '" + name + "'")) {
            block.body.push_back({MachineBlockLine::Kind::ImplRef, *arg});
        } else if (auto barg = directive_arg(line, kBlockDirective, "block '" + name + "'")) {
            block.body.push_back({MachineBlockLine::Kind::BlockRef, *barg});
        } else if (line[0] == '@') {
            fail("unknown directive in block '" + name + "': " + line);
        } else {
            check_placeholder_syntax(line, "block '" + name + "'");
            block.body.push_back({MachineBlockLine::Kind::Literal, line});
        }
    }
    return block;
}

ImplementationTemplate parse_implementation(const std::string& text, const std::string& name) {
    ImplementationTemplate impl;
    impl.name = name;
    for (const auto& line : template_lines(text)) {
        if (util::starts_with(line, "@"))
            fail("implementation '" + name + "' may not use directives: " + line);
        check_placeholder_syntax(line, "implementation '" + name + "'");
        impl.commands.push_back(line);
    }
    if (impl.commands.empty()) fail("implementation '" + name + "' has no commands");
    return impl;
}

TemplateSet load_template_set(const std::filesystem::path& site_root, const std::string& workflow,
                              const std::string& platform, const std::string& machine) {
    namespace fs = std::filesystem;
    TemplateSet set;

    fs::path wf_file = site_root / "templates" / workflow / "stages";
    if (!fs::is_regular_file(wf_file))
        fail("no workflow template '" + workflow + "' under " +
             (site_root / "templates").string());
    set.workflow = parse_workflow(util::read_file(wf_file), workflow);

    fs::path platform_dir = site_root / "templates" / "platform" / platform;
    if (!fs::is_directory(platform_dir))
        fail("no platform template directory '" + platform + "' under " +
             (site_root / "templates" / "platform").string());
    for (const auto& stage : set.workflow.stages) {
        fs::path f = platform_dir / stage;
        if (!fs::is_regular_file(f))
            fail("platform '" + platform + "' has no template for stage '" + stage + "'");
        set.platform.push_back(parse_platform_stage(util::read_file(f), stage));
    }

    fs::path machine_dir = site_root / "templates" / "machine" / machine;
    if (!fs::is_directory(machine_dir))
        fail("no machine template directory '" + machine + "' under " +
             (site_root / "templates" / "machine").string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(machine_dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files)
        set.machine_blocks.push_back(parse_machine_block(util::read_file(f), f.filename().string()));

    fs::path impl_dir = site_root / "templates" / "impl";
    if (fs::is_directory(impl_dir)) {
        files.clear();
        for (const auto& e : fs::directory_iterator(impl_dir))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files)
            set.implementations.push_back(
                parse_implementation(util::read_file(f), f.filename().string()));
    }
    return set;
}

PipelineBlueprint compose_blueprint(const TemplateSet& set) {
    PipelineBlueprint bp;
    bp.workflow = set.workflow.name;
    bp.stages = set.workflow.stages;

    std::map<std::string, const PlatformStageTemplate*> by_stage;
    for (const auto& tpl : set.platform) by_stage.emplace(tpl.stage, &tpl);
    std::map<std::string, const MachineBlock*> blocks;
    for (const auto& b : set.machine_blocks) {
        if (!blocks.emplace(b.name, &b).second) fail("duplicate machine block '" + b.name + "'");
    }
    std::map<std::string, const ImplementationTemplate*> impls;
    for (const auto& i : set.implementations) {
        if (!impls.emplace(i.name, &i).second) fail("duplicate implementation '" + i.name + "'");
    }

    for (const auto& stage : bp.stages) {
        auto it = by_stage.find(stage);
        if (it == by_stage.end()) fail("no platform template for stage '" + stage + "'");
        std::vector<std::string> commands;
        for (const auto& line : it->second->skeleton) {
            if (line.kind == SkeletonLine::Kind::Literal) {
                commands.push_back(line.text);
            } else {
                std::vector<std::string> stack;
                expand_block(line.text, blocks, impls, stack, commands);
            }
        }
        std::set<std::string> keys;
        for (const auto& cmd : commands)
            for (const auto& k : scan_placeholders(cmd)) keys.insert(k);
        bp.referenced_keys.insert(keys.begin(), keys.end());
        bp.stage_keys.emplace(stage, std::move(keys));
        bp.stage_commands.emplace(stage, std::move(commands));
    }
    return bp;
}

PipelineInstance instantiate(const PipelineBlueprint& bp, const config::ResolvedConfig& rc,
                             const config::ParameterCombination& combo) {
    PipelineInstance inst;
    inst.ordinal = combo.ordinal;
    inst.combination = combo;
    inst.stages = bp.stages;

    auto substitute = [&](const std::string& line) {
        std::string out;
        std::size_t pos = 0;
        while (true) {
            std::size_t open = line.find("{{", pos);
            if (open == std::string::npos) {
                out.append(line, pos, std::string::npos);
                break;
            }
            std::size_t close = line.find("}}", open + 2);
            out.append(line, pos, open - pos);
            std::string key = line.substr(open + 2, close - open - 2);
            Entry scratch;
            const Entry* e = config::effective_entry(rc, combo, key, scratch);
            if (!e) fail("unresolved placeholder '{{" + key + "}}' in: " + line);
            if (e->is_list())
                fail("placeholder '{{" + key + "}}' resolves to a list in: " + line);
            std::string rendered = e->scalar().render();
            if (rendered.find("{{") != std::string::npos)
                fail("value of '" + key + "' reintroduces placeholder syntax: " + rendered);
            out += rendered;
            pos = close + 2;
        }
        return out;
    };

    for (const auto& stage : bp.stages) {
        std::vector<std::string> commands;
        for (const auto& cmd : bp.stage_commands.at(stage)) commands.push_back(substitute(cmd));
        inst.stage_commands.emplace(stage, std::move(commands));
    }
    return inst;
}

std::string PipelineInstance::serialize() const {
    std::ostringstream out;
    out << "pipeline-instance v1\n";
    out << "combination: " << ordinal << "\n";
    for (const auto& [key, value] : combination.assignments)
        out << "assign: " << key << " = " << value.render() << "\n";
    for (const auto& stage : stages) {
        out << "stage: " << stage << "\n";
        auto it = stage_commands.find(stage);
        if (it != stage_commands.end())
            for (const auto& cmd : it->second) out << "  " << cmd << "\n";
    }
    return out.str();
}

StageSplit plan_stage_split(const PipelineBlueprint& bp,
                            const std::vector<config::ParameterAxis>& axes) {
    std::set<std::string> axis_keys;
    for (const auto& a : axes) axis_keys.insert(a.key_path);

    StageSplit split;
    bool fanout = false;
    for (const auto& stage : bp.stages) {
        if (!fanout) {
            const auto& keys = bp.stage_keys.at(stage);
            for (const auto& k : keys)
                if (axis_keys.count(k)) {
                    fanout = true;
                    break;
                }
        }
        (fanout ? split.fanout : split.shared).push_back(stage);
    }
    return split;
}

}  // namespace benchforge::templates
