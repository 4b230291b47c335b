#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "benchforge/config.hpp"

namespace benchforge::templates {

// Layer 1: a workflow names the ordered pipeline stages.
struct WorkflowTemplate {
    std::string name;
    std::vector<std::string> stages;
};

// Layer 2: per-stage command skeletons for a platform.  A skeleton line is
// either a literal command or a named slot to be filled by the machine
// layer (`@block <name>`).
struct SkeletonLine {
    enum class Kind { Literal, Slot } kind = Kind::Literal;
    std::string text;  // command text or slot name
};

struct PlatformStageTemplate {
    std::string stage;
    std::vector<SkeletonLine> skeleton;
};

// Machine layer: named blocks of literal lines that may pull in
// implementation templates (`@impl <name>`) or other blocks (`@block`).
struct MachineBlockLine {
    enum class Kind { Literal, ImplRef, BlockRef } kind = Kind::Literal;
    std::string text;
};

struct MachineBlock {
    std::string name;
    std::vector<MachineBlockLine> body;
};

// Layer 3: concrete command sequences for one simulator/tool.
struct ImplementationTemplate {
    std::string name;
    std::vector<std::string> commands;
};

// All three layers composed for one (workflow, platform, machine, impl set)
// choice: per-stage command lists that still carry {{key}} placeholders.
struct PipelineBlueprint {
    std::string workflow;
    std::vector<std::string> stages;
    std::map<std::string, std::vector<std::string>> stage_commands;
    std::map<std::string, std::set<std::string>> stage_keys;  // placeholder keys per stage
    std::set<std::string> referenced_keys;
};

// One fully substituted pipeline for one parameter combination.
struct PipelineInstance {
    std::size_t ordinal = 0;
    config::ParameterCombination combination;
    std::vector<std::string> stages;
    std::map<std::string, std::vector<std::string>> stage_commands;

    // Canonical text form; identical combinations yield identical bytes.
    std::string serialize() const;
};

struct TemplateSet {
    WorkflowTemplate workflow;
    std::vector<PlatformStageTemplate> platform;
    std::vector<MachineBlock> machine_blocks;
    std::vector<ImplementationTemplate> implementations;
};

// Parsers for the individual file formats (used by the loader and tests).
WorkflowTemplate parse_workflow(const std::string& text, const std::string& name);
PlatformStageTemplate parse_platform_stage(const std::string& text, const std::string& stage);
MachineBlock parse_machine_block(const std::string& text, const std::string& name);
ImplementationTemplate parse_implementation(const std::string& text, const std::string& name);

// Loads the four layers from a site root:
//   templates/<workflow>/stages
//   templates/platform/<platform>/<stage>
//   templates/machine/<machine>/<block>
//   templates/impl/<impl>
TemplateSet load_template_set(const std::filesystem::path& site_root, const std::string& workflow,
                              const std::string& platform, const std::string& machine);

// Pure: same inputs, same blueprint.  Validates slot/impl/block references,
// detects block cycles, and checks placeholder syntax.
PipelineBlueprint compose_blueprint(const TemplateSet& set);

// Substitutes placeholders from the combination (axis assignments shadow
// the resolved config).  Fails on unresolved placeholders, list-valued
// placeholders, and substitutions that reintroduce placeholder syntax.
PipelineInstance instantiate(const PipelineBlueprint& bp, const config::ResolvedConfig& rc,
                             const config::ParameterCombination& combo);

// Longest workflow prefix whose commands reference no axis key; those
// stages run once, everything after fans out per combination.
struct StageSplit {
    std::vector<std::string> shared;
    std::vector<std::string> fanout;
};

StageSplit plan_stage_split(const PipelineBlueprint& bp,
                            const std::vector<config::ParameterAxis>& axes);

// Scans one line for {{dotted.key}} placeholders, validating syntax.
std::set<std::string> scan_placeholders(const std::string& line);

}  // namespace benchforge::templates
