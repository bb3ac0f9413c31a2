#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pathise/kg_store.hpp"
#include "pathise/path_engine.hpp"

namespace pathise {

inline constexpr const char* kPathArrow = "\xE2\x86\x92";  // U+2192
inline constexpr const char* kEndSeparator = "<SEP>";

extern const char* const kGenerationInstruction;
extern const char* const kReasoningInstruction;

/// One supervised example for fine-tuning an external LLM path generator.
struct FinetuneRecord {
  std::string id;  // question id, not part of the prompt
  std::string instruction;
  std::string input;   // "Question: ...\nTopic entity: ..."
  std::string output;  // "<PATH> r1 → r2 </PATH>"
};

std::string serialize_path_output(std::span<const std::string> relation_labels);
std::string serialize_path_output(const TripleStore& store, const RelationPath& path);

FinetuneRecord make_finetune_record(const std::string& id, const std::string& question,
                                    const std::string& topic_entity, std::span<const std::string> relation_labels);

/// Full generation prompt up to and including the "Output:" line.
std::string render_generation_prompt(const std::string& question, const std::string& topic_entity);
/// Prompt followed by the record's output line.
std::string render_finetune_text(const FinetuneRecord& record);

/// One record per (question, topic entity, supervision path).
std::vector<FinetuneRecord> emit_finetune_dataset(const TripleStore& store, const QuestionSample& sample,
                                                  std::span<const RelationPath> supervision);

struct ParsedPath {
  bool ok = false;        // tags found and span nonempty
  std::string error;      // set when !ok
  std::vector<std::string> labels;
  std::vector<std::string> unresolved;
  std::optional<RelationPath> path;  // set only when every label resolved
};

ParsedPath parse_generated_path(const std::string& text, const TripleStore& store);

/// Label-level evidence, the form the reasoning prompt is written in.
struct EvidenceText {
  std::string topic_entity;
  std::vector<std::string> relations;
  std::vector<std::string> end_entities;
};

EvidenceText to_text(const TripleStore& store, const GroundedEvidence& evidence);

std::string verbalize_evidence(const std::string& question, std::span<const EvidenceText> evidence);
std::string verbalize_evidence(const TripleStore& store, const std::string& question,
                               std::span<const GroundedEvidence> evidence);

}  // namespace pathise
