#include "pathise/prompts.hpp"

namespace pathise {

const char* const kGenerationInstruction =
    "Reasoning path is a sequence of relations in the Knowledge Graph that connects the topic entity in the question "
    "to answer entities. Given a question, please generate a reasoning path in the Knowledge Graph starting from the "
    "topic entity to answer the question.";

const char* const kReasoningInstruction =
    "You are a helpful and precise assistant for answering questions based on the provided reasoning paths on a "
    "knowledge graph. Please return all the possible answers from the entities mentioned in the reasoning paths. "
    "Please return each answer at a new line.";

namespace {

std::string join(std::span<const std::string> parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string> relation_labels(const TripleStore& store, const RelationPath& path) {
  std::vector<std::string> out;
  for (RelationId r : path.relations) out.push_back(store.relation_label(r));
  return out;
}

}  // namespace

std::string serialize_path_output(std::span<const std::string> labels) {
  return "<PATH> " + join(labels, std::string(" ") + kPathArrow + " ") + " </PATH>";
}

std::string serialize_path_output(const TripleStore& store, const RelationPath& path) {
  auto labels = relation_labels(store, path);
  return serialize_path_output(labels);
}

FinetuneRecord make_finetune_record(const std::string& id, const std::string& question,
                                    const std::string& topic_entity, std::span<const std::string> labels) {
  return FinetuneRecord{id, kGenerationInstruction, "Question: " + question + "\nTopic entity: " + topic_entity,
                        serialize_path_output(labels)};
}

std::string render_generation_prompt(const std::string& question, const std::string& topic_entity) {
  std::string out = std::string("Instruction: ") + kGenerationInstruction + "\n\n";
  out += "Input:\n";
  out += "Question: " + question + "\n";
  out += "Topic entity: " + topic_entity + "\n\n";
  out += "Output:\n";
  return out;
}

std::string render_finetune_text(const FinetuneRecord& r) {
  return "Instruction: " + r.instruction + "\n\nInput:\n" + r.input + "\n\nOutput:\n" + r.output + "\n";
}

std::vector<FinetuneRecord> emit_finetune_dataset(const TripleStore& store, const QuestionSample& sample,
                                                  std::span<const RelationPath> supervision) {
  if (supervision.empty()) throw validation_error("question " + sample.id + " has empty supervision");
  std::vector<FinetuneRecord> out;
  for (EntityId e : sample.question_entities) {
    for (const RelationPath& z : supervision) {
      auto labels = relation_labels(store, z);
      out.push_back(make_finetune_record(sample.id, sample.question, store.entity_label(e), labels));
    }
  }
  return out;
}

ParsedPath parse_generated_path(const std::string& text, const TripleStore& store) {
  ParsedPath out;
  auto open = text.find("<PATH>");
  if (open == std::string::npos) {
    out.error = "missing <PATH> tag";
    return out;
  }
  open += 6;
  auto close = text.find("</PATH>", open);
  if (close == std::string::npos) {
    out.error = "missing </PATH> tag";
    return out;
  }
  std::string span = text.substr(open, close - open);
  if (trim(span).empty()) {
    out.error = "empty path span";
    return out;
  }
  const std::string arrow = kPathArrow;
  std::size_t pos = 0;
  while (true) {
    auto next = span.find(arrow, pos);
    std::string part = trim(span.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
    if (part.empty()) {
      out.error = "empty relation between arrows";
      return out;
    }
    out.labels.push_back(part);
    if (next == std::string::npos) break;
    pos = next + arrow.size();
  }
  out.ok = true;
  RelationPath path;
  for (const std::string& label : out.labels) {
    auto id = store.find_relation(label);
    if (id) {
      path.relations.push_back(*id);
    } else {
      out.unresolved.push_back(label);
    }
  }
  if (out.unresolved.empty()) out.path = std::move(path);
  return out;
}

EvidenceText to_text(const TripleStore& store, const GroundedEvidence& ev) {
  EvidenceText t;
  t.topic_entity = store.entity_label(ev.start);
  t.relations = relation_labels(store, ev.path);
  for (EntityId e : ev.ends) t.end_entities.push_back(store.entity_label(e));
  return t;
}

std::string verbalize_evidence(const std::string& question, std::span<const EvidenceText> evidence) {
  std::string out = std::string("Instruction: ") + kReasoningInstruction + "\n\n";
  out += "Input:\n\n";
  out += "Reasoning Paths:\n\n";
  for (std::size_t i = 0; i < evidence.size(); ++i) {
    const EvidenceText& ev = evidence[i];
    out += "[PATH" + std::to_string(i + 1) + "]\n";
    out += "Topic Entity: " + ev.topic_entity + ",\n";
    out += "Relation Path: " + join(ev.relations, std::string(" ") + kPathArrow + " ") + "\n";
    out += "End Entities: " + join(ev.end_entities, std::string(" ") + kEndSeparator + " ") + "\n\n";
  }
  out += "Question: " + question + "\n\n";
  out += "Output:\n";
  return out;
}

std::string verbalize_evidence(const TripleStore& store, const std::string& question,
                               std::span<const GroundedEvidence> evidence) {
  std::vector<EvidenceText> text;
  for (const GroundedEvidence& ev : evidence) text.push_back(to_text(store, ev));
  return verbalize_evidence(question, text);
}

}  // namespace pathise
