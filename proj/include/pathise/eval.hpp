#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "pathise/reasoner.hpp"
#include "pathise/types.hpp"

namespace pathise {

/// Case-fold (ASCII) and collapse runs of whitespace; leading/trailing dropped.
std::string normalize_answer(const std::string& s);

/// Harmonic mean of precision and recall over normalized answer sets.
/// Throws when gold is empty.
double f1_score(std::span<const std::string> predicted, std::span<const std::string> gold);
int hit(std::span<const std::string> predicted, std::span<const std::string> gold);
/// 1 iff the first predicted answer is gold; 0 for an empty prediction.
int hits_at_1(std::span<const std::string> predicted, std::span<const std::string> gold);

struct QuestionResult {
  std::string id;
  std::vector<std::string> predicted;  // ordered
  std::vector<std::string> gold;
  std::vector<std::string> grounded_ends;  // union over the question's evidence
  Usage usage;
};

enum class FailureClass { kNone, kPathGeneration, kReasoning };
const char* to_string(FailureClass c);

/// none when Hit = 1; otherwise path_generation if no gold answer was among
/// the grounded end entities, else reasoning.
FailureClass classify_failure(const QuestionResult& result);

struct MetricReport {
  std::size_t n = 0;
  std::size_t excluded_empty_gold = 0;
  double f1 = 0.0;  // macro mean
  double hit = 0.0;
  double hits_at_1 = 0.0;
  std::size_t path_generation_errors = 0;
  std::size_t reasoning_errors = 0;

  std::string to_json() const;
  std::string to_table() const;
};

MetricReport evaluate(std::span<const QuestionResult> results);

struct SupervisionReport {
  std::size_t n = 0;
  std::size_t hits = 0;
  double hits_at_t = 0.0;
  std::vector<std::string> missing_reference;  // excluded question ids
};

/// Fraction of questions whose first T selected paths include any reference
/// path. Questions without a reference are excluded and listed.
SupervisionReport supervision_hits_at_t(const std::map<std::string, std::vector<RelationPath>>& selected,
                                        const std::map<std::string, std::vector<RelationPath>>& reference,
                                        std::size_t top_t);

struct StageEfficiency {
  std::string stage;
  std::size_t questions = 0;
  double seconds = 0.0;  // means per question
  double calls = 0.0;
  double input_tokens = 0.0;
  double output_tokens = 0.0;
};

StageEfficiency efficiency_report(const std::string& stage, std::span<const Usage> per_question);

std::string efficiency_json(std::span<const StageEfficiency> stages);
std::string efficiency_table(std::span<const StageEfficiency> stages);

}  // namespace pathise
