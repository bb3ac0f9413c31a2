#include "pathise/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>

#include "json.hpp"

namespace pathise {

std::string normalize_answer(const std::string& s) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

namespace {

std::set<std::string> normalized(std::span<const std::string> xs) {
  std::set<std::string> out;
  for (const auto& x : xs) out.insert(normalize_answer(x));
  return out;
}

std::size_t overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t n = 0;
  for (const auto& x : a) n += b.count(x);
  return n;
}

void require_gold(std::span<const std::string> gold) {
  if (gold.empty()) throw validation_error("gold answer set is empty");
}

}  // namespace

double f1_score(std::span<const std::string> predicted, std::span<const std::string> gold) {
  require_gold(gold);
  auto p = normalized(predicted);
  auto g = normalized(gold);
  std::size_t common = overlap(p, g);
  if (p.empty() || common == 0) return 0.0;
  double precision = static_cast<double>(common) / static_cast<double>(p.size());
  double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

int hit(std::span<const std::string> predicted, std::span<const std::string> gold) {
  require_gold(gold);
  return overlap(normalized(predicted), normalized(gold)) > 0 ? 1 : 0;
}

int hits_at_1(std::span<const std::string> predicted, std::span<const std::string> gold) {
  require_gold(gold);
  if (predicted.empty()) return 0;
  return normalized(gold).count(normalize_answer(predicted.front())) ? 1 : 0;
}

const char* to_string(FailureClass c) {
  switch (c) {
    case FailureClass::kNone: return "none";
    case FailureClass::kPathGeneration: return "path_generation";
    case FailureClass::kReasoning: return "reasoning";
  }
  return "none";
}

FailureClass classify_failure(const QuestionResult& r) {
  if (hit(r.predicted, r.gold)) return FailureClass::kNone;
  return overlap(normalized(r.grounded_ends), normalized(r.gold)) == 0 ? FailureClass::kPathGeneration
                                                                        : FailureClass::kReasoning;
}

MetricReport evaluate(std::span<const QuestionResult> results) {
  MetricReport m;
  double f1 = 0.0, h = 0.0, h1 = 0.0;
  for (const QuestionResult& r : results) {
    if (r.gold.empty()) {
      ++m.excluded_empty_gold;
      continue;
    }
    ++m.n;
    f1 += f1_score(r.predicted, r.gold);
    h += hit(r.predicted, r.gold);
    h1 += hits_at_1(r.predicted, r.gold);
    switch (classify_failure(r)) {
      case FailureClass::kPathGeneration: ++m.path_generation_errors; break;
      case FailureClass::kReasoning: ++m.reasoning_errors; break;
      case FailureClass::kNone: break;
    }
  }
  if (m.n) {
    double n = static_cast<double>(m.n);
    m.f1 = f1 / n;
    m.hit = h / n;
    m.hits_at_1 = h1 / n;
  }
  return m;
}

std::string MetricReport::to_json() const {
  nlohmann::json j = {{"n", n},
                      {"excluded_empty_gold", excluded_empty_gold},
                      {"f1", f1},
                      {"hit", hit},
                      {"hits_at_1", hits_at_1},
                      {"errors", {{"path_generation", path_generation_errors}, {"reasoning", reasoning_errors}}}};
  return j.dump(2);
}

std::string MetricReport::to_table() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "questions        %zu (excluded, empty gold: %zu)\n"
                "F1               %.4f\n"
                "Hit              %.4f\n"
                "Hits@1           %.4f\n"
                "path generation  %zu\n"
                "reasoning        %zu\n",
                n, excluded_empty_gold, f1, hit, hits_at_1, path_generation_errors, reasoning_errors);
  return buf;
}

SupervisionReport supervision_hits_at_t(const std::map<std::string, std::vector<RelationPath>>& selected,
                                        const std::map<std::string, std::vector<RelationPath>>& reference,
                                        std::size_t top_t) {
  if (top_t == 0) throw validation_error("T must be at least 1");
  SupervisionReport r;
  for (const auto& [id, paths] : selected) {
    auto ref = reference.find(id);
    if (ref == reference.end() || ref->second.empty()) {
      r.missing_reference.push_back(id);
      continue;
    }
    ++r.n;
    std::size_t limit = std::min(top_t, paths.size());
    bool found = std::any_of(paths.begin(), paths.begin() + static_cast<std::ptrdiff_t>(limit), [&](const auto& p) {
      return std::find(ref->second.begin(), ref->second.end(), p) != ref->second.end();
    });
    r.hits += found ? 1 : 0;
  }
  r.hits_at_t = r.n ? static_cast<double>(r.hits) / static_cast<double>(r.n) : 0.0;
  return r;
}

StageEfficiency efficiency_report(const std::string& stage, std::span<const Usage> per_question) {
  StageEfficiency s;
  s.stage = stage;
  s.questions = per_question.size();
  if (per_question.empty()) return s;
  Usage total;
  for (const Usage& u : per_question) total += u;
  double n = static_cast<double>(per_question.size());
  s.seconds = total.seconds / n;
  s.calls = static_cast<double>(total.calls) / n;
  s.input_tokens = static_cast<double>(total.input_tokens) / n;
  s.output_tokens = static_cast<double>(total.output_tokens) / n;
  return s;
}

std::string efficiency_json(std::span<const StageEfficiency> stages) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : stages) {
    j.push_back({{"stage", s.stage},
                 {"questions", s.questions},
                 {"seconds", s.seconds},
                 {"calls", s.calls},
                 {"input_tokens", s.input_tokens},
                 {"output_tokens", s.output_tokens}});
  }
  return j.dump(2);
}

std::string efficiency_table(std::span<const StageEfficiency> stages) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s %9s %12s %8s %10s %10s\n", "stage", "questions", "runtime (s)", "calls",
                "input", "output");
  out << buf;
  for (const auto& s : stages) {
    std::snprintf(buf, sizeof buf, "%-12s %9zu %12.6f %8.2f %10.1f %10.1f\n", s.stage.c_str(), s.questions, s.seconds,
                  s.calls, s.input_tokens, s.output_tokens);
    out << buf;
  }
  return out.str();
}

}  // namespace pathise
