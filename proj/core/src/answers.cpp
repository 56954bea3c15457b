#include "coficot/answers.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <numeric>
#include <regex>

#include "coficot/errors.hpp"

namespace coficot::answers {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool is_trailing_punct(char c) {
  return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?';
}

// "C", "(c)", "[B]", "d." and similar choice-style answers.
const std::regex kChoice(R"(^[\(\[\{]?\s*([A-Za-z])\s*[\)\]\}]?\s*$)");
// Optionally signed digit groups with "," separators and a decimal part.
const std::regex kNumber(R"(^[+-]?[0-9][0-9,]*(\.[0-9]+)?$)");
const std::regex kFraction(R"(^([+-]?[0-9]+)\s*/\s*([0-9]+)$)");

std::string normalize_number(std::string s) {
  s.erase(std::remove(s.begin(), s.end(), ','), s.end());
  std::size_t dot = s.find('.');
  if (dot != std::string::npos) {
    bool all_zero = true;
    for (std::size_t i = dot + 1; i < s.size(); ++i)
      if (s[i] != '0') all_zero = false;
    if (all_zero) s.erase(dot);
  }
  if (!s.empty() && s.front() == '+') s.erase(s.begin());
  return s;
}

std::string normalize_fraction(const std::smatch& m) {
  long long num = std::stoll(m[1].str());
  long long den = std::stoll(m[2].str());
  if (den == 0) return m[0].str();
  long long g = std::gcd(num < 0 ? -num : num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  if (den == 1) return std::to_string(num);
  return std::to_string(num) + "/" + std::to_string(den);
}

}  // namespace

std::string normalize_answer(const std::string& raw) {
  std::string s = trim(raw);
  if (s.empty() || s == kUnanswered) return kUnanswered;

  std::smatch m;
  if (std::regex_match(s, m, kChoice)) {
    return std::string(
        1, static_cast<char>(std::toupper(
               static_cast<unsigned char>(m[1].str()[0]))));
  }

  while (!s.empty() && is_trailing_punct(s.back())) s.pop_back();
  s = trim(s);
  if (s.empty()) return kUnanswered;
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

  // Re-check after punctuation stripping: "c." reduces to a bare letter.
  if (std::regex_match(s, m, kChoice)) {
    return std::string(
        1, static_cast<char>(std::toupper(
               static_cast<unsigned char>(m[1].str()[0]))));
  }
  if (std::regex_match(s, kNumber)) return normalize_number(std::move(s));
  if (std::regex_match(s, m, kFraction)) return normalize_fraction(m);
  return s;
}

std::string extract_final_answer(const std::string& completion_text) {
  static const std::regex kMarker(R"((?:final\s+)?answer\s*[:=]\s*)",
                                  std::regex::icase);
  std::sregex_iterator it(completion_text.begin(), completion_text.end(),
                          kMarker);
  std::sregex_iterator end;
  std::ptrdiff_t after = -1;
  for (; it != end; ++it) after = it->position() + it->length();
  if (after < 0) return kUnanswered;
  std::size_t stop = completion_text.find('\n', static_cast<std::size_t>(after));
  if (stop == std::string::npos) stop = completion_text.size();
  return normalize_answer(
      completion_text.substr(static_cast<std::size_t>(after),
                             stop - static_cast<std::size_t>(after)));
}

std::vector<AnswerCluster> cluster_solutions(
    const std::vector<ReasoningTrace>& traces) {
  if (traces.empty()) throw EmptyEnsemble();

  std::map<std::string, AnswerCluster> by_answer;
  for (const auto& t : traces) {
    const std::string& ans = t.final_answer ? *t.final_answer : kUnanswered;
    auto& c = by_answer[ans];
    c.canonical_answer = ans;
    c.member_trace_ids.push_back(t.trace_id);
    c.reward_mass += t.orm_score.value_or(0.0);
  }

  std::vector<AnswerCluster> clusters;
  clusters.reserve(by_answer.size());
  double total = 0.0;
  for (auto& [_, c] : by_answer) total += c.reward_mass;
  for (auto& [_, c] : by_answer) {
    c.probability = total > 0.0 ? c.reward_mass / total
                                : 1.0 / static_cast<double>(by_answer.size());
    clusters.push_back(std::move(c));
  }
  return clusters;
}

const AnswerCluster& majority_cluster(const std::vector<AnswerCluster>& cs) {
  if (cs.empty()) throw EmptyEnsemble();
  const AnswerCluster* best = &cs.front();
  for (const auto& c : cs) {
    if (c.member_trace_ids.size() != best->member_trace_ids.size()) {
      if (c.member_trace_ids.size() > best->member_trace_ids.size()) best = &c;
    } else if (c.reward_mass != best->reward_mass) {
      if (c.reward_mass > best->reward_mass) best = &c;
    } else if (c.canonical_answer < best->canonical_answer) {
      best = &c;
    }
  }
  return *best;
}

std::string weighted_vote(const std::vector<AnswerCluster>& clusters) {
  if (clusters.empty()) throw EmptyEnsemble();
  const AnswerCluster* best = nullptr;
  for (const auto& c : clusters) {
    if (c.canonical_answer == kUnanswered) continue;
    if (!best) {
      best = &c;
      continue;
    }
    if (c.reward_mass != best->reward_mass) {
      if (c.reward_mass > best->reward_mass) best = &c;
    } else if (c.member_trace_ids.size() != best->member_trace_ids.size()) {
      if (c.member_trace_ids.size() > best->member_trace_ids.size()) best = &c;
    } else if (c.canonical_answer < best->canonical_answer) {
      best = &c;
    }
  }
  return best ? best->canonical_answer : kUnanswered;
}

}  // namespace coficot::answers
