#include "coficot/segmentation.hpp"

#include <algorithm>
#include <cctype>

#include "coficot/errors.hpp"

namespace coficot {

namespace {

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

void rstrip(std::string& s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.pop_back();
}

void push_step(std::vector<Step>& steps, std::string text) {
  rstrip(text);
  if (text.empty()) return;
  Step s;
  s.index = static_cast<int>(steps.size());
  s.text = std::move(text);
  steps.push_back(std::move(s));
}

}  // namespace

bool is_step_marker_line(const std::string& line) {
  std::size_t i = 0;
  auto at = [&](std::size_t j) -> int {
    return j < line.size() ? static_cast<unsigned char>(line[j]) : -1;
  };
  while (at(i) == ' ' || at(i) == '\t') ++i;
  const char word[] = "step";
  for (const char* w = word; *w; ++w, ++i) {
    if (std::tolower(at(i)) != *w) return false;
  }
  std::size_t after = i;
  while (at(i) == ' ' || at(i) == '\t') ++i;
  if (i == after && !std::isdigit(at(i))) return false;  // "stepwise" etc.
  if (!std::isdigit(at(i))) return false;
  while (std::isdigit(at(i))) ++i;
  while (at(i) == ' ' || at(i) == '\t') ++i;
  return at(i) == ':';
}

std::vector<Step> segment_steps(const std::string& completion_text) {
  if (is_blank(completion_text)) throw EmptyCompletion();

  const std::vector<std::string> lines = split_lines(completion_text);
  bool any_marker =
      std::any_of(lines.begin(), lines.end(), is_step_marker_line);

  std::vector<Step> steps;
  std::string current;
  if (any_marker) {
    for (const auto& line : lines) {
      if (is_step_marker_line(line)) {
        push_step(steps, std::move(current));
        current.clear();
      }
      if (!current.empty()) current += '\n';
      current += line;
    }
    push_step(steps, std::move(current));
  } else {
    for (const auto& line : lines) {
      if (is_blank(line)) {
        push_step(steps, std::move(current));
        current.clear();
        continue;
      }
      if (!current.empty()) current += '\n';
      current += line;
    }
    push_step(steps, std::move(current));
  }
  return steps;
}

}  // namespace coficot
