#pragma once

#include <string>
#include <vector>

#include "coficot/types.hpp"

namespace coficot {

/// Split a raw completion into reasoning steps.
///
/// A new step begins at every line whose first non-blank content matches
/// "Step <integer>:" case-insensitively. Text before the first marker forms
/// its own step; lines after a marker belong to that marker's step. When no
/// marker is present anywhere, blank-line-separated paragraphs become the
/// steps instead. Step text is kept verbatim (markers included) apart from
/// trailing whitespace, and indices run 0..n-1.
///
/// Throws EmptyCompletion when the text is empty or whitespace-only.
std::vector<Step> segment_steps(const std::string& completion_text);

/// True when the line opens with a "Step <integer>:" marker (leading blanks
/// allowed). Exposed for the mock world and for prompt-response parsing.
bool is_step_marker_line(const std::string& line);

}  // namespace coficot
