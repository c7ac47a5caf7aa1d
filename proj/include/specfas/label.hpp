#pragma once

#include <stdexcept>
#include <string>

namespace specfas {

// One-hot convention: index 0 = Real (bona fide), index 1 = Fake (attack).
enum class Label { Real = 0, Fake = 1 };

inline std::string to_string(Label label) { return label == Label::Real ? "real" : "fake"; }

// Accepts "real"/"fake" and the one-hot indices "0"/"1".
inline Label parse_label(const std::string& text) {
  if (text == "real" || text == "0") return Label::Real;
  if (text == "fake" || text == "1") return Label::Fake;
  throw std::invalid_argument("unknown label '" + text + "' (expected real|fake)");
}

}  // namespace specfas
