#pragma once

#include <cstdint>
#include <string>

namespace weldcam {

/// Inspection verdict. Class index 0 is OK, 1 is NOK throughout the project.
enum class Label : std::uint8_t { ok = 0, nok = 1 };

inline std::size_t class_index(Label l) { return static_cast<std::size_t>(l); }
inline Label label_from_index(std::size_t i) { return i == 0 ? Label::ok : Label::nok; }
inline std::string to_string(Label l) { return l == Label::ok ? "OK" : "NOK"; }
Label parse_label(const std::string& text);

}  // namespace weldcam
