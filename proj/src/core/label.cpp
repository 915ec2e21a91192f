#include "weldcam/label.hpp"

#include "weldcam/errors.hpp"

namespace weldcam {

Label parse_label(const std::string& text) {
  if (text == "OK" || text == "0") return Label::ok;
  if (text == "NOK" || text == "1") return Label::nok;
  throw SpecError("unknown label '" + text + "'");
}

}  // namespace weldcam
