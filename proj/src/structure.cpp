#include "primelens/structure.hpp"

#include <algorithm>

#include "primelens/error.hpp"

namespace primelens {

std::string_view to_string(Structure s) { return s == Structure::PO ? "PO" : "DO"; }

Structure structure_from_string(std::string_view s) {
  if (s == "PO") return Structure::PO;
  if (s == "DO") return Structure::DO;
  throw InvalidArgument("unknown structure '" + std::string(s) + "'");
}

std::span<const Slot> slot_template(Structure s) {
  if (s == Structure::PO) return kPoTemplate;
  return kDoTemplate;
}

bool is_prefix_slot(Slot s) {
  return std::find(kPrefixSlots.begin(), kPrefixSlots.end(), s) != kPrefixSlots.end();
}

bool is_content_slot(Slot s) {
  return s == Slot::N1 || s == Slot::N2 || s == Slot::N3 || s == Slot::V;
}

bool is_determiner_slot(Slot s) {
  return s == Slot::DT1 || s == Slot::DT2 || s == Slot::DT3;
}

namespace {
constexpr std::array<std::string_view, 9> kSlotNames = {
    "DT1", "N1", "V", "DT2", "N2", "P", "DT3", "N3", "END"};
}

std::string_view to_string(Slot s) { return kSlotNames[static_cast<std::size_t>(s)]; }

std::optional<Slot> slot_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kSlotNames.size(); ++i) {
    if (kSlotNames[i] == s) return static_cast<Slot>(i);
  }
  return std::nullopt;
}

}  // namespace primelens
