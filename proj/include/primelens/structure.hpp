#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace primelens {

enum class Structure { PO, DO };

constexpr Structure other(Structure s) {
  return s == Structure::PO ? Structure::DO : Structure::PO;
}

std::string_view to_string(Structure s);
Structure structure_from_string(std::string_view s);

// Word slots of a dative sentence. N2 is always the theme and N3 the
// recipient, whichever order the structure puts them in.
enum class Slot { DT1, N1, V, DT2, N2, P, DT3, N3, END };

inline constexpr std::array<Slot, 9> kAllSlots = {
    Slot::DT1, Slot::N1, Slot::V, Slot::DT2, Slot::N2,
    Slot::P,   Slot::DT3, Slot::N3, Slot::END};

inline constexpr std::array<Slot, 9> kPoTemplate = {
    Slot::DT1, Slot::N1, Slot::V, Slot::DT2, Slot::N2,
    Slot::P,   Slot::DT3, Slot::N3, Slot::END};

inline constexpr std::array<Slot, 8> kDoTemplate = {
    Slot::DT1, Slot::N1, Slot::V,   Slot::DT2,
    Slot::N3,  Slot::DT3, Slot::N2, Slot::END};

// Both templates share [DT1, N1, V, DT2]; the word at this index is the
// first one that differs between the PO and DO renderings.
inline constexpr std::size_t kDivergenceIndex = 4;

inline constexpr std::array<Slot, 4> kPrefixSlots = {Slot::DT1, Slot::N1,
                                                     Slot::V, Slot::DT2};

std::span<const Slot> slot_template(Structure s);

bool is_prefix_slot(Slot s);
bool is_content_slot(Slot s);
bool is_determiner_slot(Slot s);

std::string_view to_string(Slot s);
std::optional<Slot> slot_from_string(std::string_view s);

using SlotWords = std::map<Slot, std::string>;

}  // namespace primelens
