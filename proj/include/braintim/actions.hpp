#pragma once

#include <array>
#include <string_view>

#include "braintim/error.hpp"

namespace braintim {

inline constexpr int kVerbCount = 10;
inline constexpr int kActionCount = 29;

struct ActionInfo {
  std::string_view name;
  int verb;
};

inline constexpr std::array<std::string_view, kVerbCount> kVerbNames = {
    "type", "draw", "game", "assemble", "write", "read", "watch", "snack", "drink", "phone"};

// Fixed action -> verb map. Verbs 7 and 8 form the consume category.
inline constexpr std::array<ActionInfo, kActionCount> kActions = {{
    {"type_word", 0},       {"type_excel", 0},      {"type_slides", 0},
    {"draw_paint", 1},      {"draw_tablet", 1},
    {"game_computer", 2},   {"game_mobile", 2},     {"game_console", 2},
    {"assemble_puzzle", 3}, {"assemble_cube", 3},   {"assemble_blocks", 3},
    {"write_notes", 4},     {"write_math", 4},
    {"read_textbook", 5},   {"read_paper", 5},      {"read_news", 5},
    {"watch_video", 6},     {"watch_lecture", 6},
    {"snack_chips", 7},     {"snack_cookie", 7},    {"snack_candy", 7},  {"snack_fruit", 7},
    {"drink_water", 8},     {"drink_cola", 8},      {"drink_juice", 8},  {"drink_bitter_juice", 8},
    {"phone_chat", 9},      {"phone_browse", 9},    {"phone_photo", 9},
}};

inline int verb_of(int action) {
  if (action < 0 || action >= kActionCount) throw InvalidLabel("action id out of range");
  return kActions[static_cast<std::size_t>(action)].verb;
}

inline bool is_consume_action(int action) {
  const int v = verb_of(action);
  return v == 7 || v == 8;
}

// Display order for verb confusion matrices: work/play cluster first, then
// learn/consume. Metrics never depend on it.
inline constexpr std::array<int, kVerbCount> kVerbDisplayOrder = {0, 1, 2, 3, 9, 4, 5, 6, 7, 8};

}  // namespace braintim
