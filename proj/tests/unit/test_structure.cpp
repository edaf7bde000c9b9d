#include <gtest/gtest.h>

#include "primelens/error.hpp"
#include "primelens/structure.hpp"
#include "primelens/text.hpp"

using namespace primelens;

TEST(Structure, TemplatesShareTheFourSlotPrefix) {
  auto po = slot_template(Structure::PO);
  auto dO = slot_template(Structure::DO);
  ASSERT_EQ(po.size(), 9u);
  ASSERT_EQ(dO.size(), 8u);
  for (std::size_t i = 0; i < kDivergenceIndex; ++i) {
    EXPECT_EQ(po[i], dO[i]);
    EXPECT_TRUE(is_prefix_slot(po[i]));
  }
  EXPECT_NE(po[kDivergenceIndex], dO[kDivergenceIndex]);
}

TEST(Structure, SlotNamesRoundTrip) {
  for (Slot s : kAllSlots) EXPECT_EQ(slot_from_string(to_string(s)), s);
  EXPECT_FALSE(slot_from_string("N4").has_value());
  EXPECT_EQ(structure_from_string("DO"), Structure::DO);
  EXPECT_THROW(structure_from_string("XO"), InvalidArgument);
}

TEST(Structure, SlotClasses) {
  EXPECT_TRUE(is_content_slot(Slot::V));
  EXPECT_FALSE(is_content_slot(Slot::P));
  EXPECT_TRUE(is_determiner_slot(Slot::DT3));
  EXPECT_FALSE(is_prefix_slot(Slot::N2));
  EXPECT_EQ(other(Structure::PO), Structure::DO);
}

TEST(Text, SplitAndTrim) {
  EXPECT_EQ(text::split_whitespace("  a  b\tc "), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(text::split("a,,b", ','), (std::vector<std::string>{"a", "", "b"}));
  EXPECT_EQ(text::trim("  x y \n"), "x y");
  EXPECT_EQ(text::lower("The"), "the");
  EXPECT_EQ(text::normalize_whitespace(" a   b "), "a b");
}

TEST(Text, Numbers) {
  EXPECT_DOUBLE_EQ(text::parse_double(" 0.25 "), 0.25);
  EXPECT_THROW(text::parse_double("1.0x"), InvalidArgument);
  EXPECT_THROW(text::parse_double("inf"), InvalidArgument);
  EXPECT_EQ(text::format_double(0.1), "0.1");
  EXPECT_EQ(text::parse_double(text::format_double(1.0 / 3.0)), 1.0 / 3.0);
}
