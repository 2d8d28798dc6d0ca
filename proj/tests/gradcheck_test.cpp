#include <gtest/gtest.h>

#include "fairmargin/gradcheck.hpp"

namespace fairmargin {
namespace {

TEST(RelativeError, Definition) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1.0, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(-1.0, 1.0), 2.0);
}

TEST(GradCheck, PassesAndCoversEverySection) {
  GradCheckOptions opt;
  opt.configurations = 30;
  opt.seed = 9;
  const GradCheckReport r = run_grad_check(opt);
  ASSERT_EQ(r.sections.size(), 5u);
  const std::vector<std::string> names{"loss:softmax", "loss:arcface", "loss:fair", "encoder",
                                       "end-to-end"};
  for (std::size_t i = 0; i < names.size(); ++i) {
    EXPECT_EQ(r.sections[i].name, names[i]);
    EXPECT_GT(r.sections[i].coordinates, 0u);
    EXPECT_TRUE(r.sections[i].passed()) << names[i] << " worst " << r.sections[i].worst_rel_error;
  }
  EXPECT_TRUE(r.passed());
  const std::string text = format_grad_check(r);
  EXPECT_NE(text.find("loss="), std::string::npos);
  EXPECT_NE(text.find("encoder="), std::string::npos);
  EXPECT_NE(text.find("end-to-end="), std::string::npos);
  EXPECT_NE(text.find("grad-check: PASS"), std::string::npos);
}

TEST(GradCheck, CorruptedGradientFails) {
  GradCheckOptions opt;
  opt.configurations = 5;
  opt.corrupt = 1e-3;
  const GradCheckReport r = run_grad_check(opt);
  EXPECT_FALSE(r.passed());
  EXPECT_NE(format_grad_check(r).find("grad-check: FAIL"), std::string::npos);
}

TEST(GradCheck, Deterministic) {
  GradCheckOptions opt;
  opt.configurations = 5;
  const GradCheckReport a = run_grad_check(opt);
  const GradCheckReport b = run_grad_check(opt);
  for (std::size_t i = 0; i < a.sections.size(); ++i) {
    EXPECT_EQ(a.sections[i].worst_rel_error, b.sections[i].worst_rel_error);
    EXPECT_EQ(a.sections[i].coordinates, b.sections[i].coordinates);
  }
}

}  // namespace
}  // namespace fairmargin
