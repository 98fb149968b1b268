#include <gtest/gtest.h>

#include <sstream>

#include "maxgnr_app/commands.hpp"
#include "maxgnr_app/verify.hpp"

namespace maxgnr::app {
namespace {

TEST(Verify, AllChecksPass) {
  const auto results = run_checks(VerifyOptions{});
  EXPECT_EQ(results.size(), verify_check_names().size());
  for (const auto& r : results) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
  std::ostringstream out;
  EXPECT_EQ(report_checks(results, out), 0);
}

TEST(Verify, FilterSelectsFamily) {
  VerifyOptions options;
  options.filter = "gnr";
  const auto results = run_checks(options);
  ASSERT_FALSE(results.empty());
  for (const auto& r : results) EXPECT_NE(r.name.find("gnr"), std::string::npos) << r.name;
  options.filter = "no-such-check";
  std::ostringstream out;
  EXPECT_EQ(report_checks(run_checks(options), out), 1);
}

TEST(Verify, WrongContractionLawIsCaught) {
  VerifyOptions options;
  options.contraction_factor = [](double gamma) { return gamma / (1.0 + gamma); };
  std::ostringstream out;
  CommandOptions cli;
  EXPECT_EQ(cmd_verify(cli, out, options), kExitVerifyFailed);
  const std::string table = out.str();
  EXPECT_NE(table.find("momentum.contraction"), std::string::npos);
  const auto results = run_checks(options);
  for (const auto& r : results) {
    if (r.name != "momentum.contraction") EXPECT_TRUE(r.passed) << r.name;
    else EXPECT_FALSE(r.passed);
  }
}

}  // namespace
}  // namespace maxgnr::app
