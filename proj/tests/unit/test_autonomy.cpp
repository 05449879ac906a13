#include <doctest.h>

#include "labguard/autonomy.hpp"
#include "labguard/error.hpp"
#include "testing.hpp"

using namespace labguard;
using labguard::testing::Rng;

TEST_CASE("approval requirements by level") {
  GovernancePolicy p;
  CHECK(approval_required(0, 0.9, 1.0, p) == ApprovalRequirement::PerStep);
  CHECK(approval_required(1, 0.9, 1.0, p) == ApprovalRequirement::PerStep);
  CHECK(approval_required(2, 0.9, 1.0, p) == ApprovalRequirement::HumanWithMonitoring);
  CHECK(approval_required(3, 0.9, 1.0, p) == ApprovalRequirement::Auto);
  CHECK(approval_required(4, 0.1, 1.0, p) == ApprovalRequirement::Auto);
  CHECK(approval_required(3, 0.099, 1.0, p) == ApprovalRequirement::Escalate);
  CHECK(approval_required(3, -0.1, 1.0, p) == ApprovalRequirement::Escalate);
  CHECK(approval_required(3, 0.0, 0.0, p) == ApprovalRequirement::Escalate);
  CHECK_THROWS_AS(approval_required(5, 0.9, 1.0, p), InvalidArgument);
  CHECK(needs_human(ApprovalRequirement::Escalate));
  CHECK_FALSE(needs_human(ApprovalRequirement::Auto));
}

TEST_CASE("advancement and regression") {
  Governor g(2);
  for (int i = 0; i < 199; ++i) CHECK_FALSE(g.record_outcome(Outcome::Confirmed).has_value());
  auto change = g.record_outcome(Outcome::Confirmed);
  REQUIRE(change.has_value());
  CHECK(change->from == 2);
  CHECK(change->to == 3);
  CHECK(g.record().incident_free_count == 200);

  change = g.record_outcome(Outcome::AbortedSafety, "txn-1", 5.0);
  REQUIRE(change.has_value());
  CHECK(change->to == 2);
  CHECK(g.record().incident_free_count == 0);
  CHECK(g.record().hold);
  CHECK(g.record().incidents.size() == 1);

  // Held: 300 confirms do not advance.
  for (int i = 0; i < 300; ++i) CHECK_FALSE(g.record_outcome(Outcome::Confirmed).has_value());
  g.acknowledge_incident();
  CHECK(g.record_outcome(Outcome::Confirmed).has_value());
  CHECK(g.level() == 3);

  // Benign aborts change nothing.
  const auto before = g.record();
  CHECK_FALSE(g.record_outcome(Outcome::AbortedBenign).has_value());
  CHECK(g.record().incident_free_count == before.incident_free_count);
  CHECK(g.record().confirms_at_level == before.confirms_at_level);
}

TEST_CASE("level limits") {
  Governor g(4, GovernancePolicy{1, 0.1, 1});
  for (int i = 0; i < 10; ++i) g.record_outcome(Outcome::Confirmed);
  CHECK(g.level() == 4);
  CHECK_THROWS_AS(g.set_level(5, "op"), InvalidArgument);
  CHECK_THROWS_AS(Governor(5), InvalidArgument);
  CHECK(g.set_level(1, "op")->to == 1);
  Governor zero(0);
  CHECK_FALSE(zero.record_outcome(Outcome::AbortedSafety).has_value());
  CHECK(zero.level() == 0);
  CHECK_THROWS_AS(Governor(0, GovernancePolicy{0, 0.1, 1}), InvalidArgument);
}

TEST_CASE("random outcome sequences") {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    GovernancePolicy p{rng.integer(1, 20), 0.1, 1};
    Governor g(rng.integer(0, 4), p);
    std::vector<Outcome> history;
    bool held = false;
    for (int step = 0; step < 200; ++step) {
      const int r = rng.integer(0, 99);
      if (r < 3) {
        g.acknowledge_incident();
        held = false;
        continue;
      }
      const Outcome o = r < 85 ? Outcome::Confirmed : (r < 93 ? Outcome::AbortedBenign : Outcome::AbortedSafety);
      const int level_before = g.level();
      const auto change = g.record_outcome(o);
      history.push_back(o);
      if (o == Outcome::AbortedSafety) held = true;
      if (change && change->to > change->from) CHECK_FALSE(held);
      CHECK(g.level() <= 4);
      CHECK(g.level() >= 0);
      CHECK(std::abs(g.level() - level_before) <= 1);
      // Oracle: trailing run of confirms, skipping benign aborts.
      int suffix = 0;
      for (auto it = history.rbegin(); it != history.rend() && *it != Outcome::AbortedSafety; ++it) {
        suffix += *it == Outcome::Confirmed ? 1 : 0;
      }
      CHECK(g.record().incident_free_count == suffix);
    }
  }
}
