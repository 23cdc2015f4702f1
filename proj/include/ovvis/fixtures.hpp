#pragma once
// Golden-fixture runner for the evaluator. Loads hand-computed expected
// values (exact rationals with their derivations) and checks st_iou and the
// AP paths against them with exact double equality. Used by the unit tests,
// `selftest`, and the acceptance suite.

#include <string>
#include <vector>

namespace ovvis {

// Returns one "<case>: ok" line per fixture; throws FixtureError on the
// first mismatch.
std::vector<std::string> run_eval_fixtures(const std::string& fixture_path);

}  // namespace ovvis
