#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmab/instance_io.hpp"

namespace dmab {

/// Outcome of one named invariant audit.  `slack` is the smallest margin by
/// which the audited inequalities held (LHS - RHS; identity families report
/// the margin to their stated residual cap); the check passes when
/// slack >= -tolerance.  `cases` counts the randomized or enumerated cases
/// behind the margin.
struct InvariantResult {
  std::string name;
  bool pass = false;
  double slack = 0.0;
  double tolerance = 0.0;
  long cases = 0;
  std::string detail;
};

struct VerifyReport {
  std::vector<InvariantResult> invariants;
  bool all_pass() const;
};

/// Runs the randomized property suite: martingale and per-play reward
/// identities, play-quota truncation bounds, the four-stage policy rewrite
/// chain (including the per-path block-count audit), the concave-chain and
/// budget-settlement predicates, solver duality and feasibility, exhaustive
/// optima against the relaxation bound, and the block-solver/step-solver
/// agreement at zero delay.  `scale >= 1` multiplies every case count; the
/// report is a deterministic function of (seed, scale).
VerifyReport run_verification(std::uint64_t seed, int scale = 1);

/// Audits one loaded instance: strict martingale residuals on every arm's
/// outcome law and the per-play reward identity on unbudgeted arms.  These
/// run tighter than the loader's admission tolerance, so a file can load
/// cleanly and still fail here.
std::vector<InvariantResult> verify_instance(const Instance& inst);

/// Machine-readable rendering:
///   {"kind":"verify-report","pass":...,"invariants":[
///     {"name","pass","slack","tolerance","cases","detail"}, ...]}
std::string verify_report_text(const VerifyReport& report);

}  // namespace dmab
