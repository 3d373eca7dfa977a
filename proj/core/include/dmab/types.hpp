#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmab {

class OutcomeDag;

// Numeric tolerances used across the library.  Exact structural identities
// (martingale checks) are held to 1e-12; probability mass sums and evaluation
// identities to 1e-9; solver objectives and quadrature to 1e-6.
inline constexpr double kMartingaleTol = 1e-12;
inline constexpr double kMassTol = 1e-9;
inline constexpr double kValueTol = 1e-9;
inline constexpr double kSolveTol = 1e-6;
inline constexpr double kLoadMartingaleTol = 1e-6;

inline constexpr double kInfiniteBudget = std::numeric_limits<double>::infinity();

/// Integer ceiling with a guard against float droop (e.g. 17 * (1/17.)
/// landing a hair above 1 must still give 1).
inline int ceil_int(double x) { return static_cast<int>(std::ceil(x - 1e-9)); }

// Default structure parameters for the delayed-feedback machinery.
inline constexpr double kDefaultAlpha = 0.125;
inline constexpr double kDefaultC = 1.0 / 17.0;
inline constexpr double kDefaultGamma = 306.0;       // 2*(1+1/alpha)*(1+2/alpha)
inline constexpr double kDefaultParticipation = 0.25;
inline constexpr long kDefaultTrials = 100000;

/// Prior over an arm's success probability.
struct PriorSpec {
  enum class Kind { Beta, Mixture, ExplicitDag };
  Kind kind = Kind::Beta;

  // Beta(alpha1, alpha0) with positive integer parameters.
  int alpha1 = 1;
  int alpha0 = 1;

  // Finite mixture of point hypotheses: success probability means[j] with
  // weight weights[j].
  std::vector<double> weights;
  std::vector<double> means;

  // ExplicitDag priors carry the prebuilt posterior DAG (attached by the
  // instance loader).  Effective rewards in it are placeholders;
  // build_arm_dag rebases them on the arm's bid before budget folding.
  std::shared_ptr<const OutcomeDag> dag;

  static PriorSpec beta(int a1, int a0) {
    PriorSpec p;
    p.kind = Kind::Beta;
    p.alpha1 = a1;
    p.alpha0 = a0;
    return p;
  }
  static PriorSpec mixture(std::vector<double> w, std::vector<double> m) {
    PriorSpec p;
    p.kind = Kind::Mixture;
    p.weights = std::move(w);
    p.means = std::move(m);
    return p;
  }
  static PriorSpec explicit_dag(std::shared_ptr<const OutcomeDag> d) {
    PriorSpec p;
    p.kind = Kind::ExplicitDag;
    p.dag = std::move(d);
    return p;
  }
};

/// One arm of a bandit instance.
struct ArmSpec {
  std::string id;
  PriorSpec prior;
  int delay = 0;            // steps until a play's outcome is disclosed
  double budget = kInfiniteBudget;  // cap on total reward the arm can accrue
  double bid = 1.0;         // reward per success
};

inline bool is_unbudgeted(double budget) { return std::isinf(budget); }

}  // namespace dmab
