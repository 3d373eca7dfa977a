#pragma once

#include <cmath>

#include "doctest.h"

// Absolute-tolerance comparison; doctest's Approx is relative and useless
// near zero targets.
#define CHECK_NEAR(a, b, tol) CHECK(std::abs((a) - (b)) <= (tol))
