#pragma once

// Umbrella header.

#include "fipk/lowprec.hpp"
#include "fipk/linalg.hpp"
#include "fipk/operator.hpp"
#include "fipk/problems.hpp"
#include "fipk/preconditioning.hpp"
#include "fipk/factorizations.hpp"
#include "fipk/sketching.hpp"
#include "fipk/projected.hpp"
#include "fipk/regparam.hpp"
#include "fipk/diagnostics.hpp"
#include "fipk/solvers.hpp"
#include "fipk/selftest.hpp"
