#pragma once

// Umbrella header: Tikhonov regularization on a geometric grid with fast
// balancing, Lepskij balancing, and Morozov discrepancy parameter choice,
// plus the statistical probes and the Monte Carlo harness.

#include "fastbal/choice.hpp"
#include "fastbal/diagnostics.hpp"
#include "fastbal/errors.hpp"
#include "fastbal/experiments.hpp"
#include "fastbal/noise.hpp"
#include "fastbal/numeric.hpp"
#include "fastbal/regularization.hpp"
#include "fastbal/rng.hpp"
#include "fastbal/spectral.hpp"
