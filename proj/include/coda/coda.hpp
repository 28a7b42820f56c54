#pragma once

// Umbrella header for the CODA library: calibrated optimal decision making
// that fuses a primary sample carrying outcomes with an auxiliary sample
// lacking them, through shared intermediate outcomes.

#include "coda/basis.hpp"
#include "coda/calibration.hpp"
#include "coda/csv.hpp"
#include "coda/forest.hpp"
#include "coda/linear_model.hpp"
#include "coda/logistic.hpp"
#include "coda/nuisance.hpp"
#include "coda/policy_search.hpp"
#include "coda/rewards.hpp"
#include "coda/rng.hpp"
#include "coda/simulation.hpp"
#include "coda/stats.hpp"
#include "coda/tree.hpp"
#include "coda/tree_search.hpp"
#include "coda/types.hpp"
#include "coda/validate.hpp"
