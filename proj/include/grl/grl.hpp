#pragma once

/// Umbrella header for the whole library.

#include "grl/agents.hpp"
#include "grl/bayes.hpp"
#include "grl/core.hpp"
#include "grl/discount.hpp"
#include "grl/envs.hpp"
#include "grl/harness.hpp"
#include "grl/metrics.hpp"
#include "grl/planner.hpp"
#include "grl/properties.hpp"
#include "grl/rng.hpp"
