#pragma once

#include "bhip/rng.hpp"
#include "bhip/parallel.hpp"
#include "bhip/data.hpp"
#include "bhip/graph_scm.hpp"
#include "bhip/scenarios.hpp"
#include "bhip/model.hpp"
#include "bhip/sampler.hpp"
#include "bhip/decision.hpp"
#include "bhip/fit.hpp"
#include "bhip/icp.hpp"
#include "bhip/bench.hpp"
