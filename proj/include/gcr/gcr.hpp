#pragma once

// Umbrella header for the geostatistical capture-recapture toolkit.

#include "gcr/covariance.hpp"
#include "gcr/error.hpp"
#include "gcr/io.hpp"
#include "gcr/kriging.hpp"
#include "gcr/links.hpp"
#include "gcr/marginal.hpp"
#include "gcr/normal.hpp"
#include "gcr/parallel.hpp"
#include "gcr/posthoc.hpp"
#include "gcr/rng.hpp"
#include "gcr/scr.hpp"
#include "gcr/simulator.hpp"
#include "gcr/stage1.hpp"
#include "gcr/stage2.hpp"
#include "gcr/summary.hpp"
#include "gcr/theta_cache.hpp"
#include "gcr/types.hpp"
#include "gcr/version.hpp"
