#pragma once

#include "sphperf/vec3.hpp"
#include "sphperf/model.hpp"
#include "sphperf/physics.hpp"
#include "sphperf/grid.hpp"
#include "sphperf/parallel.hpp"
#include "sphperf/engine_config.hpp"
#include "sphperf/engines.hpp"
#include "sphperf/sim.hpp"
#include "sphperf/occupancy.hpp"
#include "sphperf/snapshot.hpp"
#include "sphperf/bench.hpp"
