#pragma once

#include "mapval/rng.hpp"
#include "mapval/geometry.hpp"
#include "mapval/graph.hpp"
#include "mapval/latent.hpp"
#include "mapval/model.hpp"
#include "mapval/diagnostics.hpp"
#include "mapval/sampler.hpp"
#include "mapval/summary.hpp"
#include "mapval/decision.hpp"
#include "mapval/metrics.hpp"
#include "mapval/simulation.hpp"
#include "mapval/io/csv.hpp"
#include "mapval/io/digest.hpp"
#include "mapval/io/geojson.hpp"
#include "mapval/io/config.hpp"
#include "mapval/io/draws.hpp"
#include "mapval/io/results.hpp"
#include "mapval/io/svg.hpp"
#include "mapval/commands.hpp"
