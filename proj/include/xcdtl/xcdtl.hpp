#pragma once

#include "xcdtl/alignment.hpp"
#include "xcdtl/anomaly.hpp"
#include "xcdtl/classifiers.hpp"
#include "xcdtl/features.hpp"
#include "xcdtl/generators.hpp"
#include "xcdtl/graph.hpp"
#include "xcdtl/grid.hpp"
#include "xcdtl/iit.hpp"
#include "xcdtl/louvain.hpp"
#include "xcdtl/metrics.hpp"
#include "xcdtl/report.hpp"
#include "xcdtl/stats.hpp"
