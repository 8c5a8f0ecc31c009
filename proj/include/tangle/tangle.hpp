#pragma once

#include "tangle/csv.hpp"
#include "tangle/error.hpp"
#include "tangle/measures.hpp"
#include "tangle/model.hpp"
#include "tangle/parallel.hpp"
#include "tangle/qbd.hpp"
#include "tangle/sim.hpp"
#include "tangle/sojourn.hpp"
#include "tangle/stats.hpp"
