#pragma once

#include "errw/curvature.hpp"
#include "errw/dense_matrix.hpp"
#include "errw/diagnostics.hpp"
#include "errw/error.hpp"
#include "errw/experiment.hpp"
#include "errw/gnn.hpp"
#include "errw/graph.hpp"
#include "errw/linalg.hpp"
#include "errw/random.hpp"
#include "errw/resistance.hpp"
#include "errw/rewiring.hpp"
