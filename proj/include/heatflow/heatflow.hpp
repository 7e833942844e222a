#pragma once

// Umbrella header for the heatflow library: reduced-rank graph-Laplacian
// estimation of heat-kernel covariances on point clouds, with Gaussian
// process regression/classification on top.

#include "heatflow/basekernel.hpp"
#include "heatflow/dataset.hpp"
#include "heatflow/experiment.hpp"
#include "heatflow/gp.hpp"
#include "heatflow/graph.hpp"
#include "heatflow/heatkernel.hpp"
#include "heatflow/rng.hpp"
#include "heatflow/sparse.hpp"
#include "heatflow/spectral.hpp"
#include "heatflow/subsample.hpp"
#include "heatflow/train.hpp"
