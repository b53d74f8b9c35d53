#pragma once

#include "egc2/attack.hpp"
#include "egc2/attribution.hpp"
#include "egc2/autodiff.hpp"
#include "egc2/centrality.hpp"
#include "egc2/compression.hpp"
#include "egc2/dataset_cache.hpp"
#include "egc2/error.hpp"
#include "egc2/experiment.hpp"
#include "egc2/graph.hpp"
#include "egc2/log.hpp"
#include "egc2/model.hpp"
#include "egc2/optim.hpp"
#include "egc2/rng.hpp"
#include "egc2/synthetic.hpp"
#include "egc2/training.hpp"
#include "egc2/tu_format.hpp"
