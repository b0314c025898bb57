#pragma once

#include "hhfl/analysis.hpp"
#include "hhfl/config.hpp"
#include "hhfl/dataset.hpp"
#include "hhfl/engine.hpp"
#include "hhfl/errors.hpp"
#include "hhfl/experiment.hpp"
#include "hhfl/idx.hpp"
#include "hhfl/learner.hpp"
#include "hhfl/partition.hpp"
#include "hhfl/quadratics.hpp"
#include "hhfl/rng.hpp"
#include "hhfl/topology.hpp"
#include "hhfl/trace_io.hpp"
#include "hhfl/verify.hpp"
