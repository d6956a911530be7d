#pragma once

#include "parlab/config.hpp"
#include "parlab/core.hpp"
#include "parlab/csv.hpp"
#include "parlab/encoding.hpp"
#include "parlab/event_log.hpp"
#include "parlab/experiment.hpp"
#include "parlab/learners.hpp"
#include "parlab/metrics.hpp"
#include "parlab/model_selection.hpp"
#include "parlab/predictor.hpp"
#include "parlab/simulator.hpp"
#include "parlab/stats.hpp"
