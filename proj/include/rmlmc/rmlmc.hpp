#pragma once

#include "alm_model.hpp"
#include "calibration.hpp"
#include "errors.hpp"
#include "ml2r_weights.hpp"
#include "nested_core.hpp"
#include "normal.hpp"
#include "parallel.hpp"
#include "plan.hpp"
#include "plan_optimizer.hpp"
#include "problem.hpp"
#include "random.hpp"
#include "stats.hpp"
