#pragma once

#include "rhg/chain_model.hpp"
#include "rhg/game_builder.hpp"
#include "rhg/avi_solver.hpp"
#include "rhg/rhg_policy.hpp"
#include "rhg/scenario.hpp"
#include "rhg/config_io.hpp"
