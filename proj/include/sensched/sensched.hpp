#pragma once

#include "sensched/linalg.hpp"
#include "sensched/model.hpp"
#include "sensched/estimator.hpp"
#include "sensched/reward.hpp"
#include "sensched/mdp.hpp"
#include "sensched/sim.hpp"
#include "sensched/io.hpp"
