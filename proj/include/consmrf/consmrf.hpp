#pragma once

#include "consmrf/baselines.hpp"
#include "consmrf/checkpoint.hpp"
#include "consmrf/consensus_trainer.hpp"
#include "consmrf/dataset.hpp"
#include "consmrf/evaluator.hpp"
#include "consmrf/factors.hpp"
#include "consmrf/objective.hpp"
#include "consmrf/synthetic.hpp"
#include "consmrf/version.hpp"
