#pragma once

#include "smallball/error.hpp"
#include "smallball/rng.hpp"
#include "smallball/parallel.hpp"
#include "smallball/function.hpp"
#include "smallball/distributions.hpp"
#include "smallball/slb.hpp"
#include "smallball/blocks.hpp"
#include "smallball/experiments.hpp"
#include "smallball/learners.hpp"
