#pragma once

#include "bnapprox/bif.hpp"
#include "bnapprox/checkpoint.hpp"
#include "bnapprox/dataset.hpp"
#include "bnapprox/eval.hpp"
#include "bnapprox/exact.hpp"
#include "bnapprox/experiment.hpp"
#include "bnapprox/factor.hpp"
#include "bnapprox/network.hpp"
#include "bnapprox/nn.hpp"
#include "bnapprox/rng.hpp"
#include "bnapprox/sampler.hpp"
