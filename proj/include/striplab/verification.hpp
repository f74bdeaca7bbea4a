#pragma once

#include "striplab/verification/generators.hpp"
#include "striplab/verification/grad_check.hpp"
#include "striplab/verification/oracles.hpp"
#include "striplab/verification/probes.hpp"
#include "striplab/verification/random.hpp"
#include "striplab/verification/suites.hpp"
