#pragma once

#include "gsvie/analysis.hpp"
#include "gsvie/coefficients.hpp"
#include "gsvie/errors.hpp"
#include "gsvie/expectation.hpp"
#include "gsvie/gcore.hpp"
#include "gsvie/parallel.hpp"
#include "gsvie/philox.hpp"
#include "gsvie/solver.hpp"
#include "gsvie/summation.hpp"
