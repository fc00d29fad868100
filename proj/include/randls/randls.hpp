#pragma once

#include "randls/analysis.hpp"
#include "randls/config.hpp"
#include "randls/directions.hpp"
#include "randls/elm.hpp"
#include "randls/errors.hpp"
#include "randls/matrix.hpp"
#include "randls/matrix_io.hpp"
#include "randls/problem.hpp"
#include "randls/rng.hpp"
#include "randls/sketch.hpp"
#include "randls/solver.hpp"
