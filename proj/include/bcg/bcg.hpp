#pragma once

#include "bcg/calibration.hpp"
#include "bcg/errors.hpp"
#include "bcg/experiment.hpp"
#include "bcg/gaussian.hpp"
#include "bcg/linalg.hpp"
#include "bcg/matrix_market.hpp"
#include "bcg/random.hpp"
#include "bcg/report.hpp"
#include "bcg/solvers.hpp"
#include "bcg/wasserstein.hpp"
