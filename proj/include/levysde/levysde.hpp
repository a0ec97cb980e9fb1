#pragma once

#include "levysde/config.hpp"
#include "levysde/drivers.hpp"
#include "levysde/harness.hpp"
#include "levysde/levy_measure.hpp"
#include "levysde/matrix.hpp"
#include "levysde/models.hpp"
#include "levysde/parallel.hpp"
#include "levysde/problems.hpp"
#include "levysde/quadrature.hpp"
#include "levysde/report.hpp"
#include "levysde/rng.hpp"
#include "levysde/schemes.hpp"
#include "levysde/version.hpp"
