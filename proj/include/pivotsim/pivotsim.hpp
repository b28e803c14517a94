#pragma once

#include "pivotsim/calibration.hpp"
#include "pivotsim/config.hpp"
#include "pivotsim/control.hpp"
#include "pivotsim/csv.hpp"
#include "pivotsim/dynamics.hpp"
#include "pivotsim/errors.hpp"
#include "pivotsim/io.hpp"
#include "pivotsim/mekf.hpp"
#include "pivotsim/metrics.hpp"
#include "pivotsim/random.hpp"
#include "pivotsim/scenario.hpp"
#include "pivotsim/sensors.hpp"
#include "pivotsim/so3.hpp"
#include "pivotsim/units.hpp"
