#pragma once

#include "assessment.hpp"
#include "calibration.hpp"
#include "cell.hpp"
#include "config.hpp"
#include "constants.hpp"
#include "current_profile.hpp"
#include "degradation.hpp"
#include "errors.hpp"
#include "kinetics.hpp"
#include "mesh.hpp"
#include "ocp.hpp"
#include "parameters.hpp"
#include "profiles.hpp"
#include "simulate.hpp"
