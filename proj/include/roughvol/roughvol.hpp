#pragma once

#include "roughvol/errors.hpp"
#include "roughvol/gauss_path.hpp"
#include "roughvol/model_core.hpp"
#include "roughvol/sde_mc.hpp"
#include "roughvol/stats.hpp"
#include "roughvol/volterra_det.hpp"
