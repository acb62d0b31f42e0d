#pragma once

// Umbrella header for the saddle-point toolkit.

#include "tpd/alm.hpp"
#include "tpd/bregman.hpp"
#include "tpd/constants.hpp"
#include "tpd/csv.hpp"
#include "tpd/errors.hpp"
#include "tpd/flows.hpp"
#include "tpd/inner.hpp"
#include "tpd/integrate.hpp"
#include "tpd/linear_map.hpp"
#include "tpd/oracle.hpp"
#include "tpd/problem.hpp"
#include "tpd/registry.hpp"
#include "tpd/rng.hpp"
#include "tpd/schemes.hpp"
#include "tpd/spd_form.hpp"
#include "tpd/suites.hpp"
#include "tpd/verify.hpp"
