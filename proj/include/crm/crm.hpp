#pragma once

#include "crm/error.hpp"
#include "crm/matrix.hpp"
#include "crm/matquad.hpp"
#include "crm/stats.hpp"
#include "crm/io.hpp"
#include "crm/universe.hpp"
#include "crm/factors.hpp"
#include "crm/regression.hpp"
#include "crm/riskmodel.hpp"
#include "crm/strategy.hpp"
#include "crm/diagnostics.hpp"
#include "crm/synth.hpp"
