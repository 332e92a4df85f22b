#pragma once

// Everything in one include.

#include "sbc/error.hpp"
#include "sbc/expr.hpp"
#include "sbc/model.hpp"
#include "sbc/regions.hpp"
#include "sbc/grid.hpp"
#include "sbc/kernel.hpp"
#include "sbc/solve.hpp"
#include "sbc/mc.hpp"
#include "sbc/certificate.hpp"
#include "sbc/simplex.hpp"
#include "sbc/synth.hpp"
#include "sbc/scenario.hpp"
#include "sbc/cli.hpp"
