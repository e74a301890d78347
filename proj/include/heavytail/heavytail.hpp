#pragma once

#include "heavytail/accumulator.hpp"
#include "heavytail/asymptotics.hpp"
#include "heavytail/distribution.hpp"
#include "heavytail/efficiency_lab.hpp"
#include "heavytail/error.hpp"
#include "heavytail/estimators.hpp"
#include "heavytail/factor_model.hpp"
#include "heavytail/parallel.hpp"
#include "heavytail/random.hpp"
#include "heavytail/reml.hpp"
