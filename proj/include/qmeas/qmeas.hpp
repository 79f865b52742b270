// Umbrella header.
#pragma once

#include "core.hpp"
#include "rng.hpp"
#include "integrate.hpp"
#include "collapse.hpp"
#include "ensemble.hpp"
#include "lindblad.hpp"
#include "experiments.hpp"
#include "config.hpp"
#include "io.hpp"
#include "runner.hpp"
