#pragma once

#include "blendflow/errors.hpp"
#include "blendflow/gas_physics.hpp"
#include "blendflow/io.hpp"
#include "blendflow/lyapunov.hpp"
#include "blendflow/network.hpp"
#include "blendflow/observer.hpp"
#include "blendflow/run.hpp"
#include "blendflow/scenario.hpp"
#include "blendflow/solver.hpp"
#include "blendflow/steady.hpp"
