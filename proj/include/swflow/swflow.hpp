#pragma once

#include "swflow/diagnostics.hpp"
#include "swflow/errors.hpp"
#include "swflow/experiments.hpp"
#include "swflow/functionals.hpp"
#include "swflow/io.hpp"
#include "swflow/jko.hpp"
#include "swflow/measures.hpp"
#include "swflow/oracles.hpp"
#include "swflow/rng.hpp"
#include "swflow/sliced_wasserstein.hpp"
#include "swflow/swflow_version.hpp"
