#pragma once

// Umbrella header for the synthetic binary prediction market library.

#include "marketml/agent.hpp"
#include "marketml/dataset.hpp"
#include "marketml/evaluate.hpp"
#include "marketml/evolve.hpp"
#include "marketml/io.hpp"
#include "marketml/lmsr.hpp"
#include "marketml/market.hpp"
#include "marketml/rng.hpp"
