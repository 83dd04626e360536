/// Umbrella header: the full library in one include.
#pragma once

#include "qpt/annealer.hpp"
#include "qpt/backtest.hpp"
#include "qpt/encoding.hpp"
#include "qpt/experiments.hpp"
#include "qpt/frontier.hpp"
#include "qpt/market_data.hpp"
#include "qpt/penalty.hpp"
#include "qpt/qubo.hpp"
#include "qpt/rng.hpp"
#include "qpt/synthetic.hpp"
#include "qpt/two_stage.hpp"
