#pragma once

// Umbrella header: the whole pipeline from raw EEG window to benchmark report.

#include "ldgcn/bench.hpp"
#include "ldgcn/checkpoint.hpp"
#include "ldgcn/cli.hpp"
#include "ldgcn/config.hpp"
#include "ldgcn/data.hpp"
#include "ldgcn/dft.hpp"
#include "ldgcn/dwt.hpp"
#include "ldgcn/graph.hpp"
#include "ldgcn/io_util.hpp"
#include "ldgcn/model.hpp"
#include "ldgcn/pipeline.hpp"
#include "ldgcn/pruning.hpp"
#include "ldgcn/rng.hpp"
#include "ldgcn/signal.hpp"
#include "ldgcn/train.hpp"
