#pragma once
// Umbrella header.

#include "dans/autodiff.hpp"
#include "dans/checkpoint.hpp"
#include "dans/cli.hpp"
#include "dans/config.hpp"
#include "dans/curriculum.hpp"
#include "dans/dam.hpp"
#include "dans/diffusion.hpp"
#include "dans/error.hpp"
#include "dans/eval.hpp"
#include "dans/graph_metrics.hpp"
#include "dans/kg_store.hpp"
#include "dans/nn.hpp"
#include "dans/pretrain.hpp"
#include "dans/rng.hpp"
#include "dans/trainer.hpp"
