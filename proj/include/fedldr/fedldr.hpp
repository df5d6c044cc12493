#pragma once

// Umbrella header for the whole library.

#include "fedldr/autodiff.hpp"
#include "fedldr/config.hpp"
#include "fedldr/data.hpp"
#include "fedldr/errors.hpp"
#include "fedldr/federation.hpp"
#include "fedldr/harness.hpp"
#include "fedldr/metrics.hpp"
#include "fedldr/model.hpp"
#include "fedldr/optimizer.hpp"
#include "fedldr/rng.hpp"
#include "fedldr/serialize.hpp"
#include "fedldr/strategy.hpp"
#include "fedldr/tensor.hpp"
#include "fedldr/trainer.hpp"
#include "fedldr/util.hpp"
