#pragma once

#include "m2dan/error.hpp"
#include "m2dan/tensor.hpp"
#include "m2dan/gradcheck.hpp"
#include "m2dan/layers.hpp"
#include "m2dan/losses.hpp"
#include "m2dan/model.hpp"
#include "m2dan/data.hpp"
#include "m2dan/objective.hpp"
#include "m2dan/metrics.hpp"
#include "m2dan/training.hpp"
#include "m2dan/checkpoint.hpp"
#include "m2dan/config.hpp"
#include "m2dan/plot.hpp"
#include "m2dan/experiment.hpp"
