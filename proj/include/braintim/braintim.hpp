#pragma once

#include "braintim/actions.hpp"
#include "braintim/autodiff.hpp"
#include "braintim/checkpoint.hpp"
#include "braintim/config.hpp"
#include "braintim/container.hpp"
#include "braintim/dataset.hpp"
#include "braintim/error.hpp"
#include "braintim/eval.hpp"
#include "braintim/features.hpp"
#include "braintim/generator.hpp"
#include "braintim/metrics.hpp"
#include "braintim/model.hpp"
#include "braintim/rng.hpp"
#include "braintim/sample.hpp"
#include "braintim/session.hpp"
#include "braintim/signal.hpp"
#include "braintim/tensor.hpp"
#include "braintim/timeline.hpp"
#include "braintim/train.hpp"
