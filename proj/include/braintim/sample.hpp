#pragma once

#include <vector>

#include "braintim/signal.hpp"
#include "braintim/timeline.hpp"

namespace braintim {

// One session reduced to what the model consumes: aligned window features,
// per-query labels and the session's timeline length.
struct Sample {
  FeatureSequence visual;
  FeatureSequence brain;
  std::vector<QueryLabel> labels;
  double duration = 0.0;
  int subject_id = 0;
  int scene_id = 0;
};

}  // namespace braintim
