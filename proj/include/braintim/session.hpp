#pragma once

#include <cstdint>
#include <optional>

#include "braintim/signal.hpp"
#include "braintim/timeline.hpp"

namespace braintim {

// One subject's synchronized recording. Raw streams and cached window
// features are each optional; the header fields are always present.
struct Session {
  std::uint32_t subject_id = 0;
  std::uint32_t scene_id = 0;
  TimelineSpec timeline;
  std::uint16_t channels = 0;
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  LabelTrack labels;
  std::optional<RawVideo> video;
  std::optional<RawSignal> signal;
  std::optional<FeatureSequence> visual_features;
  std::optional<FeatureSequence> brain_features;

  // Throws InvalidArgument if streams disagree with the timeline or header.
  void validate() const {
    timeline.validate();
    validate_label_track(labels, timeline.duration_ms);
    if (video) {
      if (!(video->rate == timeline.video_rate)) throw InvalidArgument("video rate differs from timeline");
      if (video->height != height || video->width != width) throw InvalidArgument("video frame size differs from header");
      if (static_cast<std::int64_t>(video->frames()) != timeline.video_frames() ||
          video->pixels.size() != video->frame_size() * video->frames()) {
        throw InvalidArgument("video frame count differs from ceil(T * f_v)");
      }
    }
    if (signal) {
      if (!(signal->rate == timeline.signal_rate)) throw InvalidArgument("signal rate differs from timeline");
      if (signal->channels() != channels) throw InvalidArgument("signal channel count differs from header");
      if (static_cast<std::int64_t>(signal->length()) != timeline.signal_samples()) {
        throw InvalidArgument("signal length differs from ceil(T * f_b)");
      }
    }
  }

  friend bool operator==(const Session&, const Session&) = default;
};

}  // namespace braintim
