#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cfsum/attention.hpp"
#include "cfsum/tensor.hpp"

namespace cfsum {

enum class Modality { kVideo, kAudio, kText };

const char* to_string(Modality m);

// One modality's feature matrix (length x dim) with its validity mask.
struct FeatureSequence {
  Modality modality = Modality::kVideo;
  Tensor features;   // n x d
  PaddingMask mask;  // length n

  std::size_t length() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
  void validate() const;
};

// Aligned (video, audio, text, ground-truth saliency) record for one video.
// Video and audio, when both present, are clip-aligned: equal length and
// identical validity. Saliency holds one value per clip, already normalized
// to [0, 1].
struct MultiModalSample {
  std::string sample_id;
  FeatureSequence video;
  std::optional<FeatureSequence> audio;
  std::optional<FeatureSequence> text;
  std::vector<double> saliency;

  std::size_t n_clips() const { return video.length(); }
  void validate() const;
};

}  // namespace cfsum
