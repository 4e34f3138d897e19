#pragma once

#include <memory>
#include <string>
#include <vector>

#include "rstab/geometry.hpp"
#include "rstab/grid.hpp"

namespace rstab {

using FeatureMap = Grid<float>;

inline constexpr int kHandcraftedChannels = 11;

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int channels() const = 0;
  virtual std::string name() const = 0;
  virtual FeatureMap extract(const Image& image) const = 0;
};

// Channels: R, G, B, luma, Sobel gx, Sobel gy, 3x3 luma mean, 3x3 luma std,
// then luma, gx, gy computed at half resolution and upsampled back.
// Borders replicate the edge pixel.
class HandcraftedExtractor final : public FeatureExtractor {
 public:
  int channels() const override { return kHandcraftedChannels; }
  std::string name() const override { return "handcrafted"; }
  FeatureMap extract(const Image& image) const override;
};

FeatureMap extract_features(const Image& image);

// Bilinear read of all channels at x into out[0..C). Returns false (and
// writes zeros) when the 2x2 neighborhood leaves the image; coordinates
// within 1e-6 of the border are snapped onto it.
bool sample_bilinear(const Grid<float>& map, SubPixel x, float* out);

struct BilinearSample {
  std::vector<float> values;
  bool valid = false;
};
BilinearSample sample_bilinear(const Grid<float>& map, SubPixel x);

}  // namespace rstab
