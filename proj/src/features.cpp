#include "rstab/features.hpp"

#include <algorithm>
#include <cmath>

namespace rstab {

namespace {

constexpr double kBorderSlack = 1e-6;

// Sobel responses with replicated borders; gx is positive where intensity grows to the right.
void sobel(const Grid<float>& luma, Grid<float>& gx, Grid<float>& gy) {
  const int h = luma.height();
  const int w = luma.width();
  gx = Grid<float>(h, w, 1);
  gy = Grid<float>(h, w, 1);
  auto at = [&](int y, int x) { return luma(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1)); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      gx(y, x) = (at(y - 1, x + 1) + 2.0f * at(y, x + 1) + at(y + 1, x + 1)) -
                 (at(y - 1, x - 1) + 2.0f * at(y, x - 1) + at(y + 1, x - 1));
      gy(y, x) = (at(y + 1, x - 1) + 2.0f * at(y + 1, x) + at(y + 1, x + 1)) -
                 (at(y - 1, x - 1) + 2.0f * at(y - 1, x) + at(y - 1, x + 1));
    }
  }
}

// Center-aligned 2x upsample: full-res pixel j sits at half-res coordinate (j - 0.5) / 2.
float upsample_at(const Grid<float>& half, int y, int x) {
  const int h = half.height();
  const int w = half.width();
  const double sy = std::clamp((y - 0.5) / 2.0, 0.0, static_cast<double>(h - 1));
  const double sx = std::clamp((x - 0.5) / 2.0, 0.0, static_cast<double>(w - 1));
  const int y0 = static_cast<int>(std::floor(sy));
  const int x0 = static_cast<int>(std::floor(sx));
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const double fy = sy - y0;
  const double fx = sx - x0;
  const double top = (1 - fx) * half(y0, x0) + fx * half(y0, x1);
  const double bot = (1 - fx) * half(y1, x0) + fx * half(y1, x1);
  return static_cast<float>((1 - fy) * top + fy * bot);
}

}  // namespace

FeatureMap HandcraftedExtractor::extract(const Image& image) const {
  if (image.channels() != 3) throw ContractViolation("extract_features: expected an RGB image");
  const int h = image.height();
  const int w = image.width();
  FeatureMap out(h, w, kHandcraftedChannels);
  if (h == 0 || w == 0) return out;

  Grid<float> luma(h, w, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      luma(y, x) = 0.299f * image(y, x, 0) + 0.587f * image(y, x, 1) + 0.114f * image(y, x, 2);
    }
  }
  Grid<float> gx, gy;
  sobel(luma, gx, gy);

  const int hh = (h + 1) / 2;
  const int hw = (w + 1) / 2;
  Grid<float> half(hh, hw, 1);
  for (int y = 0; y < hh; ++y) {
    for (int x = 0; x < hw; ++x) {
      float acc = 0.0f;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) acc += luma(std::min(2 * y + dy, h - 1), std::min(2 * x + dx, w - 1));
      }
      half(y, x) = 0.25f * acc;
    }
  }
  Grid<float> hgx, hgy;
  sobel(half, hgx, hgy);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float* f = out.pixel(y, x).data();
      f[0] = image(y, x, 0);
      f[1] = image(y, x, 1);
      f[2] = image(y, x, 2);
      f[3] = luma(y, x);
      f[4] = gx(y, x);
      f[5] = gy(y, x);
      double sum = 0.0, sq = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const double v = luma(std::clamp(y + dy, 0, h - 1), std::clamp(x + dx, 0, w - 1));
          sum += v;
          sq += v * v;
        }
      }
      const double mean = sum / 9.0;
      f[6] = static_cast<float>(mean);
      f[7] = static_cast<float>(std::sqrt(std::max(0.0, sq / 9.0 - mean * mean)));
      f[8] = upsample_at(half, y, x);
      f[9] = upsample_at(hgx, y, x);
      f[10] = upsample_at(hgy, y, x);
    }
  }
  return out;
}

FeatureMap extract_features(const Image& image) { return HandcraftedExtractor().extract(image); }

bool sample_bilinear(const Grid<float>& map, SubPixel x, float* out) {
  const int h = map.height();
  const int w = map.width();
  const int c = map.channels();
  double u = x.u;
  double v = x.v;
  const bool inside = h > 0 && w > 0 && u >= -kBorderSlack && v >= -kBorderSlack &&
                      u <= w - 1 + kBorderSlack && v <= h - 1 + kBorderSlack;
  if (!inside) {
    std::fill(out, out + c, 0.0f);
    return false;
  }
  u = std::clamp(u, 0.0, static_cast<double>(w - 1));
  v = std::clamp(v, 0.0, static_cast<double>(h - 1));
  const int x0 = w > 1 ? std::min(static_cast<int>(u), w - 2) : 0;
  const int y0 = h > 1 ? std::min(static_cast<int>(v), h - 2) : 0;
  const int x1 = w > 1 ? x0 + 1 : 0;
  const int y1 = h > 1 ? y0 + 1 : 0;
  const double fx = u - x0;
  const double fy = v - y0;
  const float* p00 = map.pixel(y0, x0).data();
  const float* p01 = map.pixel(y0, x1).data();
  const float* p10 = map.pixel(y1, x0).data();
  const float* p11 = map.pixel(y1, x1).data();
  const double w00 = (1 - fx) * (1 - fy), w01 = fx * (1 - fy), w10 = (1 - fx) * fy, w11 = fx * fy;
  for (int k = 0; k < c; ++k) {
    out[k] = static_cast<float>(w00 * p00[k] + w01 * p01[k] + w10 * p10[k] + w11 * p11[k]);
  }
  return true;
}

BilinearSample sample_bilinear(const Grid<float>& map, SubPixel x) {
  BilinearSample s;
  s.values.resize(map.channels());
  s.valid = sample_bilinear(map, x, s.values.data());
  return s;
}

}  // namespace rstab
