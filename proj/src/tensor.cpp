#include "bacon/tensor.hpp"

#include <algorithm>

namespace bacon {

Image::Image(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels < 0 || height < 0 || width < 0) throw InvalidArgument("negative image dimensions");
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

Image crop(const Image& img, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > img.height() || x0 + w > img.width())
    throw InvalidArgument("crop window outside image");
  Image out(img.channels(), h, w);
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out(c, y, x) = img(c, y0 + y, x0 + x);
  out.set_augmented(img.augmented());
  return out;
}

void require_same_shape(const Image& a, const Image& b, const std::string& what) {
  if (!a.same_shape(b))
    throw ShapeMismatch(what + ": " + std::to_string(a.channels()) + "x" + std::to_string(a.height()) + "x" +
                        std::to_string(a.width()) + " vs " + std::to_string(b.channels()) + "x" +
                        std::to_string(b.height()) + "x" + std::to_string(b.width()));
}

std::size_t count_true(const Mask& m) {
  return static_cast<std::size_t>(std::count_if(m.values().begin(), m.values().end(), [](auto v) { return v != 0; }));
}

}  // namespace bacon
