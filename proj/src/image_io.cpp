#include <filesystem>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sgap/data_pipeline.hpp"

namespace sgap {

TensorF read_image_png(const std::string& path, int target_size, int channels) {
  cv::Mat m = cv::imread(path, channels == 1 ? cv::IMREAD_GRAYSCALE
                                             : cv::IMREAD_COLOR);
  if (m.empty()) throw IoError("cannot read image: " + path);
  if (m.rows != target_size || m.cols != target_size) {
    cv::Mat resized;
    cv::resize(m, resized, cv::Size(target_size, target_size), 0, 0,
               cv::INTER_AREA);
    m = resized;
  }
  TensorF out({channels, target_size, target_size});
  for (int y = 0; y < target_size; ++y) {
    for (int x = 0; x < target_size; ++x) {
      if (channels == 1) {
        out.at3(0, y, x) = byte_to_unit(m.at<uint8_t>(y, x));
      } else {
        const auto& px = m.at<cv::Vec3b>(y, x);  // BGR on disk
        out.at3(0, y, x) = byte_to_unit(px[2]);
        out.at3(1, y, x) = byte_to_unit(px[1]);
        out.at3(2, y, x) = byte_to_unit(px[0]);
      }
    }
  }
  return out;
}

void write_image_png(const std::string& path, const TensorF& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
    throw ShapeError("write_image_png expects {1,H,W} or {3,H,W}, got " +
                     image.shape_str());
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  cv::Mat m(h, w, c == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (c == 1) {
        m.at<uint8_t>(y, x) = unit_to_byte(image.at3(0, y, x));
      } else {
        m.at<cv::Vec3b>(y, x) = cv::Vec3b(unit_to_byte(image.at3(2, y, x)),
                                          unit_to_byte(image.at3(1, y, x)),
                                          unit_to_byte(image.at3(0, y, x)));
      }
    }
  }
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  if (!cv::imwrite(path, m)) throw IoError("cannot write image: " + path);
}

}  // namespace sgap
