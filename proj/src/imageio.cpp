#include "mricolor/imageio.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

#include "mricolor/binio.hpp"
#include "mricolor/errors.hpp"

namespace mricolor::io {

namespace {

constexpr char kWarpMagic[8] = {'M', 'R', 'W', 'A', 'R', 'P', '0', '1'};

uint8_t to_u8(float v) {
  float scaled = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f);
  return static_cast<uint8_t>(scaled);
}

torch::Tensor as_hw(const torch::Tensor& img, const std::string& who) {
  if (img.dim() == 2) return img;
  if (img.dim() == 3 && img.size(0) == 1) return img.squeeze(0);
  throw ShapeError(who + ": expected (h,w) or (1,h,w), got rank " + std::to_string(img.dim()));
}

cv::Mat gray_to_mat(const torch::Tensor& img, const std::string& who) {
  torch::Tensor hw = as_hw(img, who).to(torch::kFloat32).contiguous();
  const int64_t h = hw.size(0), w = hw.size(1);
  cv::Mat mat(static_cast<int>(h), static_cast<int>(w), CV_8UC1);
  const float* src = hw.data_ptr<float>();
  for (int64_t y = 0; y < h; ++y) {
    uint8_t* row = mat.ptr<uint8_t>(static_cast<int>(y));
    for (int64_t x = 0; x < w; ++x) row[x] = to_u8(src[y * w + x]);
  }
  return mat;
}

cv::Mat rgb_to_mat(const torch::Tensor& img, const std::string& who) {
  if (img.dim() != 3 || img.size(0) != 3) {
    throw ShapeError(who + ": expected (3,h,w)");
  }
  torch::Tensor t = img.to(torch::kFloat32).contiguous();
  const int64_t h = t.size(1), w = t.size(2);
  const float* src = t.data_ptr<float>();
  cv::Mat mat(static_cast<int>(h), static_cast<int>(w), CV_8UC3);
  for (int64_t y = 0; y < h; ++y) {
    cv::Vec3b* row = mat.ptr<cv::Vec3b>(static_cast<int>(y));
    for (int64_t x = 0; x < w; ++x) {
      // OpenCV stores BGR.
      row[x][0] = to_u8(src[2 * h * w + y * w + x]);
      row[x][1] = to_u8(src[1 * h * w + y * w + x]);
      row[x][2] = to_u8(src[0 * h * w + y * w + x]);
    }
  }
  return mat;
}

void write_mat(const std::filesystem::path& path, const cv::Mat& mat, const std::string& who) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (!cv::imwrite(path.string(), mat)) {
    throw DatasetError(who + ": failed writing " + path.string());
  }
}

cv::Mat read_mat(const std::filesystem::path& path, int flags, const std::string& who) {
  cv::Mat mat = cv::imread(path.string(), flags);
  if (mat.empty()) throw DatasetError(who + ": cannot read " + path.string());
  return mat;
}

}  // namespace

void save_png_gray(const std::filesystem::path& path, const torch::Tensor& img) {
  write_mat(path, gray_to_mat(img, "save_png_gray"), "save_png_gray");
}

torch::Tensor load_png_gray(const std::filesystem::path& path) {
  cv::Mat mat = read_mat(path, cv::IMREAD_GRAYSCALE, "load_png_gray");
  torch::Tensor out = torch::empty({1, mat.rows, mat.cols}, torch::kFloat32);
  float* dst = out.data_ptr<float>();
  for (int y = 0; y < mat.rows; ++y) {
    const uint8_t* row = mat.ptr<uint8_t>(y);
    for (int x = 0; x < mat.cols; ++x) {
      dst[static_cast<int64_t>(y) * mat.cols + x] = static_cast<float>(row[x]) / 255.0f;
    }
  }
  return out;
}

void save_png_rgb(const std::filesystem::path& path, const torch::Tensor& img) {
  write_mat(path, rgb_to_mat(img, "save_png_rgb"), "save_png_rgb");
}

torch::Tensor load_png_rgb(const std::filesystem::path& path) {
  cv::Mat mat = read_mat(path, cv::IMREAD_COLOR, "load_png_rgb");
  const int64_t h = mat.rows, w = mat.cols;
  torch::Tensor out = torch::empty({3, h, w}, torch::kFloat32);
  float* dst = out.data_ptr<float>();
  for (int64_t y = 0; y < h; ++y) {
    const cv::Vec3b* row = mat.ptr<cv::Vec3b>(static_cast<int>(y));
    for (int64_t x = 0; x < w; ++x) {
      dst[0 * h * w + y * w + x] = static_cast<float>(row[x][2]) / 255.0f;
      dst[1 * h * w + y * w + x] = static_cast<float>(row[x][1]) / 255.0f;
      dst[2 * h * w + y * w + x] = static_cast<float>(row[x][0]) / 255.0f;
    }
  }
  return out;
}

void save_png_labels(const std::filesystem::path& path, const torch::Tensor& labels) {
  if (labels.dim() != 2) throw ShapeError("save_png_labels: expected (h,w) label map");
  torch::Tensor t = labels.to(torch::kInt64).contiguous();
  const int64_t h = t.size(0), w = t.size(1);
  const int64_t* src = t.data_ptr<int64_t>();
  cv::Mat mat(static_cast<int>(h), static_cast<int>(w), CV_8UC1);
  for (int64_t y = 0; y < h; ++y) {
    uint8_t* row = mat.ptr<uint8_t>(static_cast<int>(y));
    for (int64_t x = 0; x < w; ++x) {
      int64_t id = src[y * w + x];
      if (id < 0 || id > 255) {
        throw DatasetError("save_png_labels: label id " + std::to_string(id) +
                           " does not fit 8-bit storage");
      }
      row[x] = static_cast<uint8_t>(id);
    }
  }
  write_mat(path, mat, "save_png_labels");
}

torch::Tensor load_png_labels(const std::filesystem::path& path) {
  cv::Mat mat = read_mat(path, cv::IMREAD_GRAYSCALE, "load_png_labels");
  torch::Tensor out = torch::empty({mat.rows, mat.cols}, torch::kInt64);
  int64_t* dst = out.data_ptr<int64_t>();
  for (int y = 0; y < mat.rows; ++y) {
    const uint8_t* row = mat.ptr<uint8_t>(y);
    for (int x = 0; x < mat.cols; ++x) {
      dst[static_cast<int64_t>(y) * mat.cols + x] = row[x];
    }
  }
  return out;
}

void save_warp(const std::filesystem::path& path, const torch::Tensor& field) {
  if (field.dim() != 3) throw ShapeError("save_warp: expected (ch,h,w) field");
  torch::Tensor t = field.to(torch::kFloat32).contiguous();
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("save_warp: cannot open " + path.string());
  out.write(kWarpMagic, sizeof(kWarpMagic));
  binio::write_u32(out, static_cast<uint32_t>(t.size(0)));
  binio::write_u32(out, static_cast<uint32_t>(t.size(1)));
  binio::write_u32(out, static_cast<uint32_t>(t.size(2)));
  binio::write_f32_array(out, t.data_ptr<float>(), static_cast<size_t>(t.numel()));
  if (!out) throw DatasetError("save_warp: failed writing " + path.string());
}

torch::Tensor load_warp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("load_warp: cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kWarpMagic, 8) != 0) {
    throw DatasetError("load_warp: bad magic in " + path.string());
  }
  uint32_t ch = 0, h = 0, w = 0;
  if (!binio::read_u32(in, ch) || !binio::read_u32(in, h) || !binio::read_u32(in, w)) {
    throw DatasetError("load_warp: truncated header in " + path.string());
  }
  torch::Tensor out = torch::empty({static_cast<int64_t>(ch), static_cast<int64_t>(h),
                                    static_cast<int64_t>(w)},
                                   torch::kFloat32);
  if (!binio::read_f32_array(in, out.data_ptr<float>(), static_cast<size_t>(out.numel()))) {
    throw DatasetError("load_warp: truncated data in " + path.string());
  }
  return out;
}

void save_comparison_grid(const std::filesystem::path& path,
                          const std::vector<torch::Tensor>& gt_cryo,
                          const std::vector<torch::Tensor>& input_mri,
                          const std::vector<torch::Tensor>& output) {
  if (gt_cryo.empty()) throw ConfigError("save_comparison_grid: no samples");
  if (gt_cryo.size() != input_mri.size() || gt_cryo.size() != output.size()) {
    throw ConfigError("save_comparison_grid: row lists must have equal length");
  }
  const int cols = static_cast<int>(gt_cryo.size());
  const int h = static_cast<int>(gt_cryo[0].size(1));
  const int w = static_cast<int>(gt_cryo[0].size(2));
  const int pad = 4;
  const int margin = 96;
  cv::Mat grid(3 * h + 4 * pad, margin + cols * (w + pad) + pad, CV_8UC3,
               cv::Scalar(32, 32, 32));
  const char* row_labels[3] = {"GT Cryo", "Input MRI", "Output"};
  for (int r = 0; r < 3; ++r) {
    cv::putText(grid, row_labels[r], cv::Point(6, pad + r * (h + pad) + h / 2),
                cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(230, 230, 230), 1, cv::LINE_8);
  }
  for (int col = 0; col < cols; ++col) {
    cv::Mat cells[3] = {
        rgb_to_mat(gt_cryo[static_cast<size_t>(col)], "save_comparison_grid"),
        cv::Mat(), rgb_to_mat(output[static_cast<size_t>(col)], "save_comparison_grid")};
    cv::Mat gray = gray_to_mat(input_mri[static_cast<size_t>(col)], "save_comparison_grid");
    cv::cvtColor(gray, cells[1], cv::COLOR_GRAY2BGR);
    for (int r = 0; r < 3; ++r) {
      if (cells[r].rows != h || cells[r].cols != w) {
        throw ShapeError("save_comparison_grid: sample " + std::to_string(col) +
                         " row " + std::to_string(r) + " has mismatched size");
      }
      cells[r].copyTo(grid(cv::Rect(margin + col * (w + pad), pad + r * (h + pad), w, h)));
    }
  }
  write_mat(path, grid, "save_comparison_grid");
}

}  // namespace mricolor::io
