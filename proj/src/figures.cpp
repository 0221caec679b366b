// Diagnostic figure rendering: Hough six-panel views and IoU training curves.

#include <algorithm>
#include <cmath>
#include <map>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "contrail/errors.hpp"
#include "contrail/pipeline.hpp"
#include "contrail/png_io.hpp"

namespace contrail::pipeline {

namespace {

constexpr int kPanel = 340;   // panel content size, px
constexpr int kLabel = 26;    // label strip height
constexpr int kGap = 8;

cv::Mat tensor_to_gray8(const torch::Tensor& t) {
  auto v = t.detach().to(torch::kFloat32).contiguous();
  cv::Mat m(static_cast<int>(v.size(0)), static_cast<int>(v.size(1)), CV_32F,
            v.data_ptr<float>());
  cv::Mat out;
  m.convertTo(out, CV_8U, 255.0);
  return out.clone();
}

cv::Mat mask_to_gray8(const Mask& mask) {
  cv::Mat m(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) m.at<uint8_t>(y, x) = mask.at(y, x) ? 255 : 0;
  }
  return m;
}

void paste_panel(cv::Mat& sheet, const cv::Mat& gray, int row, int col,
                 const std::string& label) {
  cv::Mat resized;
  cv::resize(gray, resized, cv::Size(kPanel, kPanel), 0, 0, cv::INTER_NEAREST);
  cv::Mat color;
  cv::cvtColor(resized, color, cv::COLOR_GRAY2BGR);

  const int x0 = kGap + col * (kPanel + kGap);
  const int y0 = kGap + row * (kPanel + kLabel + kGap);
  cv::putText(sheet, label, {x0 + 2, y0 + kLabel - 8}, cv::FONT_HERSHEY_SIMPLEX,
              0.55, {30, 30, 30}, 1, cv::LINE_AA);
  color.copyTo(sheet(cv::Rect(x0, y0 + kLabel, kPanel, kPanel)));
}

struct HoughView {
  torch::Tensor map;      // normalized accumulator values
  hough::LineSet lines;
  Mask rendered;
};

HoughView analyze(const torch::Tensor& mask2d, const hough::HoughGrid& grid,
                  double threshold, int nms_radius) {
  HoughView v;
  auto acc = hough::soft_accumulate(mask2d, grid);
  v.map = acc.values;
  v.lines = hough::extract_lines(acc, threshold, nms_radius);
  v.rendered = hough::render_lines(v.lines, grid.image_height, grid.image_width);
  return v;
}

torch::Tensor image_tensor(const Image& img) {
  auto t = torch::empty({img.height, img.width}, torch::kFloat32);
  std::copy(img.data.begin(), img.data.end(), t.data_ptr<float>());
  return t;
}

torch::Tensor mask_tensor(const Mask& mask) {
  auto t = torch::empty({mask.height, mask.width}, torch::kFloat32);
  auto* p = t.data_ptr<float>();
  for (size_t i = 0; i < mask.size(); ++i) p[i] = mask.data[i] ? 1.0f : 0.0f;
  return t;
}

}  // namespace

HoughDiagnostics diagnose_hough(const fs::path& target_mask_path,
                                const fs::path& out_dir,
                                const std::optional<fs::path>& pred_mask_path,
                                const std::optional<fs::path>& checkpoint_dir,
                                const std::optional<fs::path>& probe_image,
                                int n_theta, double rho_resolution,
                                double extract_threshold, int nms_radius) {
  Image target_raw = read_unit_gray(target_mask_path);
  torch::Tensor target = (image_tensor(target_raw) >= 0.5f).to(torch::kFloat32);
  const int h = target_raw.height, w = target_raw.width;

  torch::Tensor pred;
  if (pred_mask_path) {
    Image p = read_unit_gray(*pred_mask_path);
    if (p.height != h || p.width != w) {
      throw DataError("prediction mask shape differs from target mask");
    }
    pred = image_tensor(p);
  } else if (checkpoint_dir && probe_image) {
    auto ck = load_checkpoint(*checkpoint_dir);
    ck.model->eval();
    torch::NoGradGuard no_grad;
    Image img = read_unit_gray(*probe_image);
    if (img.height != h || img.width != w) {
      throw DataError("probe image shape differs from target mask");
    }
    auto x = model::replicate_channels(
        image_tensor(img).unsqueeze(0).unsqueeze(0));
    pred = torch::sigmoid(ck.model->forward(x)).squeeze(0).squeeze(0);
  } else {
    pred = target;
  }

  auto grid = hough::build_grid(h, w, n_theta, rho_resolution);
  auto tv = analyze(target, grid, extract_threshold, nms_radius);
  auto pv = analyze(pred, grid, extract_threshold, nms_radius);

  const int sheet_w = 3 * kPanel + 4 * kGap;
  const int sheet_h = 2 * (kPanel + kLabel) + 3 * kGap;
  cv::Mat sheet(sheet_h, sheet_w, CV_8UC3, cv::Scalar(255, 255, 255));

  paste_panel(sheet, tensor_to_gray8(target), 0, 0, "1: target mask");
  paste_panel(sheet, mask_to_gray8(tv.rendered), 0, 1, "2: target lines");
  paste_panel(sheet, tensor_to_gray8(tv.map), 0, 2, "3: target hough");
  paste_panel(sheet, tensor_to_gray8(pred), 1, 0, "4: prediction mask");
  paste_panel(sheet, mask_to_gray8(pv.rendered), 1, 1, "5: prediction lines");
  paste_panel(sheet, tensor_to_gray8(pv.map), 1, 2, "6: prediction hough");

  fs::create_directories(out_dir);
  HoughDiagnostics out;
  out.figure = out_dir / "hough_diagnostics.png";
  out.target_lines = std::move(tv.lines);
  out.prediction_lines = std::move(pv.lines);
  if (!cv::imwrite(out.figure.string(), sheet)) {
    throw DataError("cannot write " + out.figure.string());
  }
  return out;
}

// ---------------------------------------------------------------------------
// IoU curves
// ---------------------------------------------------------------------------

void plot_metrics(const std::vector<fs::path>& logs, const fs::path& out_png) {
  if (logs.empty()) throw DataError("plot_metrics: no metrics logs given");

  struct Series {
    std::string label;
    cv::Scalar color;
    std::vector<std::pair<int64_t, double>> points;
  };
  static const cv::Scalar kPalette[] = {
      {180, 80, 20}, {30, 90, 200}, {40, 150, 60}, {150, 40, 150},
      {20, 160, 200}, {120, 120, 30}};

  std::vector<Series> series;
  int64_t max_step = 1;
  for (size_t i = 0; i < logs.size(); ++i) {
    auto entries = read_metrics_log(logs[i]);
    if (entries.empty()) {
      throw DataError("metrics log is empty: " + logs[i].string());
    }
    const std::string run = logs[i].parent_path().filename().empty()
                                ? logs[i].stem().string()
                                : logs[i].parent_path().filename().string();
    cv::Scalar base = kPalette[i % std::size(kPalette)];
    cv::Scalar light = 0.5 * base + cv::Scalar(127, 127, 127);
    Series train{run + " train", base, {}};
    Series val{run + " val", light, {}};
    for (const auto& e : entries) {
      max_step = std::max(max_step, e.step);
      (e.split == "train" ? train : val).points.emplace_back(e.step, e.iou);
    }
    if (!train.points.empty()) series.push_back(std::move(train));
    if (!val.points.empty()) series.push_back(std::move(val));
  }

  const int width = 960, height = 600;
  const int ml = 70, mr = 30, mt = 30, mb = 50;
  cv::Mat sheet(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int plot_w = width - ml - mr, plot_h = height - mt - mb;

  auto px = [&](int64_t step) {
    return ml + static_cast<int>(std::lround(
                    static_cast<double>(step) / max_step * plot_w));
  };
  auto py = [&](double iou) {
    return mt + static_cast<int>(std::lround((1.0 - iou) * plot_h));
  };

  // Axes and gridlines.
  for (int i = 0; i <= 4; ++i) {
    double iou = i * 0.25;
    cv::line(sheet, {ml, py(iou)}, {width - mr, py(iou)}, {220, 220, 220}, 1);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.2f", iou);
    cv::putText(sheet, buf, {8, py(iou) + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                {60, 60, 60}, 1, cv::LINE_AA);
  }
  const int64_t x_tick = std::max<int64_t>(1, max_step / 5);
  for (int64_t s = 0; s <= max_step; s += x_tick) {
    cv::line(sheet, {px(s), mt}, {px(s), height - mb}, {235, 235, 235}, 1);
    cv::putText(sheet, std::to_string(s), {px(s) - 12, height - mb + 20},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, {60, 60, 60}, 1, cv::LINE_AA);
  }
  cv::rectangle(sheet, {ml, mt}, {width - mr, height - mb}, {80, 80, 80}, 1);
  cv::putText(sheet, "step", {width / 2 - 20, height - 12},
              cv::FONT_HERSHEY_SIMPLEX, 0.5, {60, 60, 60}, 1, cv::LINE_AA);
  cv::putText(sheet, "IoU", {10, mt - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.5,
              {60, 60, 60}, 1, cv::LINE_AA);

  for (const auto& s : series) {
    for (size_t k = 1; k < s.points.size(); ++k) {
      cv::line(sheet,
               {px(s.points[k - 1].first), py(s.points[k - 1].second)},
               {px(s.points[k].first), py(s.points[k].second)}, s.color, 2,
               cv::LINE_AA);
    }
  }

  int ly = mt + 18;
  for (const auto& s : series) {
    cv::line(sheet, {width - mr - 170, ly - 4}, {width - mr - 140, ly - 4},
             s.color, 2);
    cv::putText(sheet, s.label, {width - mr - 132, ly}, cv::FONT_HERSHEY_SIMPLEX,
                0.45, {40, 40, 40}, 1, cv::LINE_AA);
    ly += 18;
  }

  if (!out_png.parent_path().empty()) fs::create_directories(out_png.parent_path());
  if (!cv::imwrite(out_png.string(), sheet)) {
    throw DataError("cannot write " + out_png.string());
  }
}

}  // namespace contrail::pipeline
