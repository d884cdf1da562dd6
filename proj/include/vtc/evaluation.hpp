// Temporal warping error, perceptual distance and the metrics report.
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "vtc/flow.hpp"
#include "vtc/image_io.hpp"
#include "vtc/perception.hpp"
#include "vtc/video_data.hpp"
#include "vtc/warping.hpp"

namespace vtc {

struct PairError {
  double value = 0.0;
  bool degenerate = false;  // no non-occluded pixel
};

// (1 / sum M) * sum_i M_i * || V_t,i - warp(V_next, flow)_i ||_2^2
inline PairError warp_error_pair(const Tensor<float>& frame, const Tensor<float>& next, const FlowField<float>& flow,
                                 const Mask<float>& occ) {
  require_same_shape(frame.shape(), next.shape(), "warp_error_pair");
  require_same_plane(frame.shape(), flow.uv.shape(), "warp_error_pair (flow)");
  require_same_plane(frame.shape(), occ.values.shape(), "warp_error_pair (mask)");
  if (!occ.is_binary()) throw std::invalid_argument("warp_error_pair: occlusion mask must be binary");
  const Tensor<float> warped = bilinear_warp(next, flow);
  const std::size_t plane = frame.shape().plane();
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    if (occ.values[i] == 0.0f) continue;
    den += 1.0;
    for (int c = 0; c < frame.channels(); ++c) {
      const double d = static_cast<double>(frame[c * plane + i]) - warped[c * plane + i];
      num += d * d;
    }
  }
  if (den == 0.0) return {0.0, true};
  return {num / den, false};
}

struct VideoWarpError {
  double mean = 0.0;
  std::vector<PairError> pairs;  // pairs[k] is (t, t+1) with t = k + 1
};

// Mean pair error over t = 1..T-1. Flows and masks are taken from
// flow_source when given (e.g. the original video), otherwise from video.
inline VideoWarpError warp_error_video(const FrameSequence<float>& video, const FlowProvider& provider,
                                       const FrameSequence<float>* flow_source = nullptr) {
  if (video.length() < 2) throw std::invalid_argument("warp_error_video: need at least 2 frames");
  const FrameSequence<float>& src = flow_source ? *flow_source : video;
  VideoWarpError r;
  double total = 0.0;
  for (int t = 1; t < video.length(); ++t) {
    const auto e = warp_error_pair(video.at(t), video.at(t + 1), provider.flow(src, t, t + 1),
                                   provider.occlusion(src, t, t + 1));
    r.pairs.push_back(e);
    total += e.value;
  }
  r.mean = total / static_cast<double>(video.length() - 1);
  return r;
}

struct MetricsReport {
  std::string sequence_id;
  std::string flow_backend;
  std::string metric_id;
  std::optional<double> warp_error;
  std::optional<double> perceptual_distance;
  std::vector<PairError> pairs;
  std::vector<double> frame_distances;  // d(O_t, P_t) for t = 2..T
  nlohmann::json extra = nlohmann::json::object();

  bool complete() const {
    return warp_error && perceptual_distance && !pairs.empty() && frame_distances.size() == pairs.size();
  }
  int degenerate_pairs() const {
    int n = 0;
    for (const auto& p : pairs) n += p.degenerate ? 1 : 0;
    return n;
  }
};

inline MetricsReport evaluate(const FrameSequence<float>& output, const FrameSequence<float>& processed,
                              const FlowProvider& provider, const PerceptualMetric<float>& metric,
                              const FrameSequence<float>* flow_source = nullptr, std::string sequence_id = "") {
  if (output.length() != processed.length()) throw DimensionMismatch("evaluate: length mismatch");
  if (output.frame_shape() != processed.frame_shape()) throw DimensionMismatch("evaluate: frame size mismatch");
  MetricsReport r;
  r.sequence_id = std::move(sequence_id);
  r.flow_backend = provider.id();
  r.metric_id = metric.id();
  const auto we = warp_error_video(output, provider, flow_source);
  r.warp_error = we.mean;
  r.pairs = we.pairs;
  double total = 0.0;
  for (int t = 2; t <= output.length(); ++t) {
    const double d = metric.distance(output.at(t), processed.at(t));
    r.frame_distances.push_back(d);
    total += d;
  }
  r.perceptual_distance = total / static_cast<double>(output.length() - 1);
  return r;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (std::size_t k = 0; k < r.pairs.size(); ++k) {
    pairs.push_back({{"t", k + 1}, {"next", k + 2}, {"warp_error", r.pairs[k].value}, {"degenerate", r.pairs[k].degenerate}});
  }
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t k = 0; k < r.frame_distances.size(); ++k) {
    frames.push_back({{"t", k + 2}, {"perceptual_distance", r.frame_distances[k]}});
  }
  return {{"sequence_id", r.sequence_id},
          {"flow_backend", r.flow_backend},
          {"metric", r.metric_id},
          {"E_warp", r.warp_error.value_or(0.0)},
          {"D_perceptual", r.perceptual_distance.value_or(0.0)},
          {"degenerate_pairs", r.degenerate_pairs()},
          {"pairs", pairs},
          {"frames", frames},
          {"extra", r.extra}};
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  std::string s = os.str();
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline std::string render_report(const MetricsReport& r) {
  if (!r.complete()) throw std::invalid_argument("incomplete report");
  std::ostringstream os;
  os << "sequence: " << (r.sequence_id.empty() ? "-" : r.sequence_id) << "\n";
  os << "flow_backend: " << r.flow_backend << "\n";
  os << "metric: " << r.metric_id << "\n";
  os << "E_warp: " << format_number(*r.warp_error) << "\n";
  os << "D_perceptual: " << format_number(*r.perceptual_distance) << "\n";
  os << "degenerate_pairs: " << r.degenerate_pairs() << "\n";
  for (auto it = r.extra.begin(); it != r.extra.end(); ++it) os << it.key() << ": " << it.value().dump() << "\n";
  os << "\n[warp_error_pairs]\n";
  os << "t\tnext\twarp_error\tdegenerate\n";
  for (std::size_t k = 0; k < r.pairs.size(); ++k) {
    os << k + 1 << "\t" << k + 2 << "\t" << format_number(r.pairs[k].value) << "\t" << (r.pairs[k].degenerate ? 1 : 0)
       << "\n";
  }
  os << "\n[perceptual_distance_frames]\n";
  os << "t\tdistance\n";
  for (std::size_t k = 0; k < r.frame_distances.size(); ++k) {
    os << k + 2 << "\t" << format_number(r.frame_distances[k]) << "\n";
  }
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("cannot write " + path.string());
}

// Writes the text report at path and a JSON companion at path + ".json".
inline void save_report(const MetricsReport& r, const std::filesystem::path& path) {
  const std::string text = render_report(r);
  write_text(path, text);
  write_text(path.string() + ".json", to_json(r).dump(2) + "\n");
}

struct ScatterPoint {
  double x = 0.0, y = 0.0;
  std::string label;
};

// Minimal SVG scatter plot (E_warp on x, D_perceptual on y).
inline std::string scatter_svg(const std::vector<ScatterPoint>& pts, const std::string& xlabel, const std::string& ylabel) {
  const double W = 480, H = 360, m = 50;
  double x0 = 0, x1 = 1e-12, y0 = 0, y1 = 1e-12;
  for (const auto& p : pts) {
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  x1 *= 1.1;
  y1 *= 1.1;
  auto sx = [&](double x) { return m + (x - x0) / (x1 - x0) * (W - 2 * m); };
  auto sy = [&](double y) { return H - m - (y - y0) / (y1 - y0) * (H - 2 * m); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << m << "\" y1=\"" << H - m << "\" x2=\"" << W - m << "\" y2=\"" << H - m << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << H - m << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  os << "<text x=\"15\" y=\"" << H / 2 << "\" transform=\"rotate(-90 15 " << H / 2 << ")\" text-anchor=\"middle\">"
     << ylabel << "</text>\n";
  os << "<text x=\"" << W - m << "\" y=\"" << H - m + 15 << "\" text-anchor=\"end\" font-size=\"10\">"
     << format_number(x1) << "</text>\n";
  os << "<text x=\"" << m - 5 << "\" y=\"" << m << "\" text-anchor=\"end\" font-size=\"10\">" << format_number(y1)
     << "</text>\n";
  for (const auto& p : pts) {
    os << "<circle cx=\"" << sx(p.x) << "\" cy=\"" << sy(p.y) << "\" r=\"4\" fill=\"steelblue\"/>\n";
    os << "<text x=\"" << sx(p.x) + 6 << "\" y=\"" << sy(p.y) - 6 << "\" font-size=\"11\">" << p.label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace vtc
