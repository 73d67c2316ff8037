#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mrnet/common.hpp"
#include "mrnet/span.hpp"

namespace mrnet {

// Dense float feature matrix as stored in MRNF files: rows are tokens (video
// clips or words), columns are feature dimensions.
struct FeatureMatrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<float> data;  // row-major

  static FeatureMatrix zeros(int64_t rows, int64_t cols) {
    FeatureMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.data.assign(static_cast<size_t>(rows * cols), 0.0f);
    return m;
  }

  float& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols + c)]; }
  float at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols + c)]; }
};

// One annotated query-video pair. Saliency holds one entry per clip, each a
// possibly-empty list of 0-4 annotator labels (empty means unannotated,
// i.e. label 0).
struct AnnotationRecord {
  int64_t qid = 0;
  std::string vid;
  double duration = 0.0;  // seconds
  double clip_len = 0.0;  // seconds
  std::vector<std::array<double, 2>> relevant_windows;  // [start_sec, end_sec]
  std::vector<std::vector<int>> saliency;

  int n_clips() const {
    // Snap near-integer ratios so 40.0 / 2.0 never rounds up to 21 clips.
    return static_cast<int>(std::ceil(duration / clip_len - 1e-9));
  }

  void validate(const std::string& context) const;
};

struct VideoSample {
  AnnotationRecord ann;
  FeatureMatrix rgb, flow, depth, text;
  std::vector<Span> norm_spans;  // windows normalized by duration
  std::vector<float> h_gt;       // per-clip saliency target in [0,1]
};

std::vector<AnnotationRecord> read_annotations_jsonl(const std::filesystem::path& path);
void write_annotations_jsonl(const std::filesystem::path& path,
                             const std::vector<AnnotationRecord>& records);

// MRNF binary format: magic "MRNF", u16 version = 1, u32 rows, u32 cols, then
// rows*cols little-endian IEEE-754 f32, row-major. Round trips bit-exactly.
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);
void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& m);

// Normalized spans plus per-clip saliency targets (mean annotator label / 4,
// absent labels meaning 0).
void build_targets(const AnnotationRecord& rec, std::vector<Span>* norm_spans,
                   std::vector<float>* h_gt);

struct SyntheticConfig {
  int n_samples = 16;
  int n_video_min = 20, n_video_max = 20;
  int n_text_min = 4, n_text_max = 8;
  int d_in_visual = 24, d_in_text = 24;
  int spans_min = 1, spans_max = 2;
  double sigma = 0.05;    // feature noise level
  double clip_len = 2.0;  // seconds per clip
  uint64_t seed = 1;

  void validate() const;
};

// Planted-signal generator: a random unit query direction is written (with a
// per-stream gain) into the visual rows inside the planted spans; rows
// outside are uncorrelated noise; text rows are noisy copies of the
// direction. Saliency labels are 3 or 4 inside spans, 0 or 1 outside, chosen
// per sample so that at sigma = 0 targets are a function of the features.
std::vector<VideoSample> synthesize_dataset(const SyntheticConfig& cfg);

// Dataset directory layout: <dir>/annotations.jsonl plus
// <dir>/features/<vid>.<stream>.mrnf with stream in {rgb, flow, depth, text}.
void write_dataset(const std::filesystem::path& dir, const std::vector<VideoSample>& samples);
std::vector<VideoSample> load_dataset(const std::filesystem::path& annotations,
                                      const std::filesystem::path& features_dir);

// Deterministic per-epoch shuffle keyed by (seed, epoch); the final partial
// batch is kept.
std::vector<std::vector<int>> batch_indices(int n, int batch_size, uint64_t seed, int epoch);

}  // namespace mrnet
