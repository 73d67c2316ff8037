#include "mrnet/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mrnet {

using nlohmann::json;

void AnnotationRecord::validate(const std::string& context) const {
  auto fail = [&](const std::string& field, const std::string& why) {
    throw ParseError(context + ": field '" + field + "': " + why);
  };
  if (vid.empty()) fail("vid", "must be non-empty");
  if (!(duration > 0.0) || !std::isfinite(duration)) fail("duration", "must be > 0");
  if (!(clip_len > 0.0) || !std::isfinite(clip_len)) fail("clip_len", "must be > 0");
  const int nv = n_clips();
  if (nv < 1) fail("duration", "yields zero clips");
  for (const auto& w : relevant_windows) {
    if (!(w[0] >= 0.0 && w[0] < w[1] && w[1] <= duration))
      fail("relevant_windows", "window [" + std::to_string(w[0]) + ", " +
                                   std::to_string(w[1]) + "] violates 0 <= start < end <= duration");
  }
  if (static_cast<int>(saliency.size()) != nv)
    fail("saliency", "expected " + std::to_string(nv) + " clip entries, got " +
                         std::to_string(saliency.size()));
  for (const auto& labels : saliency)
    for (int l : labels)
      if (l < 0 || l > 4) fail("saliency", "label " + std::to_string(l) + " outside 0..4");
}

namespace {

AnnotationRecord record_from_json(const json& j, const std::string& context) {
  auto need = [&](const char* field) -> const json& {
    auto it = j.find(field);
    if (it == j.end())
      throw ParseError(context + ": field '" + std::string(field) + "': missing");
    return *it;
  };
  AnnotationRecord rec;
  try {
    rec.qid = need("qid").get<int64_t>();
    rec.vid = need("vid").get<std::string>();
    rec.duration = need("duration").get<double>();
    rec.clip_len = need("clip_len").get<double>();
    for (const auto& w : need("relevant_windows")) {
      if (!w.is_array() || w.size() != 2)
        throw ParseError(context + ": field 'relevant_windows': entries must be [start, end]");
      rec.relevant_windows.push_back({w[0].get<double>(), w[1].get<double>()});
    }
    for (const auto& clip : need("saliency")) {
      std::vector<int> labels;
      for (const auto& l : clip) labels.push_back(l.get<int>());
      rec.saliency.push_back(std::move(labels));
    }
  } catch (const json::exception& e) {
    throw ParseError(context + ": " + e.what());
  }
  rec.validate(context);
  return rec;
}

json record_to_json(const AnnotationRecord& rec) {
  json j;
  j["qid"] = rec.qid;
  j["vid"] = rec.vid;
  j["duration"] = rec.duration;
  j["clip_len"] = rec.clip_len;
  j["relevant_windows"] = rec.relevant_windows;
  j["saliency"] = rec.saliency;
  return j;
}

}  // namespace

std::vector<AnnotationRecord> read_annotations_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotations file " + path.string());
  std::vector<AnnotationRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string context = path.filename().string() + " line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(context + ": " + e.what());
    }
    records.push_back(record_from_json(j, context));
  }
  return records;
}

void write_annotations_jsonl(const std::filesystem::path& path,
                             const std::vector<AnnotationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write annotations file " + path.string());
  for (const auto& rec : records) out << record_to_json(rec).dump() << "\n";
  if (!out) throw IoError("failed writing annotations file " + path.string());
}

namespace {

constexpr char kFeatureMagic[4] = {'M', 'R', 'N', 'F'};
constexpr uint16_t kFeatureVersion = 1;

void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float f) { put_u32(buf, std::bit_cast<uint32_t>(f)); }

uint16_t get_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

std::string read_all_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return std::move(os).str();
}

}  // namespace

FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
  const std::string bytes = read_all_bytes(path);
  const auto* p = reinterpret_cast<const uint8_t*>(bytes.data());
  if (bytes.size() < 14 || std::memcmp(p, kFeatureMagic, 4) != 0)
    throw FormatError(path.string() + ": not an MRNF file (bad magic)");
  if (get_u16(p + 4) != kFeatureVersion)
    throw FormatError(path.string() + ": unsupported MRNF version " +
                      std::to_string(get_u16(p + 4)));
  const uint64_t rows = get_u32(p + 6);
  const uint64_t cols = get_u32(p + 10);
  if (rows == 0 || cols == 0 || rows * cols > (1ull << 30))
    throw FormatError(path.string() + ": implausible dimensions " +
                      std::to_string(rows) + " x " + std::to_string(cols));
  const uint64_t expect = 14 + rows * cols * 4;
  if (bytes.size() != expect)
    throw FormatError(path.string() + ": payload is " + std::to_string(bytes.size()) +
                      " bytes, header declares " + std::to_string(expect));
  FeatureMatrix m;
  m.rows = static_cast<int64_t>(rows);
  m.cols = static_cast<int64_t>(cols);
  m.data.resize(static_cast<size_t>(rows * cols));
  const uint8_t* q = p + 14;
  for (size_t i = 0; i < m.data.size(); ++i, q += 4)
    m.data[i] = std::bit_cast<float>(get_u32(q));
  return m;
}

void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& m) {
  if (m.rows <= 0 || m.cols <= 0 ||
      m.data.size() != static_cast<size_t>(m.rows * m.cols))
    throw UsageError("write_feature_matrix: inconsistent matrix");
  std::string buf;
  buf.reserve(14 + m.data.size() * 4);
  buf.append(kFeatureMagic, 4);
  put_u16(buf, kFeatureVersion);
  put_u32(buf, static_cast<uint32_t>(m.rows));
  put_u32(buf, static_cast<uint32_t>(m.cols));
  for (float f : m.data) put_f32(buf, f);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void build_targets(const AnnotationRecord& rec, std::vector<Span>* norm_spans,
                   std::vector<float>* h_gt) {
  norm_spans->clear();
  h_gt->clear();
  for (const auto& w : rec.relevant_windows) {
    Span s{w[0] / rec.duration, w[1] / rec.duration};
    validate_normalized_span(s, "build_targets(" + rec.vid + ")");
    norm_spans->push_back(s);
  }
  h_gt->reserve(rec.saliency.size());
  for (const auto& labels : rec.saliency) {
    if (labels.empty()) {
      h_gt->push_back(0.0f);
    } else {
      double sum = 0.0;
      for (int l : labels) sum += l;
      h_gt->push_back(static_cast<float>(sum / (4.0 * static_cast<double>(labels.size()))));
    }
  }
}

void SyntheticConfig::validate() const {
  auto bad = [](const std::string& why) { throw ConfigError("synthetic config: " + why); };
  if (n_samples < 1) bad("n_samples must be >= 1");
  if (n_video_min < 1 || n_video_max < n_video_min) bad("empty video-length range");
  if (n_text_min < 1 || n_text_max < n_text_min) bad("empty text-length range");
  if (spans_min < 1 || spans_max < spans_min) bad("empty span-count range");
  if (d_in_visual < 2 || d_in_text < 2) bad("feature widths must be >= 2");
  if (sigma < 0.0) bad("sigma must be >= 0");
  if (clip_len <= 0.0) bad("clip_len must be > 0");
}

std::vector<VideoSample> synthesize_dataset(const SyntheticConfig& cfg) {
  cfg.validate();
  std::vector<VideoSample> samples;
  samples.reserve(static_cast<size_t>(cfg.n_samples));
  for (int s = 0; s < cfg.n_samples; ++s) {
    Rng rng(mix_seed(cfg.seed, static_cast<uint64_t>(s)));
    const int n_v = rng.uniform_int(cfg.n_video_min, cfg.n_video_max);
    const int n_t = rng.uniform_int(cfg.n_text_min, cfg.n_text_max);
    const int want_spans = rng.uniform_int(cfg.spans_min, cfg.spans_max);

    // Disjoint clip-aligned spans with at least one clip of separation.
    std::vector<std::pair<int, int>> spans;  // [first_clip, last_clip)
    for (int attempt = 0; attempt < 200 && static_cast<int>(spans.size()) < want_spans;
         ++attempt) {
      const int len = rng.uniform_int(1, std::max(1, n_v / 4));
      const int start = rng.uniform_int(0, n_v - len);
      bool ok = true;
      for (const auto& sp : spans)
        if (start < sp.second + 1 && sp.first < start + len + 1) ok = false;
      if (ok) spans.push_back({start, start + len});
    }
    std::sort(spans.begin(), spans.end());

    std::vector<char> in_span(static_cast<size_t>(n_v), 0);
    for (const auto& sp : spans)
      for (int c = sp.first; c < sp.second; ++c) in_span[static_cast<size_t>(c)] = 1;

    // Unit query direction shared by visual and text streams.
    const int dq = std::max(cfg.d_in_visual, cfg.d_in_text);
    std::vector<double> q(static_cast<size_t>(dq));
    double norm = 0.0;
    for (auto& v : q) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : q) v /= norm;

    VideoSample sample;
    sample.ann.qid = s;
    sample.ann.vid = "synth_" + std::to_string(s);
    sample.ann.clip_len = cfg.clip_len;
    sample.ann.duration = n_v * cfg.clip_len;
    for (const auto& sp : spans)
      sample.ann.relevant_windows.push_back(
          {sp.first * cfg.clip_len, sp.second * cfg.clip_len});

    const double gains[3] = {1.0, 0.9, 0.8};  // rgb, flow, depth
    FeatureMatrix* streams[3] = {&sample.rgb, &sample.flow, &sample.depth};
    const double bg_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_in_visual));
    for (int st = 0; st < 3; ++st) {
      auto& m = *streams[st];
      m = FeatureMatrix::zeros(n_v, cfg.d_in_visual);
      for (int c = 0; c < n_v; ++c)
        for (int j = 0; j < cfg.d_in_visual; ++j) {
          double v;
          if (in_span[static_cast<size_t>(c)])
            v = gains[st] * q[static_cast<size_t>(j)] + cfg.sigma * rng.normal() * bg_scale;
          else
            v = rng.normal() * bg_scale;
          m.at(c, j) = static_cast<float>(v);
        }
    }

    const double text_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_in_text));
    sample.text = FeatureMatrix::zeros(n_t, cfg.d_in_text);
    for (int t = 0; t < n_t; ++t)
      for (int j = 0; j < cfg.d_in_text; ++j)
        sample.text.at(t, j) = static_cast<float>(
            q[static_cast<size_t>(j)] + cfg.sigma * rng.normal() * text_scale);

    // Per-sample label bases keep saliency a function of the features at
    // sigma = 0 (all in-span rows of a sample are identical there).
    const int base_in = rng.uniform() < 0.75 ? 4 : 3;
    const int base_out = rng.uniform() < 0.75 ? 0 : 1;
    const int annotators = 3;
    sample.ann.saliency.resize(static_cast<size_t>(n_v));
    for (int c = 0; c < n_v; ++c)
      sample.ann.saliency[static_cast<size_t>(c)].assign(
          annotators, in_span[static_cast<size_t>(c)] ? base_in : base_out);

    sample.ann.validate("synthesize_dataset sample " + std::to_string(s));
    build_targets(sample.ann, &sample.norm_spans, &sample.h_gt);
    samples.push_back(std::move(sample));
  }
  return samples;
}

namespace {

const char* kStreamNames[4] = {"rgb", "flow", "depth", "text"};

std::filesystem::path feature_path(const std::filesystem::path& dir,
                                   const std::string& vid, const char* stream) {
  return dir / (vid + "." + stream + ".mrnf");
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const std::vector<VideoSample>& samples) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "features", ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());
  std::vector<AnnotationRecord> records;
  records.reserve(samples.size());
  for (const auto& s : samples) records.push_back(s.ann);
  write_annotations_jsonl(dir / "annotations.jsonl", records);
  for (const auto& s : samples) {
    const FeatureMatrix* streams[4] = {&s.rgb, &s.flow, &s.depth, &s.text};
    for (int i = 0; i < 4; ++i)
      write_feature_matrix(feature_path(dir / "features", s.ann.vid, kStreamNames[i]),
                           *streams[i]);
  }
}

std::vector<VideoSample> load_dataset(const std::filesystem::path& annotations,
                                      const std::filesystem::path& features_dir) {
  std::vector<VideoSample> samples;
  for (auto& rec : read_annotations_jsonl(annotations)) {
    VideoSample s;
    s.ann = std::move(rec);
    FeatureMatrix* streams[4] = {&s.rgb, &s.flow, &s.depth, &s.text};
    for (int i = 0; i < 4; ++i)
      *streams[i] = read_feature_matrix(feature_path(features_dir, s.ann.vid, kStreamNames[i]));
    const int nv = s.ann.n_clips();
    for (int i = 0; i < 3; ++i)
      if (streams[i]->rows != nv)
        throw InputError(s.ann.vid + ": stream '" + kStreamNames[i] + "' has " +
                         std::to_string(streams[i]->rows) + " rows, annotation declares " +
                         std::to_string(nv) + " clips");
    if (s.text.rows < 1) throw InputError(s.ann.vid + ": empty text features");
    if (s.flow.cols != s.rgb.cols || s.depth.cols != s.rgb.cols)
      throw InputError(s.ann.vid + ": visual streams disagree on feature width");
    build_targets(s.ann, &s.norm_spans, &s.h_gt);
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<std::vector<int>> batch_indices(int n, int batch_size, uint64_t seed, int epoch) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (n < 0) throw UsageError("batch_indices: negative count");
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  Rng rng(mix_seed(seed, static_cast<uint64_t>(epoch)));
  for (int i = n - 1; i > 0; --i)
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(rng.uniform_int(0, i))]);
  std::vector<std::vector<int>> batches;
  for (int start = 0; start < n; start += batch_size) {
    const int stop = std::min(n, start + batch_size);
    batches.emplace_back(idx.begin() + start, idx.begin() + stop);
  }
  return batches;
}

}  // namespace mrnet
