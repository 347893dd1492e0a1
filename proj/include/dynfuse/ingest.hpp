// Copyright 2026 The dynfuse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Loading and saving of descriptor and similarity matrices.
//
// On-disk matrix layout: a headerless payload of little-endian IEEE-754
// float32 values in row-major order (conventionally `<name>.f32`) next to a
// JSON sidecar `<name>.meta.json`:
//
//   {"rows": 200, "cols": 100, "role": "similarity", "technique": "A"}
//
// role is one of "query", "database" or "similarity". Ground truth is a JSON
// array whose entry q lists the acceptable database indices for query q.

#ifndef DYNFUSE_INGEST_HPP
#define DYNFUSE_INGEST_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dynfuse/core.hpp"
#include "dynfuse/error.hpp"
#include "dynfuse/log.hpp"
#include "dynfuse/parallel.hpp"

namespace dynfuse {

enum class MatrixRole { kQuery, kDatabase, kSimilarity };

inline std::string_view to_string(MatrixRole role) noexcept {
  switch (role) {
    case MatrixRole::kQuery: return "query";
    case MatrixRole::kDatabase: return "database";
    case MatrixRole::kSimilarity: return "similarity";
  }
  return "similarity";
}

inline std::optional<MatrixRole> parse_role(std::string_view s) {
  if (s == "query") return MatrixRole::kQuery;
  if (s == "database") return MatrixRole::kDatabase;
  if (s == "similarity") return MatrixRole::kSimilarity;
  return std::nullopt;
}

struct MatrixMeta {
  std::size_t rows = 0;
  std::size_t cols = 0;
  MatrixRole role = MatrixRole::kSimilarity;
  std::string technique;
};

/// Row-major float32 matrix. Descriptor matrices use the query or database
/// role, similarity matrices are queries x database entries.
struct Matrix {
  MatrixMeta meta;
  std::vector<float> data;

  std::size_t rows() const noexcept { return meta.rows; }
  std::size_t cols() const noexcept { return meta.cols; }
  std::span<const float> row(std::size_t r) const {
    return {data.data() + r * meta.cols, meta.cols};
  }
  float at(std::size_t r, std::size_t c) const { return data.at(r * meta.cols + c); }
};

using DescriptorMatrix = Matrix;

enum class Metric { kCosine, kNegativeEuclidean };

inline std::optional<Metric> parse_metric(std::string_view s) {
  if (s == "cosine") return Metric::kCosine;
  if (s == "negative-euclidean") return Metric::kNegativeEuclidean;
  return std::nullopt;
}

/// `dir/name.f32` -> `dir/name.meta.json`.
inline std::filesystem::path sidecar_path(const std::filesystem::path& payload) {
  auto p = payload;
  p.replace_extension(".meta.json");
  return p;
}

namespace detail {

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0x000000FFu) << 24) | ((v & 0x0000FF00u) << 8) |
        ((v & 0x00FF0000u) >> 8) | ((v & 0xFF000000u) >> 24);
  }
  return v;
}

inline void require_finite(std::span<const float> values, const std::string& where) {
  for (float v : values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFiniteValue, "non-finite value in " + where, where);
    }
  }
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string(), path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptHeader,
                "invalid JSON in " + path.string() + ": " + e.what(), path.string());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string(), path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string(), path.string());
}

}  // namespace detail

inline MatrixMeta parse_meta(const nlohmann::json& j, const std::string& where) {
  auto bad = [&](const std::string& what) {
    return Error(ErrorCode::kCorruptHeader, where + ": " + what, where);
  };
  if (!j.is_object()) throw bad("sidecar must be a JSON object");
  for (const char* key : {"rows", "cols", "role", "technique"}) {
    if (!j.contains(key)) throw bad(std::string("missing field '") + key + "'");
  }
  if (!j["rows"].is_number_unsigned() || !j["cols"].is_number_unsigned()) {
    throw bad("rows and cols must be non-negative integers");
  }
  if (!j["role"].is_string() || !j["technique"].is_string()) {
    throw bad("role and technique must be strings");
  }
  MatrixMeta meta;
  meta.rows = j["rows"].get<std::size_t>();
  meta.cols = j["cols"].get<std::size_t>();
  const auto role = parse_role(j["role"].get<std::string>());
  if (!role) throw bad("unknown role '" + j["role"].get<std::string>() + "'");
  meta.role = *role;
  meta.technique = j["technique"].get<std::string>();
  return meta;
}

inline nlohmann::json meta_to_json(const MatrixMeta& meta) {
  return {{"rows", meta.rows},
          {"cols", meta.cols},
          {"role", std::string(to_string(meta.role))},
          {"technique", meta.technique}};
}

/// Writes the payload and its sidecar.
inline void write_matrix(const std::filesystem::path& payload, const Matrix& m) {
  if (m.data.size() != m.meta.rows * m.meta.cols) {
    throw Error(ErrorCode::kShapeMismatch, "matrix data does not match its shape");
  }
  std::string bytes(m.data.size() * sizeof(float), '\0');
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    const std::uint32_t le = detail::to_little_endian(std::bit_cast<std::uint32_t>(m.data[i]));
    std::memcpy(bytes.data() + i * sizeof(float), &le, sizeof le);
  }
  detail::write_text_file(payload, bytes);
  detail::write_text_file(sidecar_path(payload), meta_to_json(m.meta).dump(2) + "\n");
}

/// Reads a payload/sidecar pair. When `expected` is given, its rows, cols
/// and role must agree with the sidecar.
inline Matrix load_matrix(const std::filesystem::path& payload,
                          const std::optional<MatrixMeta>& expected = std::nullopt) {
  const auto meta_path = sidecar_path(payload);
  Matrix m;
  m.meta = parse_meta(detail::read_json_file(meta_path), meta_path.string());
  if (expected && (expected->rows != m.meta.rows || expected->cols != m.meta.cols ||
                   expected->role != m.meta.role)) {
    throw Error(ErrorCode::kShapeMismatch,
                "sidecar of " + payload.string() + " disagrees with the expected shape",
                payload.string());
  }
  std::ifstream in(payload, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + payload.string(), payload.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t expected_bytes = m.meta.rows * m.meta.cols * sizeof(float);
  if (bytes.size() != expected_bytes) {
    throw Error(ErrorCode::kShapeMismatch,
                payload.string() + " holds " + std::to_string(bytes.size()) +
                    " bytes, sidecar implies " + std::to_string(expected_bytes),
                payload.string());
  }
  m.data.resize(m.meta.rows * m.meta.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    std::uint32_t le;
    std::memcpy(&le, bytes.data() + i * sizeof(float), sizeof le);
    m.data[i] = std::bit_cast<float>(detail::to_little_endian(le));
  }
  detail::require_finite(m.data, payload.string());
  return m;
}

/// CSV with a header row and one data row per image.
inline Matrix load_csv(const std::filesystem::path& path, MatrixRole role,
                       std::string technique) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string(), path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::kCorruptHeader, path.string() + " has no header row", path.string());
  }
  Matrix m;
  m.meta.role = role;
  m.meta.technique = std::move(technique);
  m.meta.cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(ss, cell, ',')) {
      float value = 0.0f;
      try {
        std::size_t used = 0;
        value = std::stof(cell, &used);
        if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw Error(ErrorCode::kCorruptHeader,
                    path.string() + ":" + std::to_string(line_no) + ": bad number '" + cell + "'",
                    path.string());
      }
      m.data.push_back(value);
      ++cols;
    }
    if (cols != m.meta.cols) {
      throw Error(ErrorCode::kShapeMismatch,
                  path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(m.meta.cols) + " columns",
                  path.string());
    }
    ++m.meta.rows;
  }
  detail::require_finite(m.data, path.string());
  return m;
}

/// Query x database similarity. Larger is more similar for both metrics;
/// euclidean distances are negated. Under cosine a zero-norm row scores 0
/// against everything.
inline Matrix compute_similarity(const DescriptorMatrix& q, const DescriptorMatrix& db,
                                 Metric metric, std::size_t workers = 1) {
  if (q.cols() != db.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "query and database descriptors differ in dimensionality");
  }
  Matrix out;
  out.meta = {q.rows(), db.rows(), MatrixRole::kSimilarity,
              q.meta.technique.empty() ? db.meta.technique : q.meta.technique};
  out.data.assign(q.rows() * db.rows(), 0.0f);

  auto norms = [](const Matrix& m) {
    std::vector<double> n(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
      double s = 0.0;
      for (float x : m.row(r)) s += static_cast<double>(x) * x;
      n[r] = std::sqrt(s);
    }
    return n;
  };
  std::vector<double> q_norm, db_norm;
  if (metric == Metric::kCosine) {
    q_norm = norms(q);
    db_norm = norms(db);
    std::size_t zero_rows = static_cast<std::size_t>(std::count(q_norm.begin(), q_norm.end(), 0.0)) +
                            static_cast<std::size_t>(std::count(db_norm.begin(), db_norm.end(), 0.0));
    if (zero_rows > 0) {
      log().warn("{} zero-norm descriptor row(s) in technique '{}'; their cosine scores are 0",
                 zero_rows, out.meta.technique);
    }
  }

  parallel_for(q.rows(), workers, [&](std::size_t i) {
    const auto qi = q.row(i);
    for (std::size_t j = 0; j < db.rows(); ++j) {
      const auto dj = db.row(j);
      double value = 0.0;
      if (metric == Metric::kCosine) {
        if (q_norm[i] > 0.0 && db_norm[j] > 0.0) {
          double dot = 0.0;
          for (std::size_t k = 0; k < qi.size(); ++k) dot += static_cast<double>(qi[k]) * dj[k];
          value = dot / (q_norm[i] * db_norm[j]);
        }
      } else {
        double ss = 0.0;
        for (std::size_t k = 0; k < qi.size(); ++k) {
          const double d = static_cast<double>(qi[k]) - dj[k];
          ss += d * d;
        }
        value = -std::sqrt(ss);
      }
      out.data[i * db.rows() + j] = static_cast<float>(value);
    }
  });
  return out;
}

/// Stacks per-technique query x database similarity matrices.
inline SimilarityTensor assemble_tensor(std::span<const Matrix> per_technique,
                                        std::span<const std::string> names) {
  if (per_technique.empty()) {
    throw Error(ErrorCode::kEmptyEnsemble, "no techniques to assemble");
  }
  if (names.size() != per_technique.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one name is required per technique");
  }
  const std::size_t queries = per_technique.front().rows();
  const std::size_t dbsize = per_technique.front().cols();
  std::vector<double> data;
  data.reserve(per_technique.size() * queries * dbsize);
  for (std::size_t n = 0; n < per_technique.size(); ++n) {
    const Matrix& m = per_technique[n];
    if (m.rows() != queries || m.cols() != dbsize) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "technique '" + names[n] + "' is " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + ", expected " + std::to_string(queries) +
                      "x" + std::to_string(dbsize),
                  names[n]);
    }
    if (m.data.size() != queries * dbsize) {
      throw Error(ErrorCode::kShapeMismatch, "matrix data does not match its shape", names[n]);
    }
    data.insert(data.end(), m.data.begin(), m.data.end());
  }
  return SimilarityTensor(std::vector<std::string>(names.begin(), names.end()), queries,
                          dbsize, std::move(data));
}

inline GroundTruth ground_truth_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) {
    throw Error(ErrorCode::kCorruptHeader, where + ": ground truth must be a JSON array", where);
  }
  GroundTruth gt;
  gt.acceptable.reserve(j.size());
  for (const auto& entry : j) {
    if (!entry.is_array()) {
      throw Error(ErrorCode::kCorruptHeader, where + ": each entry must be an array", where);
    }
    std::vector<std::size_t> set;
    for (const auto& idx : entry) {
      if (!idx.is_number_unsigned()) {
        throw Error(ErrorCode::kCorruptHeader,
                    where + ": indices must be non-negative integers", where);
      }
      set.push_back(idx.get<std::size_t>());
    }
    gt.acceptable.push_back(std::move(set));
  }
  return gt;
}

inline GroundTruth load_ground_truth(const std::filesystem::path& path) {
  return ground_truth_from_json(detail::read_json_file(path), path.string());
}

inline void write_ground_truth(const std::filesystem::path& path, const GroundTruth& gt) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& set : gt.acceptable) j.push_back(set);
  detail::write_text_file(path, j.dump() + "\n");
}

/// Similarity matrix for one technique of a tensor, rounded to float32.
inline Matrix tensor_technique_matrix(const SimilarityTensor& t, std::size_t n) {
  Matrix m;
  m.meta = {t.queries(), t.database_size(), MatrixRole::kSimilarity, t.name(n)};
  m.data.reserve(t.queries() * t.database_size());
  for (std::size_t q = 0; q < t.queries(); ++q) {
    for (double x : t.slice(n, q)) m.data.push_back(static_cast<float>(x));
  }
  return m;
}

}  // namespace dynfuse

#endif  // DYNFUSE_INGEST_HPP
