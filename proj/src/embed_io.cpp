// SPDX-License-Identifier: Apache-2.0
#include "vg4d/align.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>

#include <nlohmann/json.hpp>

#include "vg4d/binio.hpp"

namespace vg4d {

namespace {
constexpr char kMatrixMagic[] = "VG4DEMB1";
}

void save_embedding_bank(const std::string& index_path, const std::string& matrix_path,
                         const EmbeddingBank& bank) {
  if (static_cast<Eigen::Index>(bank.ids.size()) != bank.rows.rows())
    throw ArgumentError("save_embedding_bank: id/row count mismatch");
  std::ofstream mx(matrix_path, std::ios::binary);
  if (!mx) throw DataError("cannot open " + matrix_path + " for writing");
  binio::put_bytes(mx, kMatrixMagic);
  binio::put_u32(mx, static_cast<std::uint32_t>(bank.rows.rows()));
  binio::put_u32(mx, static_cast<std::uint32_t>(bank.rows.cols()));
  for (Eigen::Index i = 0; i < bank.rows.rows(); ++i)
    for (Eigen::Index j = 0; j < bank.rows.cols(); ++j) binio::put_f32(mx, bank.rows(i, j));
  if (!mx) throw DataError("write failure on " + matrix_path);

  std::ofstream ix(index_path, std::ios::binary);
  if (!ix) throw DataError("cannot open " + index_path + " for writing");
  for (std::size_t i = 0; i < bank.ids.size(); ++i) {
    nlohmann::ordered_json j;
    j["id"] = bank.ids[i];
    j["row"] = i;
    ix << j.dump() << "\n";
  }
  if (!ix) throw DataError("write failure on " + index_path);
}

EmbeddingBank load_embedding_bank(const std::string& index_path, const std::string& matrix_path) {
  std::ifstream mx(matrix_path, std::ios::binary);
  if (!mx) throw DataError("cannot open " + matrix_path);
  binio::expect_magic(mx, kMatrixMagic, matrix_path);
  const std::uint32_t rows = binio::get_u32(mx, matrix_path + " row count");
  const std::uint32_t dim = binio::get_u32(mx, matrix_path + " dim");
  if (rows == 0 || dim == 0) throw FormatError(matrix_path + ": empty embedding matrix");
  EmbeddingBank bank;
  bank.rows.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < dim; ++j)
      bank.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          binio::get_f32(mx, matrix_path + " row " + std::to_string(i));
  mx.peek();
  if (!mx.eof()) throw FormatError(matrix_path + ": trailing bytes after matrix");

  std::ifstream ix(index_path);
  if (!ix) throw DataError("cannot open " + index_path);
  bank.ids.assign(rows, std::string());
  std::vector<bool> seen(rows, false);
  std::string line;
  int lineno = 0;
  std::size_t entries = 0;
  std::unordered_map<std::string, int> id_seen;
  while (std::getline(ix, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(index_path + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    std::string id;
    long long row;
    try {
      id = j.at("id").get<std::string>();
      row = j.at("row").get<long long>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(index_path + ":" + std::to_string(lineno) + ": missing field: " + e.what());
    }
    if (row < 0 || row >= static_cast<long long>(rows))
      throw FormatError(index_path + ":" + std::to_string(lineno) + ": row " + std::to_string(row) +
                        " outside matrix with " + std::to_string(rows) + " rows");
    if (seen[static_cast<std::size_t>(row)])
      throw FormatError(index_path + ":" + std::to_string(lineno) + ": duplicate row " + std::to_string(row));
    if (!id_seen.emplace(id, lineno).second)
      throw FormatError(index_path + ":" + std::to_string(lineno) + ": duplicate sample_id '" + id + "'");
    seen[static_cast<std::size_t>(row)] = true;
    bank.ids[static_cast<std::size_t>(row)] = id;
    ++entries;
  }
  if (entries != rows)
    throw FormatError(index_path + ": " + std::to_string(entries) + " index entries for " +
                      std::to_string(rows) + " matrix rows");

  for (std::uint32_t i = 0; i < rows; ++i) {
    const double norm = bank.rows.row(static_cast<Eigen::Index>(i)).template cast<double>().norm();
    if (std::abs(norm - 1.0) > 1e-3)
      throw FormatError(matrix_path + ": row " + std::to_string(i) + " (id '" + bank.ids[i] +
                        "') has norm " + std::to_string(norm) + ", expected 1");
  }
  return bank;
}

void EmbeddingStore::save(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  save_embedding_bank((d / "text_index.jsonl").string(), (d / "text_matrix.bin").string(), text);
  save_embedding_bank((d / "video_index.jsonl").string(), (d / "video_matrix.bin").string(), video);
}

EmbeddingStore EmbeddingStore::load(const std::string& dir) {
  const std::filesystem::path d(dir);
  EmbeddingStore store;
  store.text = load_embedding_bank((d / "text_index.jsonl").string(), (d / "text_matrix.bin").string());
  store.video = load_embedding_bank((d / "video_index.jsonl").string(), (d / "video_matrix.bin").string());
  if (store.text.rows.cols() != store.video.rows.cols())
    throw FormatError(dir + ": text and video embedding dims differ");
  for (std::size_t i = 0; i < store.video.ids.size(); ++i)
    store.video_lookup.emplace(store.video.ids[i], static_cast<Eigen::Index>(i));
  return store;
}

EmbeddingStore synth_embeddings(int num_classes, int dim,
                                const std::vector<std::pair<std::string, int>>& samples,
                                double sigma_emb, std::uint64_t seed) {
  if (num_classes < 1 || dim < 1) throw ArgumentError("synth_embeddings: counts must be >= 1");
  if (sigma_emb < 0) throw ArgumentError("synth_embeddings: sigma_emb must be >= 0");

  EmbeddingStore store;
  // Text bank: Gaussian rows orthonormalized by Gram-Schmidt when the space
  // is wide enough, plain normalization otherwise.
  MatRow<double> text(num_classes, dim);
  Rng trng(Rng::mix(seed, 0x74657874ULL));
  for (int k = 0; k < num_classes; ++k)
    for (int j = 0; j < dim; ++j) text(k, j) = trng.gaussian();
  for (int k = 0; k < num_classes; ++k) {
    if (dim >= num_classes) {
      for (int p = 0; p < k; ++p) text.row(k) -= text.row(k).dot(text.row(p)) * text.row(p);
    }
    const double norm = text.row(k).norm();
    if (norm < 1e-9) throw DegenerateInputError("synth_embeddings: degenerate text vector draw");
    text.row(k) /= norm;
  }
  store.text.rows = text.cast<float>();
  store.text.ids.reserve(static_cast<std::size_t>(num_classes));
  for (int k = 0; k < num_classes; ++k)
    store.text.ids.push_back(k < kMotionBankSize ? motion_class_name(k) : "class" + std::to_string(k));

  store.video.rows.resize(static_cast<Eigen::Index>(samples.size()), dim);
  Rng vrng(Rng::mix(seed, 0x766964656fULL));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& [id, label] = samples[i];
    if (label < 0 || label >= num_classes)
      throw ArgumentError("synth_embeddings: sample '" + id + "' labels class " + std::to_string(label) +
                          " outside [0," + std::to_string(num_classes) + ")");
    if (sigma_emb == 0.0) {
      // bit-exact copy of the class vector
      store.video.rows.row(static_cast<Eigen::Index>(i)) = store.text.rows.row(label);
    } else {
      Eigen::Matrix<double, 1, Eigen::Dynamic> v = text.row(label);
      for (int j = 0; j < dim; ++j) v(j) += sigma_emb * vrng.gaussian();
      const double norm = v.norm();
      if (norm < 1e-9) throw DegenerateInputError("synth_embeddings: degenerate video vector draw");
      store.video.rows.row(static_cast<Eigen::Index>(i)) = (v / norm).cast<float>();
    }
    store.video.ids.push_back(id);
    if (!store.video_lookup.emplace(id, static_cast<Eigen::Index>(i)).second)
      throw ArgumentError("synth_embeddings: duplicate sample_id '" + id + "'");
  }
  return store;
}

void append_metrics_row(std::ostream& os, const EpochMetrics& m) {
  os << m.epoch << ',' << std::setprecision(10) << m.lr << ',' << m.loss_total << ',' << m.loss_pc_video
     << ',' << m.loss_pc_text << ',' << m.loss_pc_ce << ',' << m.loss_rgb_ce << ',' << m.train_acc << "\n";
}

}  // namespace vg4d
