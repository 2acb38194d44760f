#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "metachex/data_ingest.hpp"
#include "metachex/image.hpp"
#include "metachex/image_io.hpp"
#include "metachex/rng.hpp"

namespace metachex {

// Synthetic radiograph-shaped test data: noise background plus geometric
// patterns keyed to the labels, so small models can actually learn the
// mapping and evaluation metrics have signal to find.
//   - gender:   top-left square, bright for male, dark for female
//   - position: top-right square, bright for PA, dark for AP
//   - age:      bright horizontal bar whose height encodes age
//   - pathology k: bright cell k in a 4x4 grid across the middle
//   - TB:       bright centered disc when positive

namespace detail {

inline Image synthetic_background(std::uint64_t seed, const std::string& key, int size) {
  Image img(size, size, 1);
  Rng rng = substream(seed, "synth_bg", fnv1a64(key));
  for (auto& v : img.pix) v = rng.uniform(90.0, 160.0);
  return img;
}

inline void fill_rect(Image& img, int x0, int y0, int w, int h, double value) {
  for (int y = std::max(0, y0); y < std::min(img.height, y0 + h); ++y)
    for (int x = std::max(0, x0); x < std::min(img.width, x0 + w); ++x)
      img.at(0, y, x) = value;
}

inline void fill_disc(Image& img, double cx, double cy, double radius, double value) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius)
        img.at(0, y, x) = value;
}

}  // namespace detail

inline Image synthetic_chest_image(const SampleRecord& rec, std::uint64_t seed, int size = 64) {
  Image img = detail::synthetic_background(seed, rec.image_id, size);
  const int patch = size / 5;
  detail::fill_rect(img, 2, 2, patch, patch, rec.gender == Gender::Male ? 235.0 : 25.0);
  detail::fill_rect(img, size - patch - 2, 2, patch, patch,
                    rec.position == ViewPosition::PA ? 235.0 : 25.0);

  const double age_frac = std::clamp(rec.age_years, 0.0, 120.0) / 120.0;
  const int bar_y = patch + 4 +
                    static_cast<int>(std::lround(age_frac * (size - 2 * patch - 12)));
  detail::fill_rect(img, 2, bar_y, size - 4, 3, 220.0);

  const int grid_origin = size / 4, cell = size / 8;
  for (std::size_t k = 0; k < kNumPathologies; ++k) {
    if (!rec.pathology[k]) continue;
    const int r = static_cast<int>(k) / 4, c = static_cast<int>(k) % 4;
    detail::fill_rect(img, grid_origin + c * cell + 1, grid_origin + r * cell + 1, cell - 2,
                      cell - 2, 250.0);
  }
  return img;
}

inline Image synthetic_tb_image(const TbSampleRecord& rec, std::uint64_t seed, int size = 64) {
  Image img = detail::synthetic_background(seed, rec.image_id, size);
  if (rec.label)
    detail::fill_disc(img, size / 2.0, size / 2.0, size / 6.0, 245.0);
  return img;
}

struct SyntheticCorpusSpec {
  int image_size = 64;
  int n_patients = 20;
  int max_images_per_patient = 3;
  bool plant_age_anomaly = false;  // one record gets an impossible 155y label
};

// Random per-patient metadata with the usual marginals: ~30% prevalence per
// pathology, ages 20..80, mixed genders and views.
inline std::vector<SampleRecord> make_synthetic_records(const SyntheticCorpusSpec& spec,
                                                        std::uint64_t seed) {
  require(spec.n_patients >= 1, "synthetic corpus: need at least one patient");
  Rng rng = substream(seed, "synth_meta");
  std::vector<SampleRecord> records;
  for (int p = 1; p <= spec.n_patients; ++p) {
    const Gender gender = rng.bernoulli(0.5) ? Gender::Male : Gender::Female;
    const double age = std::floor(rng.uniform(20.0, 81.0));
    const std::uint64_t n_images =
        1 + rng.below(static_cast<std::uint64_t>(spec.max_images_per_patient));
    for (std::uint64_t i = 1; i <= n_images; ++i) {
      SampleRecord rec;
      char id[32];
      std::snprintf(id, sizeof(id), "%08d_%03d.png", p, static_cast<int>(i));
      rec.image_id = id;
      char pid[16];
      std::snprintf(pid, sizeof(pid), "%d", p);
      rec.patient_id = pid;
      rec.gender = gender;
      rec.age_years = age;
      rec.position = rng.bernoulli(0.5) ? ViewPosition::PA : ViewPosition::AP;
      for (std::size_t k = 0; k < kNumPathologies; ++k)
        rec.pathology[k] = rng.bernoulli(0.3) ? 1 : 0;
      records.push_back(std::move(rec));
    }
  }
  if (spec.plant_age_anomaly && !records.empty()) {
    records.front().age_years = 155.0;
    records.front().age_suspect = true;
  }
  return records;
}

// Writes the images plus a metadata table in the standard column layout.
inline void write_synthetic_chestxray(const std::string& dir,
                                      const std::vector<SampleRecord>& records,
                                      std::uint64_t seed, int image_size = 64) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::string csv = "Image Index,Finding Labels,Patient ID,Patient Age,Patient Gender,View Position\n";
  for (const auto& rec : records) {
    write_png_gray((fs::path(dir) / rec.image_id).string(),
                   synthetic_chest_image(rec, seed, image_size));
    std::string findings;
    for (std::size_t k = 0; k < kNumPathologies; ++k) {
      if (!rec.pathology[k]) continue;
      if (!findings.empty()) findings += "|";
      findings += kPathologyNames[k];
    }
    if (findings.empty()) findings = "No Finding";
    csv += cat(rec.image_id, ",", findings, ",", rec.patient_id, ",",
               static_cast<long>(rec.age_years), ",", to_string(rec.gender), ",",
               to_string(rec.position), "\n");
  }
  write_text_file((fs::path(dir) / "metadata.csv").string(), csv);
}

// Suffix-labeled TB images in the public datasets' naming style.
inline std::vector<TbSampleRecord> write_synthetic_tb(const std::string& dir,
                                                      const std::string& prefix, DatasetTag tag,
                                                      std::size_t n_negative,
                                                      std::size_t n_positive, std::uint64_t seed,
                                                      int image_size = 64) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<TbSampleRecord> records;
  std::size_t serial = 1;
  for (std::size_t i = 0; i < n_negative + n_positive; ++i, ++serial) {
    TbSampleRecord rec;
    char id[48];
    std::snprintf(id, sizeof(id), "%s_%04d_%d", prefix.c_str(), static_cast<int>(serial),
                  i < n_negative ? 0 : 1);
    rec.image_id = id;
    rec.label = i < n_negative ? 0 : 1;
    rec.dataset_tag = tag;
    write_png_gray((fs::path(dir) / (rec.image_id + ".png")).string(),
                   synthetic_tb_image(rec, seed, image_size));
    records.push_back(std::move(rec));
  }
  std::sort(records.begin(), records.end(),
            [](const TbSampleRecord& a, const TbSampleRecord& b) { return a.image_id < b.image_id; });
  return records;
}

}  // namespace metachex
