#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "metachex/csv.hpp"
#include "metachex/rng.hpp"

namespace metachex {

// Fixed label order; every pathology vector, prediction column and regression
// coefficient is positional against this list.
inline constexpr std::array<const char*, 14> kPathologyNames = {
    "Atelectasis",  "Cardiomegaly", "Effusion",      "Infiltration",
    "Mass",         "Nodule",       "Pneumonia",     "Pneumothorax",
    "Consolidation", "Edema",       "Emphysema",     "Fibrosis",
    "Pleural_Thickening", "Hernia"};

inline constexpr std::size_t kNumPathologies = 14;

enum class Gender { Female, Male };
enum class ViewPosition { AP, PA };
enum class DatasetTag { chestxray14, shenzhen, montgomery };
enum class SplitName { train, validation, test, external_test };

inline const char* to_string(Gender g) { return g == Gender::Female ? "F" : "M"; }
inline const char* to_string(ViewPosition p) { return p == ViewPosition::AP ? "AP" : "PA"; }

inline const char* to_string(SplitName s) {
  switch (s) {
    case SplitName::train: return "train";
    case SplitName::validation: return "validation";
    case SplitName::test: return "test";
    case SplitName::external_test: return "external_test";
  }
  return "?";
}

inline SplitName split_name_from_string(const std::string& s) {
  if (s == "train") return SplitName::train;
  if (s == "validation") return SplitName::validation;
  if (s == "test") return SplitName::test;
  if (s == "external_test") return SplitName::external_test;
  fail(cat("unknown split name: ", s));
}

inline const char* to_string(DatasetTag t) {
  switch (t) {
    case DatasetTag::chestxray14: return "chestxray14";
    case DatasetTag::shenzhen: return "shenzhen";
    case DatasetTag::montgomery: return "montgomery";
  }
  return "?";
}

constexpr double kAgeSuspectThreshold = 110.0;

struct SampleRecord {
  std::string image_id;
  std::string patient_id;
  std::array<int, kNumPathologies> pathology{};  // 0/1
  Gender gender = Gender::Female;
  ViewPosition position = ViewPosition::AP;
  double age_years = 0.0;
  bool age_suspect = false;  // age_years > 110, e.g. the 155Y mislabel
  DatasetTag dataset_tag = DatasetTag::chestxray14;
};

struct TbSampleRecord {
  std::string image_id;
  int label = 0;  // 1 = TB positive
  DatasetTag dataset_tag = DatasetTag::shenzhen;
};

struct SplitManifest {
  SplitName split_name = SplitName::train;
  std::vector<std::string> entries;  // image ids
  std::set<std::string> patient_ids;
  std::uint64_t seed = 0;
};

// Column names of the public ChestXray14 metadata distribution; remappable
// for other sources.
struct MetadataSchema {
  std::string image_col = "Image Index";
  std::string findings_col = "Finding Labels";
  std::string patient_col = "Patient ID";
  std::string age_col = "Patient Age";
  std::string gender_col = "Patient Gender";
  std::string position_col = "View Position";
};

namespace detail {

// tolerant match: case, '-', '_' and ' ' are not significant
inline std::string normalize_label(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '-' || c == '_' || c == ' ') continue;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

inline int pathology_index(const std::string& name) {
  static const std::map<std::string, int> index = [] {
    std::map<std::string, int> m;
    for (std::size_t i = 0; i < kPathologyNames.size(); ++i)
      m[normalize_label(kPathologyNames[i])] = static_cast<int>(i);
    return m;
  }();
  auto it = index.find(normalize_label(name));
  return it == index.end() ? -1 : it->second;
}

// accepts "58", "058Y", "155y"; rejects anything else
inline double parse_age(const std::string& raw, std::size_t row_number) {
  std::string s = trim(raw);
  if (!s.empty() && (s.back() == 'Y' || s.back() == 'y')) s.pop_back();
  if (s.empty()) fail(cat("row ", row_number, ": unparsable age '", raw, "'"));
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v))
    fail(cat("row ", row_number, ": unparsable age '", raw, "'"));
  if (v < 0) fail(cat("row ", row_number, ": negative age ", format_double(v)));
  return v;
}

}  // namespace detail

inline std::vector<SampleRecord> parse_chestxray14_metadata(
    const CsvTable& table, const MetadataSchema& schema = {}) {
  struct Col {
    const std::string* name;
    int idx;
  };
  const std::array<Col, 6> cols = {{{&schema.image_col, table.column_index(schema.image_col)},
                                    {&schema.findings_col, table.column_index(schema.findings_col)},
                                    {&schema.patient_col, table.column_index(schema.patient_col)},
                                    {&schema.age_col, table.column_index(schema.age_col)},
                                    {&schema.gender_col, table.column_index(schema.gender_col)},
                                    {&schema.position_col, table.column_index(schema.position_col)}}};
  for (const Col& c : cols)
    if (c.idx < 0) fail(cat("metadata schema error: missing column '", *c.name, "'"));

  std::vector<SampleRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t row_number = r + 2;  // 1-based, after the header line
    auto field = [&](int idx) -> std::string {
      if (idx >= static_cast<int>(row.size()))
        fail(cat("row ", row_number, ": too few fields"));
      return trim(row[idx]);
    };

    SampleRecord rec;
    rec.image_id = field(cols[0].idx);
    rec.patient_id = field(cols[2].idx);
    rec.dataset_tag = DatasetTag::chestxray14;

    const std::string findings = field(cols[1].idx);
    if (detail::normalize_label(findings) != "nofinding") {
      for (const std::string& part : split(findings, '|')) {
        const std::string name = trim(part);
        if (name.empty()) continue;
        const int idx = detail::pathology_index(name);
        if (idx < 0) fail(cat("row ", row_number, ": unknown pathology '", name, "'"));
        rec.pathology[idx] = 1;
      }
    }

    const std::string gender = lower(field(cols[4].idx));
    if (gender == "f" || gender == "female") rec.gender = Gender::Female;
    else if (gender == "m" || gender == "male") rec.gender = Gender::Male;
    else fail(cat("row ", row_number, ": unknown gender '", field(cols[4].idx), "'"));

    const std::string pos = lower(field(cols[5].idx));
    if (pos == "ap") rec.position = ViewPosition::AP;
    else if (pos == "pa") rec.position = ViewPosition::PA;
    else fail(cat("row ", row_number, ": unknown view position '", field(cols[5].idx), "'"));

    rec.age_years = detail::parse_age(field(cols[3].idx), row_number);
    rec.age_suspect = rec.age_years > kAgeSuspectThreshold;
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::vector<SampleRecord> parse_chestxray14_metadata(
    const std::string& path, const MetadataSchema& schema = {}) {
  return parse_chestxray14_metadata(read_csv(path), schema);
}

// Patients are shuffled under the seed and assigned greedily: a split keeps
// receiving whole patients until its image-count target is met, so patient
// disjointness always wins over exact fractions. The last split takes the
// remainder.
inline std::array<SplitManifest, 3> partition_by_patient(
    const std::vector<SampleRecord>& records, const std::array<double, 3>& fractions,
    std::uint64_t seed) {
  double frac_sum = 0.0;
  for (double f : fractions) {
    require(f > 0, "partition_by_patient: fractions must be positive");
    frac_sum += f;
  }
  require(std::abs(frac_sum - 1.0) < 1e-9, "partition_by_patient: fractions must sum to 1");

  std::map<std::string, std::vector<const SampleRecord*>> by_patient;
  for (const auto& r : records) by_patient[r.patient_id].push_back(&r);
  if (by_patient.size() < 3)
    fail(cat("partition_by_patient: need at least 3 distinct patients, got ", by_patient.size()));

  std::vector<std::string> patients;
  patients.reserve(by_patient.size());
  for (const auto& [pid, _] : by_patient) patients.push_back(pid);
  Rng rng = substream(seed, "split");
  rng.shuffle(patients);

  const double total = static_cast<double>(records.size());
  const std::array<SplitName, 3> names = {SplitName::train, SplitName::validation, SplitName::test};
  std::array<SplitManifest, 3> manifests;
  for (int s = 0; s < 3; ++s) {
    manifests[s].split_name = names[s];
    manifests[s].seed = seed;
  }

  std::size_t p = 0;
  for (int s = 0; s < 3; ++s) {
    const double target = fractions[s] * total;
    std::size_t count = 0;
    while (p < patients.size() &&
           (count < target || s == 2)) {  // last split absorbs the remainder
      const auto& imgs = by_patient[patients[p]];
      manifests[s].patient_ids.insert(patients[p]);
      for (const SampleRecord* rec : imgs) manifests[s].entries.push_back(rec->image_id);
      count += imgs.size();
      ++p;
      if (s < 2 && count >= target) break;
    }
  }
  // guarantee non-empty tail splits even under extreme fractions
  for (int s = 2; s > 0; --s) {
    if (manifests[s].patient_ids.empty()) {
      for (int donor = s - 1; donor >= 0; --donor) {
        if (manifests[donor].patient_ids.size() > 1) {
          const std::string pid = *manifests[donor].patient_ids.rbegin();
          manifests[donor].patient_ids.erase(pid);
          auto& donor_entries = manifests[donor].entries;
          for (const SampleRecord* rec : by_patient[pid]) {
            donor_entries.erase(std::find(donor_entries.begin(), donor_entries.end(), rec->image_id));
            manifests[s].entries.push_back(rec->image_id);
          }
          manifests[s].patient_ids.insert(pid);
          break;
        }
      }
    }
  }
  for (auto& m : manifests) std::sort(m.entries.begin(), m.entries.end());
  return manifests;
}

// File-name suffix convention of the public TB distributions.
struct TbLabelingSpec {
  std::string negative_suffix = "_0";
  std::string positive_suffix = "_1";
  std::string extension = ".png";
};

struct TbClassCounts {
  std::size_t negatives = 0;
  std::size_t positives = 0;
};

inline TbClassCounts count_tb_classes(const std::vector<TbSampleRecord>& records) {
  TbClassCounts c;
  for (const auto& r : records) (r.label ? c.positives : c.negatives)++;
  return c;
}

inline std::vector<TbSampleRecord> load_tb_dataset(const std::string& image_dir,
                                                   DatasetTag tag,
                                                   const TbLabelingSpec& labeling = {}) {
  namespace fs = std::filesystem;
  require(tag == DatasetTag::shenzhen || tag == DatasetTag::montgomery,
          "load_tb_dataset: tag must be shenzhen or montgomery");
  if (!fs::is_directory(image_dir)) fail(cat("not a directory: ", image_dir));

  auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };

  std::vector<TbSampleRecord> records;
  for (const auto& entry : fs::directory_iterator(image_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (lower(entry.path().extension().string()) != lower(labeling.extension)) continue;
    const std::string stem = entry.path().stem().string();
    TbSampleRecord rec;
    rec.image_id = stem;
    rec.dataset_tag = tag;
    if (ends_with(stem, labeling.negative_suffix)) rec.label = 0;
    else if (ends_with(stem, labeling.positive_suffix)) rec.label = 1;
    else fail(cat("file does not follow the labeling convention (expected '",
                  labeling.negative_suffix, "' or '", labeling.positive_suffix,
                  "' suffix): ", name));
    records.push_back(std::move(rec));
  }
  std::sort(records.begin(), records.end(),
            [](const TbSampleRecord& a, const TbSampleRecord& b) { return a.image_id < b.image_id; });
  return records;
}

struct TbSplitCounts {
  TbClassCounts train;
  TbClassCounts validation;
  TbClassCounts test;
};

// Stratified draw from the trainable pool; montgomery records always land in
// external_test regardless of the requested counts.
inline std::array<SplitManifest, 4> fixed_tb_split(const std::vector<TbSampleRecord>& records,
                                                   const TbSplitCounts& counts,
                                                   std::uint64_t seed) {
  std::vector<std::string> pool_neg, pool_pos, external;
  for (const auto& r : records) {
    if (r.dataset_tag == DatasetTag::montgomery) external.push_back(r.image_id);
    else (r.label ? pool_pos : pool_neg).push_back(r.image_id);
  }
  std::sort(pool_neg.begin(), pool_neg.end());
  std::sort(pool_pos.begin(), pool_pos.end());
  std::sort(external.begin(), external.end());

  const std::size_t want_neg = counts.train.negatives + counts.validation.negatives + counts.test.negatives;
  const std::size_t want_pos = counts.train.positives + counts.validation.positives + counts.test.positives;
  if (want_neg > pool_neg.size())
    fail(cat("fixed_tb_split: requested ", want_neg, " negatives, only ", pool_neg.size(),
             " available (short by ", want_neg - pool_neg.size(), ")"));
  if (want_pos > pool_pos.size())
    fail(cat("fixed_tb_split: requested ", want_pos, " positives, only ", pool_pos.size(),
             " available (short by ", want_pos - pool_pos.size(), ")"));

  Rng rng_neg = substream(seed, "tb_split_neg");
  Rng rng_pos = substream(seed, "tb_split_pos");
  rng_neg.shuffle(pool_neg);
  rng_pos.shuffle(pool_pos);

  std::array<SplitManifest, 4> manifests;
  const std::array<SplitName, 4> names = {SplitName::train, SplitName::validation,
                                          SplitName::test, SplitName::external_test};
  for (int s = 0; s < 4; ++s) {
    manifests[s].split_name = names[s];
    manifests[s].seed = seed;
  }

  std::size_t ni = 0, pi = 0;
  const std::array<TbClassCounts, 3> per_split = {counts.train, counts.validation, counts.test};
  for (int s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < per_split[s].negatives; ++k)
      manifests[s].entries.push_back(pool_neg[ni++]);
    for (std::size_t k = 0; k < per_split[s].positives; ++k)
      manifests[s].entries.push_back(pool_pos[pi++]);
    std::sort(manifests[s].entries.begin(), manifests[s].entries.end());
  }
  manifests[3].entries = external;
  return manifests;
}

}  // namespace metachex
