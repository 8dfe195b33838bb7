#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "locadv/attack.hpp"
#include "locadv/dataset.hpp"
#include "locadv/io.hpp"
#include "locadv/mask.hpp"
#include "locadv/model.hpp"
#include "locadv/netpbm.hpp"
#include "locadv/norms.hpp"
#include "locadv/parallel.hpp"

namespace locadv {

/// One (source model, target model, mask, image) evaluation row.
struct TransferRecord {
  int image_id = 0;  // test-set index
  int label = 0;
  std::string source;
  std::string target;
  MaskFamily family = MaskFamily::Full;
  double level = 1.0;  // nominal fraction level; 1.0 for the full mask
  double realized_fraction = 1.0;
  int target_class = 0;
  bool source_success = false;
  bool transfer_success = false;
  int iterations = 0;
  double l0 = 0.0, l2 = 0.0, linf = 0.0;
};

struct NamedModel {
  std::string name;
  const Model<float>* model = nullptr;
};

/// Evaluation images drawn from the clean-correct pool.
struct EvalPool {
  std::vector<int> ids;
  std::vector<const Tensor<float>*> images;
  std::vector<int> labels;

  static EvalPool from_dataset(const LabelledDataset& data,
                               const std::vector<int>& indices) {
    EvalPool pool;
    for (int idx : indices) {
      pool.ids.push_back(idx);
      pool.images.push_back(&data.images[static_cast<std::size_t>(idx)]);
      pool.labels.push_back(data.labels[static_cast<std::size_t>(idx)]);
    }
    return pool;
  }
};

struct ProtocolConfig {
  std::uint64_t seed = 1;
  int n_per_pair = 200;  // baseline transferring examples wanted per pair
  int wave = 16;         // images attacked between stop-condition checks
  double alpha = 0.004;
  int max_iterations = 250;
  bool stop_on_success = true;
  bool targeted_transfer = false;
  int threads = 1;
};

struct ProtocolMaskConfig {
  MaskFamily family = MaskFamily::Center;
  double level = 0.0;
  LocalizationMask mask;
};

inline constexpr std::array<double, 3> kProtocolLevels = {0.17, 0.28, 0.45};

// Center squares replicate the reference 90/120/150-px sides on a 224 grid,
// expressed as area fractions so the same configuration rescales to any N.
inline constexpr std::array<double, 3> kCenterFractions = {
    8100.0 / 50176.0, 14400.0 / 50176.0, 22500.0 / 50176.0};

/// The nine region configurations evaluated by the protocol: three families
/// at three pixel-fraction levels. One fixed mask per configuration.
inline std::vector<ProtocolMaskConfig> protocol_masks(int grid,
                                                      std::uint64_t seed) {
  std::vector<ProtocolMaskConfig> out;
  for (std::size_t i = 0; i < kProtocolLevels.size(); ++i)
    out.push_back({MaskFamily::Center, kProtocolLevels[i],
                   center_square(grid, kCenterFractions[i])});
  for (std::size_t i = 0; i < kProtocolLevels.size(); ++i)
    out.push_back({MaskFamily::Frame, kProtocolLevels[i],
                   frame(grid, kProtocolLevels[i])});
  for (std::size_t i = 0; i < kProtocolLevels.size(); ++i)
    out.push_back({MaskFamily::Random, kProtocolLevels[i],
                   random_pixels(grid, kProtocolLevels[i],
                                 mix_seed(seed, 9000 + i))});
  return out;
}

namespace detail {

inline bool fools(const Model<float>& target_model, const Tensor<float>& adv,
                  int label, int target_class, bool targeted) {
  const int pred = predict(target_model, adv);
  return targeted ? pred == target_class : pred != label;
}

inline int family_rank(MaskFamily f) {
  switch (f) {
    case MaskFamily::Full: return 0;
    case MaskFamily::Center: return 1;
    case MaskFamily::Frame: return 2;
    case MaskFamily::Random: return 3;
  }
  return 4;
}

inline bool record_less(const TransferRecord& a, const TransferRecord& b) {
  return std::tuple(a.source, a.image_id, family_rank(a.family), a.level,
                    a.target) < std::tuple(b.source, b.image_id,
                                           family_rank(b.family), b.level,
                                           b.target);
}

}  // namespace detail

/// Per-image outcome of the unlocalized baseline attack for one source.
struct BaselineImage {
  int pos = 0;  // index into the eval pool
  int image_id = 0;
  int target_class = 0;
  bool source_success = false;
  std::vector<char> transfers;  // per model, aligned with the model list
  int iterations = 0;
  NormTriple norms;
};

struct BaselineRun {
  std::vector<TransferRecord> records;
  std::vector<BaselineImage> images;  // one per attacked image, in pool order
  int attacked = 0;
  std::vector<std::string> shortfalls;
};

/// Full-mask attacks from one source, wave by wave, until every target has
/// n_per_pair transferring examples or the pool is exhausted (in which case
/// the shortfall is reported). The target class is drawn once per image and
/// reused by every localized variant later.
inline BaselineRun run_baseline(const NamedModel& source,
                                const std::vector<NamedModel>& models,
                                const EvalPool& pool,
                                const ProtocolConfig& cfg) {
  require(!pool.ids.empty(), "run_baseline: empty evaluation pool");
  BaselineRun run;
  std::vector<int> transfer_counts(models.size(), 0);

  const int total = static_cast<int>(pool.ids.size());
  for (int start = 0; start < total; start += cfg.wave) {
    const int count = std::min(cfg.wave, total - start);
    std::vector<AttackOutcome> outcomes(static_cast<std::size_t>(count));
    parallel_for(count, cfg.threads, [&](int i) {
      const int pos = start + i;
      AttackConfig acfg;
      acfg.alpha = cfg.alpha;
      acfg.max_iterations = cfg.max_iterations;
      acfg.stop_on_source_success = cfg.stop_on_success;
      acfg.strategy = RandomOtherClass{
          mix_seed(cfg.seed, static_cast<std::uint64_t>(pool.ids[pos]))};
      outcomes[static_cast<std::size_t>(i)] =
          run_attack(*source.model, *pool.images[pos], acfg);
    });

    for (int i = 0; i < count; ++i) {
      const int pos = start + i;
      const auto& oc = outcomes[static_cast<std::size_t>(i)];
      BaselineImage bi;
      bi.pos = pos;
      bi.image_id = pool.ids[pos];
      bi.target_class = oc.target_class;
      bi.source_success = oc.source_success;
      bi.iterations = oc.iterations_used;
      bi.norms = oc.norms;
      bi.transfers.assign(models.size(), 0);
      for (std::size_t t = 0; t < models.size(); ++t) {
        const bool transfers =
            oc.source_success &&
            detail::fools(*models[t].model, oc.adversarial, pool.labels[pos],
                          oc.target_class, cfg.targeted_transfer);
        bi.transfers[t] = transfers;
        if (transfers) ++transfer_counts[t];

        TransferRecord rec;
        rec.image_id = bi.image_id;
        rec.label = pool.labels[pos];
        rec.source = source.name;
        rec.target = models[t].name;
        rec.family = MaskFamily::Full;
        rec.level = 1.0;
        rec.realized_fraction = 1.0;
        rec.target_class = oc.target_class;
        rec.source_success = oc.source_success;
        rec.transfer_success = transfers;
        rec.iterations = oc.iterations_used;
        rec.l0 = oc.norms.l0;
        rec.l2 = oc.norms.l2;
        rec.linf = oc.norms.linf;
        run.records.push_back(rec);
      }
      run.images.push_back(std::move(bi));
      ++run.attacked;
    }

    bool done = true;
    for (std::size_t t = 0; t < models.size(); ++t)
      if (models[t].name != source.name &&
          transfer_counts[t] < cfg.n_per_pair)
        done = false;
    if (done) break;
  }

  for (std::size_t t = 0; t < models.size(); ++t)
    if (models[t].name != source.name && transfer_counts[t] < cfg.n_per_pair)
      run.shortfalls.push_back(
          source.name + "->" + models[t].name + ": collected " +
          std::to_string(transfer_counts[t]) + "/" +
          std::to_string(cfg.n_per_pair) +
          " transferring baselines before exhausting the pool");
  return run;
}

/// Localized attacks on the same initial images whose baselines transferred
/// to at least one other model, with the same per-image target class.
inline std::vector<TransferRecord> run_localized(
    const NamedModel& source, const std::vector<NamedModel>& models,
    const BaselineRun& baseline, const std::vector<ProtocolMaskConfig>& masks,
    const EvalPool& pool, const ProtocolConfig& cfg) {
  std::vector<const BaselineImage*> retained;
  for (const auto& bi : baseline.images) {
    bool transferred_elsewhere = false;
    for (std::size_t t = 0; t < models.size(); ++t)
      if (models[t].name != source.name && bi.transfers[t])
        transferred_elsewhere = true;
    if (transferred_elsewhere) retained.push_back(&bi);
  }

  const int jobs = static_cast<int>(retained.size() * masks.size());
  std::vector<AttackOutcome> outcomes(static_cast<std::size_t>(jobs));
  parallel_for(jobs, cfg.threads, [&](int j) {
    const auto& bi = *retained[static_cast<std::size_t>(j) / masks.size()];
    const auto& mc = masks[static_cast<std::size_t>(j) % masks.size()];
    AttackConfig acfg;
    acfg.alpha = cfg.alpha;
    acfg.max_iterations = cfg.max_iterations;
    acfg.stop_on_source_success = cfg.stop_on_success;
    acfg.strategy = FixedClass{bi.target_class};
    acfg.mask = mc.mask;
    outcomes[static_cast<std::size_t>(j)] =
        run_attack(*source.model, *pool.images[bi.pos], acfg);
  });

  std::vector<TransferRecord> records;
  for (int j = 0; j < jobs; ++j) {
    const auto& bi = *retained[static_cast<std::size_t>(j) / masks.size()];
    const auto& mc = masks[static_cast<std::size_t>(j) % masks.size()];
    const auto& oc = outcomes[static_cast<std::size_t>(j)];
    for (std::size_t t = 0; t < models.size(); ++t) {
      TransferRecord rec;
      rec.image_id = bi.image_id;
      rec.label = pool.labels[bi.pos];
      rec.source = source.name;
      rec.target = models[t].name;
      rec.family = mc.family;
      rec.level = mc.level;
      rec.realized_fraction = mc.mask.realized_fraction;
      rec.target_class = oc.target_class;
      rec.source_success = oc.source_success;
      rec.transfer_success =
          oc.source_success &&
          detail::fools(*models[t].model, oc.adversarial,
                        pool.labels[bi.pos], oc.target_class,
                        cfg.targeted_transfer);
      rec.iterations = oc.iterations_used;
      rec.l0 = oc.norms.l0;
      rec.l2 = oc.norms.l2;
      rec.linf = oc.norms.linf;
      records.push_back(rec);
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Statistics for one (source, target, mask) cell. Standard deviations use
/// the sample (n-1) convention; a single sample has deviation 0.
struct CellAggregate {
  std::string source;
  std::string target;
  std::string family;  // full|center|frame|random|pooled
  double level = 1.0;
  int n_baseline = 0;  // denominator: baseline-transferring images
  int n_transfer = 0;  // numerator: localized examples that still transfer
  double transfer_rate = 0.0;
  int n = 0;  // transferring records with norm statistics
  double l0_mean = 0, l0_std = 0;
  double l2_mean = 0, l2_std = 0;
  double linf_mean = 0, linf_std = 0;
  bool has_lower = false;  // lower-norm fractions vs the unlocalized runs
  double lower_l0 = 0, lower_l2 = 0, lower_linf = 0;
};

namespace detail {

struct Welford {
  int n = 0;
  double sum = 0, sumsq = 0;
  void add(double v) {
    ++n;
    sum += v;
    sumsq += v * v;
  }
  double mean() const { return n ? sum / n : 0.0; }
  double sample_std() const {
    if (n <= 1) return 0.0;
    const double m = mean();
    const double var = (sumsq - n * m * m) / (n - 1);
    return var > 0 ? std::sqrt(var) : 0.0;
  }
};

}  // namespace detail

/// Pure function of the record set. Localized transfer rates are computed
/// over exactly the images whose baseline transferred to the same target;
/// lower-norm fractions compare each transferring localized example with
/// its own unlocalized counterpart (strictly lower, ties do not count).
inline std::vector<CellAggregate> aggregate(
    const std::vector<TransferRecord>& records) {
  // baseline lookup: (source, target, image) -> record
  std::map<std::tuple<std::string, std::string, int>, const TransferRecord*>
      baseline;
  for (const auto& r : records)
    if (r.family == MaskFamily::Full)
      baseline[{r.source, r.target, r.image_id}] = &r;

  struct CellData {
    int n_baseline = 0;
    int n_transfer = 0;
    detail::Welford l0, l2, linf;
    int lower_l0 = 0, lower_l2 = 0, lower_linf = 0;
    bool localized = false;
  };
  std::map<std::tuple<std::string, std::string, int, double>, CellData> cells;
  auto cell_key = [](const TransferRecord& r, const std::string& family_name,
                     double level) {
    return std::tuple(r.source, r.target,
                      family_name == "pooled" ? 9
                                              : detail::family_rank(
                                                    mask_family_from_string(family_name)),
                      level);
  };
  std::map<std::tuple<std::string, std::string, int, double>, std::string>
      family_names;

  auto feed = [&](const TransferRecord& r, const std::string& family_name) {
    const auto key = cell_key(r, family_name, r.level);
    family_names[key] = family_name;
    CellData& cd = cells[key];
    if (r.family == MaskFamily::Full) {
      // Baseline cell: denominator is every attacked image.
      ++cd.n_baseline;
      if (r.transfer_success) {
        ++cd.n_transfer;
        cd.l0.add(r.l0);
        cd.l2.add(r.l2);
        cd.linf.add(r.linf);
      }
      return;
    }
    cd.localized = true;
    auto it = baseline.find({r.source, r.target, r.image_id});
    require(it != baseline.end(),
            "aggregate: localized record for image " +
                std::to_string(r.image_id) + " (" + r.source + "->" + r.target +
                ") has no baseline counterpart");
    const TransferRecord& base = *it->second;
    if (!base.transfer_success) return;  // outside the protocol denominator
    ++cd.n_baseline;
    if (r.transfer_success) {
      ++cd.n_transfer;
      cd.l0.add(r.l0);
      cd.l2.add(r.l2);
      cd.linf.add(r.linf);
      if (r.l0 < base.l0) ++cd.lower_l0;
      if (r.l2 < base.l2) ++cd.lower_l2;
      if (r.linf < base.linf) ++cd.lower_linf;
    }
  };

  for (const auto& r : records) {
    feed(r, to_string(r.family));
    if (r.family != MaskFamily::Full) feed(r, "pooled");
  }

  std::vector<CellAggregate> out;
  for (const auto& [key, cd] : cells) {
    CellAggregate agg;
    agg.source = std::get<0>(key);
    agg.target = std::get<1>(key);
    agg.family = family_names[key];
    agg.level = std::get<3>(key);
    agg.n_baseline = cd.n_baseline;
    agg.n_transfer = cd.n_transfer;
    agg.transfer_rate =
        cd.n_baseline > 0
            ? static_cast<double>(cd.n_transfer) / cd.n_baseline
            : 0.0;
    agg.n = cd.l2.n;
    agg.l0_mean = cd.l0.mean();
    agg.l0_std = cd.l0.sample_std();
    agg.l2_mean = cd.l2.mean();
    agg.l2_std = cd.l2.sample_std();
    agg.linf_mean = cd.linf.mean();
    agg.linf_std = cd.linf.sample_std();
    agg.has_lower = cd.localized;
    if (cd.localized && cd.l2.n > 0) {
      agg.lower_l0 = static_cast<double>(cd.lower_l0) / cd.l2.n;
      agg.lower_l2 = static_cast<double>(cd.lower_l2) / cd.l2.n;
      agg.lower_linf = static_cast<double>(cd.lower_linf) / cd.l2.n;
    }
    out.push_back(std::move(agg));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

inline const char* kRecordsHeader =
    "image_id,label,source,target,mask_family,mask_level,"
    "mask_realized_fraction,target_class,source_success,transfer_success,"
    "iterations,l0,l2,linf";

inline void write_records_csv(std::vector<TransferRecord> records,
                              const std::string& path) {
  std::sort(records.begin(), records.end(), detail::record_less);
  std::ofstream os(path);
  require(os.good(), "write_records_csv: cannot open '" + path + "'");
  os << kRecordsHeader << '\n';
  for (const auto& r : records) {
    os << r.image_id << ',' << r.label << ',' << r.source << ',' << r.target
       << ',' << to_string(r.family) << ',' << fmt_double(r.level) << ','
       << fmt_double(r.realized_fraction) << ',' << r.target_class << ','
       << (r.source_success ? 1 : 0) << ',' << (r.transfer_success ? 1 : 0)
       << ',' << r.iterations << ',' << fmt_double(r.l0) << ','
       << fmt_double(r.l2) << ',' << fmt_double(r.linf) << '\n';
  }
  require(os.good(), "write_records_csv: write failed for '" + path + "'");
}

inline std::vector<TransferRecord> read_records_csv(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "read_records_csv: cannot open '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(is, line)),
          "read_records_csv: '" + path + "' is empty");
  require(trim(line) == kRecordsHeader,
          "read_records_csv: unexpected header in '" + path + "'");
  std::vector<TransferRecord> records;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(trim(line));
    require(f.size() == 14, "read_records_csv: line " + std::to_string(lineno) +
                                " has " + std::to_string(f.size()) +
                                " fields, expected 14");
    TransferRecord r;
    r.image_id = static_cast<int>(parse_long(f[0]));
    r.label = static_cast<int>(parse_long(f[1]));
    r.source = f[2];
    r.target = f[3];
    r.family = mask_family_from_string(f[4]);
    r.level = parse_double(f[5]);
    r.realized_fraction = parse_double(f[6]);
    r.target_class = static_cast<int>(parse_long(f[7]));
    r.source_success = parse_long(f[8]) != 0;
    r.transfer_success = parse_long(f[9]) != 0;
    r.iterations = static_cast<int>(parse_long(f[10]));
    r.l0 = parse_double(f[11]);
    r.l2 = parse_double(f[12]);
    r.linf = parse_double(f[13]);
    records.push_back(std::move(r));
  }
  return records;
}

inline void write_aggregate_csvs(const std::vector<CellAggregate>& aggs,
                                 const std::string& out_dir) {
  namespace fs = std::filesystem;
  {
    std::ofstream os(fs::path(out_dir) / "transfer_matrix.csv");
    require(os.good(), "cannot open transfer_matrix.csv");
    os << "scope,level,source,target,n_baseline,n_transferring,transfer_rate\n";
    for (const auto& a : aggs) {
      os << a.family << ',' << fmt_double(a.level) << ',' << a.source << ','
         << a.target << ',' << a.n_baseline << ',' << a.n_transfer << ',';
      if (a.n_baseline > 0) os << fmt_double(a.transfer_rate);
      os << '\n';
    }
  }
  {
    // std columns use the sample (n-1) convention
    std::ofstream os(fs::path(out_dir) / "norm_stats.csv");
    require(os.good(), "cannot open norm_stats.csv");
    os << "source,target,family,level,n,l0_mean,l0_std_sample,l2_mean,"
          "l2_std_sample,linf_mean,linf_std_sample\n";
    for (const auto& a : aggs) {
      if (a.family == "pooled") continue;
      os << a.source << ',' << a.target << ',' << a.family << ','
         << fmt_double(a.level) << ',' << a.n << ',';
      if (a.n > 0)
        os << fmt_double(a.l0_mean) << ',' << fmt_double(a.l0_std) << ','
           << fmt_double(a.l2_mean) << ',' << fmt_double(a.l2_std) << ','
           << fmt_double(a.linf_mean) << ',' << fmt_double(a.linf_std);
      else
        os << ",,,,,";
      os << '\n';
    }
  }
  {
    std::ofstream os(fs::path(out_dir) / "lower_norm_fractions.csv");
    require(os.good(), "cannot open lower_norm_fractions.csv");
    os << "scope,level,source,target,n,lower_l0,lower_l2,lower_linf\n";
    for (const auto& a : aggs) {
      if (!a.has_lower) continue;
      os << a.family << ',' << fmt_double(a.level) << ',' << a.source << ','
         << a.target << ',' << a.n << ',';
      if (a.n > 0)
        os << fmt_double(a.lower_l0) << ',' << fmt_double(a.lower_l2) << ','
           << fmt_double(a.lower_linf);
      else
        os << ",,";
      os << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Reference results at ImageNet scale (AlexNet / VGG-16 / ResNet-50),
// included for side-by-side comparison with desk-scale measurements.
// ---------------------------------------------------------------------------

struct ReferenceTransferCell {
  double level;
  const char* source;
  const char* target;
  int percent;
};

inline constexpr ReferenceTransferCell kReferenceTransfer[] = {
    {0.17, "alexnet", "alexnet", 100}, {0.17, "alexnet", "vgg16", 73},
    {0.17, "alexnet", "resnet50", 66}, {0.17, "vgg16", "alexnet", 60},
    {0.17, "vgg16", "vgg16", 100},     {0.17, "vgg16", "resnet50", 56},
    {0.17, "resnet50", "alexnet", 52}, {0.17, "resnet50", "vgg16", 59},
    {0.17, "resnet50", "resnet50", 100},
    {0.28, "alexnet", "alexnet", 100}, {0.28, "alexnet", "vgg16", 76},
    {0.28, "alexnet", "resnet50", 67}, {0.28, "vgg16", "alexnet", 70},
    {0.28, "vgg16", "vgg16", 100},     {0.28, "vgg16", "resnet50", 63},
    {0.28, "resnet50", "alexnet", 67}, {0.28, "resnet50", "vgg16", 65},
    {0.28, "resnet50", "resnet50", 100},
    {0.45, "alexnet", "alexnet", 100}, {0.45, "alexnet", "vgg16", 78},
    {0.45, "alexnet", "resnet50", 75}, {0.45, "vgg16", "alexnet", 83},
    {0.45, "vgg16", "vgg16", 100},     {0.45, "vgg16", "resnet50", 75},
    {0.45, "resnet50", "alexnet", 78}, {0.45, "resnet50", "vgg16", 77},
    {0.45, "resnet50", "resnet50", 100},
};

struct ReferenceNormRow {
  const char* localization;  // none | center90 | ... | random45
  const char* source;
  const char* target;
  double l2_mean, l2_std, linf_mean, linf_std, l0_mean;
};

inline constexpr ReferenceNormRow kReferenceNorms[] = {
    {"none", "alexnet", "vgg16", 7.35, 5.37, 0.07, 0.08, 0.93},
    {"none", "alexnet", "resnet50", 6.39, 4.50, 0.05, 0.06, 0.94},
    {"none", "vgg16", "alexnet", 6.91, 4.17, 0.07, 0.05, 0.90},
    {"none", "vgg16", "resnet50", 3.62, 3.16, 0.02, 0.04, 0.84},
    {"none", "resnet50", "alexnet", 6.79, 4.31, 0.07, 0.06, 0.89},
    {"none", "resnet50", "vgg16", 3.76, 2.20, 0.02, 0.02, 0.83},
    {"center90", "alexnet", "vgg16", 6.55, 4.36, 0.15, 0.14, 0.15},
    {"center90", "alexnet", "resnet50", 5.33, 3.52, 0.11, 0.10, 0.15},
    {"center90", "vgg16", "alexnet", 4.01, 2.64, 0.10, 0.09, 0.15},
    {"center90", "vgg16", "resnet50", 3.41, 2.77, 0.09, 0.10, 0.15},
    {"center90", "resnet50", "alexnet", 3.54, 2.54, 0.09, 0.09, 0.15},
    {"center90", "resnet50", "vgg16", 2.79, 2.23, 0.06, 0.07, 0.14},
    {"center120", "alexnet", "vgg16", 6.47, 4.48, 0.11, 0.11, 0.27},
    {"center120", "alexnet", "resnet50", 6.30, 4.45, 0.10, 0.11, 0.28},
    {"center120", "vgg16", "alexnet", 5.01, 2.99, 0.10, 0.08, 0.27},
    {"center120", "vgg16", "resnet50", 3.68, 3.05, 0.06, 0.07, 0.26},
    {"center120", "resnet50", "alexnet", 4.50, 2.93, 0.09, 0.08, 0.27},
    {"center120", "resnet50", "vgg16", 3.70, 3.09, 0.06, 0.08, 0.26},
    {"center150", "alexnet", "vgg16", 6.80, 4.48, 0.10, 0.10, 0.43},
    {"center150", "alexnet", "resnet50", 6.46, 4.33, 0.09, 0.09, 0.43},
    {"center150", "vgg16", "alexnet", 6.71, 3.79, 0.11, 0.08, 0.43},
    {"center150", "vgg16", "resnet50", 3.92, 3.07, 0.05, 0.06, 0.40},
    {"center150", "resnet50", "alexnet", 6.64, 3.90, 0.11, 0.08, 0.43},
    {"center150", "resnet50", "vgg16", 4.65, 3.54, 0.07, 0.07, 0.41},
    {"frame20", "alexnet", "vgg16", 9.86, 8.37, 0.18, 0.20, 0.16},
    {"frame20", "alexnet", "resnet50", 10.1, 7.94, 0.20, 0.21, 0.16},
    {"frame20", "vgg16", "alexnet", 6.07, 3.74, 0.16, 0.14, 0.16},
    {"frame20", "vgg16", "resnet50", 4.64, 3.61, 0.12, 0.15, 0.16},
    {"frame20", "resnet50", "alexnet", 4.77, 2.88, 0.13, 0.12, 0.16},
    {"frame20", "resnet50", "vgg16", 4.32, 2.90, 0.11, 0.11, 0.16},
    {"frame34", "alexnet", "vgg16", 8.92, 6.60, 0.13, 0.13, 0.27},
    {"frame34", "alexnet", "resnet50", 8.63, 6.52, 0.13, 0.14, 0.27},
    {"frame34", "vgg16", "alexnet", 6.71, 4.04, 0.15, 0.12, 0.27},
    {"frame34", "vgg16", "resnet50", 4.50, 2.96, 0.08, 0.08, 0.26},
    {"frame34", "resnet50", "alexnet", 5.68, 3.25, 0.12, 0.09, 0.27},
    {"frame34", "resnet50", "vgg16", 4.85, 3.44, 0.10, 0.10, 0.26},
    {"frame58", "alexnet", "vgg16", 8.44, 5.72, 0.12, 0.13, 0.43},
    {"frame58", "alexnet", "resnet50", 7.23, 4.94, 0.09, 0.11, 0.43},
    {"frame58", "vgg16", "alexnet", 7.79, 4.17, 0.14, 0.09, 0.43},
    {"frame58", "vgg16", "resnet50", 5.44, 3.89, 0.08, 0.09, 0.42},
    {"frame58", "resnet50", "alexnet", 7.02, 3.90, 0.12, 0.09, 0.43},
    {"frame58", "resnet50", "vgg16", 5.78, 3.79, 0.09, 0.08, 0.42},
    {"random17", "alexnet", "vgg16", 8.11, 5.63, 0.15, 0.16, 0.16},
    {"random17", "alexnet", "resnet50", 7.41, 4.63, 0.13, 0.14, 0.16},
    {"random17", "vgg16", "alexnet", 5.20, 3.14, 0.13, 0.11, 0.16},
    {"random17", "vgg16", "resnet50", 4.43, 3.30, 0.10, 0.12, 0.16},
    {"random17", "resnet50", "alexnet", 4.59, 2.65, 0.10, 0.09, 0.16},
    {"random17", "resnet50", "vgg16", 3.81, 2.92, 0.08, 0.09, 0.15},
    {"random28", "alexnet", "vgg16", 6.82, 4.99, 0.10, 0.12, 0.28},
    {"random28", "alexnet", "resnet50", 7.51, 4.54, 0.11, 0.11, 0.28},
    {"random28", "vgg16", "alexnet", 5.97, 3.55, 0.12, 0.10, 0.28},
    {"random28", "vgg16", "resnet50", 4.29, 2.91, 0.07, 0.07, 0.27},
    {"random28", "resnet50", "alexnet", 5.50, 3.14, 0.11, 0.09, 0.28},
    {"random28", "resnet50", "vgg16", 4.35, 3.02, 0.07, 0.08, 0.27},
    {"random45", "alexnet", "vgg16", 7.42, 4.80, 0.10, 0.11, 0.44},
    {"random45", "alexnet", "resnet50", 6.76, 4.20, 0.09, 0.09, 0.43},
    {"random45", "vgg16", "alexnet", 7.21, 3.98, 0.12, 0.09, 0.43},
    {"random45", "vgg16", "resnet50", 4.61, 3.41, 0.06, 0.07, 0.41},
    {"random45", "resnet50", "alexnet", 7.39, 4.03, 0.12, 0.08, 0.43},
    {"random45", "resnet50", "vgg16", 5.04, 3.53, 0.07, 0.07, 0.41},
};

inline void write_reference_csvs(const std::string& out_dir) {
  namespace fs = std::filesystem;
  {
    std::ofstream os(fs::path(out_dir) / "reference_imagenet_transfer.csv");
    require(os.good(), "cannot open reference_imagenet_transfer.csv");
    os << "level,source,target,transfer_percent\n";
    for (const auto& c : kReferenceTransfer)
      os << fmt_double(c.level) << ',' << c.source << ',' << c.target << ','
         << c.percent << '\n';
  }
  {
    std::ofstream os(fs::path(out_dir) / "reference_imagenet_norms.csv");
    require(os.good(), "cannot open reference_imagenet_norms.csv");
    os << "localization,source,target,l2_mean,l2_std,linf_mean,linf_std,"
          "l0_mean\n";
    for (const auto& r : kReferenceNorms)
      os << r.localization << ',' << r.source << ',' << r.target << ','
         << fmt_double(r.l2_mean) << ',' << fmt_double(r.l2_std) << ','
         << fmt_double(r.linf_mean) << ',' << fmt_double(r.linf_std) << ','
         << fmt_double(r.l0_mean) << '\n';
  }
}

/// Writes records.csv, the three aggregate CSVs, and the reference tables.
inline void emit_reports(const std::vector<CellAggregate>& aggs,
                         const std::vector<TransferRecord>& records,
                         const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_records_csv(records, (std::filesystem::path(out_dir) / "records.csv").string());
  write_aggregate_csvs(aggs, out_dir);
  write_reference_csvs(out_dir);
}

/// Triptychs (original, mask, adversarial) for the first few retained
/// images of each source, mirroring the qualitative figures.
inline void emit_qualitative(const NamedModel& source,
                             const std::vector<BaselineImage>& retained,
                             const std::vector<ProtocolMaskConfig>& masks,
                             const EvalPool& pool, const ProtocolConfig& cfg,
                             const std::string& out_dir, int max_images = 2) {
  namespace fs = std::filesystem;
  const int count = std::min<int>(max_images, static_cast<int>(retained.size()));
  for (int i = 0; i < count; ++i) {
    const auto& bi = retained[static_cast<std::size_t>(i)];
    const fs::path dir = fs::path(out_dir) / "qualitative" / source.name /
                         ("img" + std::to_string(bi.image_id));
    fs::create_directories(dir);
    const Tensor<float>& original = *pool.images[bi.pos];
    write_ppm(original, (dir / "original.ppm").string());

    AttackConfig acfg;
    acfg.alpha = cfg.alpha;
    acfg.max_iterations = cfg.max_iterations;
    acfg.stop_on_source_success = cfg.stop_on_success;
    acfg.strategy = FixedClass{bi.target_class};
    write_ppm(run_attack(*source.model, original, acfg).adversarial,
              (dir / "full.ppm").string());

    for (const auto& mc : masks) {
      const std::string stem = std::string(to_string(mc.family)) + "_" +
                               std::to_string(static_cast<int>(std::lround(mc.level * 100)));
      write_pgm(mc.mask, (dir / (stem + "_mask.pgm")).string());
      AttackConfig mcfg = acfg;
      mcfg.mask = mc.mask;
      write_ppm(run_attack(*source.model, original, mcfg).adversarial,
                (dir / (stem + ".ppm")).string());
    }
  }
}

/// The end-to-end protocol: per source, the unlocalized baseline, the nine
/// localized variants on retained images, then aggregation and reports.
struct ProtocolResult {
  std::vector<TransferRecord> records;
  std::vector<std::string> shortfalls;
  std::vector<std::string> source_summaries;  // attempted/retained per source
};

inline ProtocolResult run_protocol(const std::vector<NamedModel>& models,
                                   const EvalPool& pool,
                                   const ProtocolConfig& cfg,
                                   const std::string& out_dir = "") {
  require(!models.empty(), "run_protocol: no models");
  const int grid = models[0].model->input_shape[1];
  const auto masks = protocol_masks(grid, cfg.seed);

  ProtocolResult result;
  for (const auto& source : models) {
    BaselineRun base = run_baseline(source, models, pool, cfg);
    std::vector<BaselineImage> retained;
    for (const auto& bi : base.images) {
      bool kept = false;
      for (std::size_t t = 0; t < models.size(); ++t)
        if (models[t].name != source.name && bi.transfers[t]) kept = true;
      if (kept) retained.push_back(bi);
    }
    auto localized = run_localized(source, models, base, masks, pool, cfg);

    result.source_summaries.push_back(
        source.name + ": attacked " + std::to_string(base.attacked) +
        " images, retained " + std::to_string(retained.size()) +
        " with a transferring baseline");
    for (auto& s : base.shortfalls) result.shortfalls.push_back(std::move(s));
    for (auto& r : base.records) result.records.push_back(std::move(r));
    for (auto& r : localized) result.records.push_back(std::move(r));

    if (!out_dir.empty())
      emit_qualitative(source, retained, masks, pool, cfg, out_dir);
  }

  if (!out_dir.empty()) {
    emit_reports(aggregate(result.records), result.records, out_dir);
    std::ofstream os(std::filesystem::path(out_dir) / "summary.txt");
    for (const auto& s : result.source_summaries) os << s << '\n';
    for (const auto& s : result.shortfalls) os << "shortfall: " << s << '\n';
  }
  return result;
}

}  // namespace locadv
