#include "geoshift/dataset.hpp"

#include <gtest/gtest.h>

#include <set>

#include "geoshift/bundle_io.hpp"
#include "test_util.hpp"

using geoshift::DatasetBundle;
using geoshift::generate;
using geoshift::GeneratorConfig;
using geoshift::label_histogram;
using geoshift::tv_distance;

namespace {

GeneratorConfig small_config(uint64_t seed = 1) {
  GeneratorConfig cfg = GeneratorConfig::desk_default(10);
  cfg.height = 8;
  cfg.width = 8;
  cfg.source_train_size = 200;
  cfg.source_val_size = 50;
  cfg.target_tuning_size = 60;
  cfg.target_eval_size = 50;
  cfg.target_hidden_size = 50;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(GeneratorTest, DegenerateSingleClass) {
  GeneratorConfig cfg;
  cfg.height = 6;
  cfg.width = 6;
  cfg.channels = 3;
  cfg.num_classes = 1;
  cfg.source_train_size = 20;
  cfg.source_val_size = 5;
  cfg.target_tuning_size = 5;
  cfg.target_eval_size = 5;
  cfg.target_hidden_size = 5;
  cfg.background_noise_sigma = 0.0;
  cfg.min_shift_delta = 0.0;
  cfg.source_region = {0, {1.0}, {}};
  cfg.target_region = {1, {1.0}, {}};
  cfg.hidden_region = {2, {1.0}, {}};
  cfg.seed = 7;

  const DatasetBundle b = generate(cfg);
  const auto protos = geoshift::generate_prototypes(cfg);
  ASSERT_EQ(protos.size(), 1u);
  geoshift::ImageTensor expected = protos[0];
  for (double& v : expected.data) v = static_cast<double>(static_cast<float>(v));

  for (const auto& name : geoshift::split_names()) {
    for (const auto& s : b.split(name)) {
      EXPECT_EQ(s.labels, (geoshift::LabelSet{0}));
      EXPECT_EQ(s.image, expected);
    }
  }
}

TEST(GeneratorTest, FixedSeedByteIdentical) {
  const GeneratorConfig cfg = small_config(3);
  EXPECT_TRUE(generate(cfg) == generate(cfg));
}

TEST(GeneratorTest, DifferentSeedsDiffer) {
  EXPECT_FALSE(generate(small_config(1)) == generate(small_config(2)));
}

TEST(GeneratorTest, EmpiricalShiftMeetsDelta) {
  GeneratorConfig cfg = GeneratorConfig::desk_default();
  cfg.source_train_size = 2000;
  cfg.source_val_size = 200;
  cfg.target_tuning_size = 200;
  cfg.target_eval_size = 2000;
  cfg.target_hidden_size = 200;
  cfg.seed = 5;
  const DatasetBundle b = generate(cfg);
  const auto hs = label_histogram(b.source_train, b.vocab);
  const auto ht = label_histogram(b.target_eval, b.vocab);
  EXPECT_GE(tv_distance(hs, ht), 0.9 * cfg.min_shift_delta);
}

TEST(GeneratorTest, PriorsRespectedWithinFourStandardErrors) {
  GeneratorConfig cfg = GeneratorConfig::desk_default();
  cfg.source_train_size = 2000;
  cfg.source_val_size = 50;
  cfg.target_tuning_size = 50;
  cfg.target_eval_size = 50;
  cfg.target_hidden_size = 50;
  cfg.seed = 11;
  const DatasetBundle b = generate(cfg);
  const auto hist = label_histogram(b.source_train, b.vocab);
  const double n = static_cast<double>(b.source_train.size());
  for (size_t c = 0; c < cfg.num_classes; ++c) {
    const double p = cfg.source_region.label_prior[c];
    const double se = std::sqrt(p * (1.0 - p) / n);
    EXPECT_NEAR(hist[c], p, 4.0 * se + 0.01) << "class " << c;
  }
}

TEST(GeneratorTest, InfeasibleDeltaThrows) {
  GeneratorConfig cfg = small_config();
  cfg.target_region = cfg.source_region;  // zero shift
  cfg.target_region.region_id = 1;
  cfg.min_shift_delta = 0.5;
  EXPECT_THROW(generate(cfg), geoshift::config_error);
}

TEST(GeneratorTest, SplitsDisjointAndSized) {
  const GeneratorConfig cfg = small_config(13);
  const DatasetBundle b = generate(cfg);
  EXPECT_EQ(b.source_train.size(), cfg.source_train_size);
  EXPECT_EQ(b.source_val.size(), cfg.source_val_size);
  EXPECT_EQ(b.target_tuning.size(), cfg.target_tuning_size);
  std::set<std::string> ids;
  size_t total = 0;
  for (const auto& name : geoshift::split_names()) {
    for (const auto& s : b.split(name)) {
      ids.insert(s.sample_id);
      ++total;
    }
  }
  EXPECT_EQ(ids.size(), total);
}

TEST(GeneratorTest, RegionIdsFollowProfiles) {
  const DatasetBundle b = generate(small_config(17));
  for (const auto& s : b.source_train) EXPECT_EQ(s.region_id, 0);
  for (const auto& s : b.target_eval) EXPECT_EQ(s.region_id, 1);
  for (const auto& s : b.target_hidden) EXPECT_EQ(s.region_id, 2);
}

TEST(HistogramTest, SingleSample) {
  geoshift::Split split(1);
  split[0].sample_id = "a";
  split[0].labels = {0};
  const auto vocab = geoshift::ClassVocabulary::canonical(2);
  const auto h = label_histogram(split, vocab);
  EXPECT_EQ(h, (std::vector<double>{1.0, 0.0}));
}

TEST(HistogramTest, ScaleInvariantUnderDuplication) {
  const DatasetBundle b = generate(small_config(19));
  geoshift::Split doubled = b.source_val;
  doubled.insert(doubled.end(), b.source_val.begin(), b.source_val.end());
  EXPECT_EQ(label_histogram(b.source_val, b.vocab), label_histogram(doubled, b.vocab));
}

TEST(HistogramTest, MatchesNaiveCounting) {
  const DatasetBundle b = generate(small_config(23));
  const auto h = label_histogram(b.source_train, b.vocab);
  std::vector<double> counts(b.vocab.num_classes, 0.0);
  for (const auto& s : b.source_train)
    for (int c : s.labels) counts[static_cast<size_t>(c)] += 1.0;
  for (size_t c = 0; c < counts.size(); ++c)
    EXPECT_DOUBLE_EQ(h[c], counts[c] / static_cast<double>(b.source_train.size()));
}

TEST(HistogramTest, EmptySplitThrows) {
  const auto vocab = geoshift::ClassVocabulary::canonical(2);
  EXPECT_THROW(label_histogram({}, vocab), geoshift::empty_input_error);
}

TEST(BundleIoTest, RoundtripIsIdentity) {
  const DatasetBundle b = generate(small_config(29));
  const auto dir = oracle::temp_dir("bundle_roundtrip");
  const auto path = dir / "b.gsd";
  geoshift::write_bundle(b, path);
  EXPECT_TRUE(geoshift::read_bundle(path) == b);
  std::filesystem::remove_all(dir);
}

TEST(BundleIoTest, DistinctErrorsPerFailureMode) {
  const DatasetBundle b = generate(small_config(31));
  const auto dir = oracle::temp_dir("bundle_errors");
  const auto path = dir / "b.gsd";
  geoshift::write_bundle(b, path);
  std::string bytes = geoshift::read_file(path);

  {  // wrong magic
    std::string corrupt = bytes;
    corrupt[0] = 'X';
    geoshift::write_file(dir / "magic.gsd", corrupt);
    EXPECT_THROW(geoshift::read_bundle(dir / "magic.gsd"), geoshift::magic_error);
  }
  {  // wrong version
    std::string corrupt = bytes;
    corrupt[4] = 9;
    geoshift::write_file(dir / "version.gsd", corrupt);
    EXPECT_THROW(geoshift::read_bundle(dir / "version.gsd"), geoshift::version_error);
  }
  {  // truncated mid-sample
    geoshift::write_file(dir / "trunc.gsd", bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(geoshift::read_bundle(dir / "trunc.gsd"), geoshift::truncation_error);
  }
  {  // flipped pixel byte (inside the last sample's payload)
    std::string corrupt = bytes;
    const size_t pos = bytes.size() - 100;
    corrupt[pos] = static_cast<char>(corrupt[pos] ^ 0x40);
    geoshift::write_file(dir / "crc.gsd", corrupt);
    EXPECT_THROW(geoshift::read_bundle(dir / "crc.gsd"), geoshift::checksum_error);
  }
  std::filesystem::remove_all(dir);
}

TEST(BundleIoTest, LabelsCsvShape) {
  const DatasetBundle b = generate(small_config(37));
  const auto dir = oracle::temp_dir("labels_csv");
  geoshift::write_labels_csv(b, dir / "labels.csv");
  const std::string csv = geoshift::read_file(dir / "labels.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "sample_id,region_id,labels");
  size_t lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  size_t total = 0;
  for (const auto& name : geoshift::split_names()) total += b.split(name).size();
  EXPECT_EQ(lines, total + 1);  // header + one row per sample
  std::filesystem::remove_all(dir);
}

TEST(TvDistanceTest, BoundsAndSymmetry) {
  const std::vector<double> a = {0.5, 0.5, 0.0};
  const std::vector<double> c = {0.0, 0.0, 1.0};
  EXPECT_DOUBLE_EQ(tv_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(tv_distance(a, c), 1.0);
  EXPECT_DOUBLE_EQ(tv_distance(a, c), tv_distance(c, a));
}

TEST(CoOccurrenceBoostTest, BoostRaisesPairFrequency) {
  GeneratorConfig cfg = small_config(41);
  cfg.target_tuning_size = 1500;
  cfg.source_region.co_occurrence_boost.push_back({0, 9, 10.0});
  cfg.target_region.co_occurrence_boost.push_back({0, 9, 10.0});
  cfg.hidden_region.co_occurrence_boost.push_back({0, 9, 10.0});
  GeneratorConfig plain = small_config(41);
  plain.target_tuning_size = 1500;

  auto pair_rate = [](const geoshift::Split& split) {
    size_t with0 = 0, with09 = 0;
    for (const auto& s : split) {
      const bool has0 = std::binary_search(s.labels.begin(), s.labels.end(), 0);
      const bool has9 = std::binary_search(s.labels.begin(), s.labels.end(), 9);
      if (has0) ++with0;
      if (has0 && has9) ++with09;
    }
    return with0 ? static_cast<double>(with09) / static_cast<double>(with0) : 0.0;
  };
  const double boosted = pair_rate(generate(cfg).target_tuning);
  const double baseline = pair_rate(generate(plain).target_tuning);
  EXPECT_GT(boosted, baseline + 0.1);
}
