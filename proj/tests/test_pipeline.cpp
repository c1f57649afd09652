// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support/oracles.hpp"
#include "support/synthetic.hpp"
#include "vidta/pipeline/checkpoint.hpp"
#include "vidta/pipeline/dataset.hpp"
#include "vidta/pipeline/kfold.hpp"
#include "vidta/pipeline/trainer.hpp"

namespace vidta::pipeline {
namespace {

const std::string kHeader = "smiles,protein,affinity,space\n";

TrainConfig quick(std::size_t epochs, std::uint64_t seed = 1) {
  TrainConfig c;
  c.lr_initial = 3e-3;
  c.lr_after_100_epochs = 1e-3;
  c.batch_size = 8;
  c.max_epochs = epochs;
  c.early_stop_patience = epochs;
  c.seed = seed;
  return c;
}

TEST(TransformAffinity, RawKdToPKd) {
  EXPECT_NEAR(transform_affinity(10000.0, AffinitySpace::kRawKdNm), 5.0, 1e-12);
  EXPECT_NEAR(transform_affinity(1.0, AffinitySpace::kRawKdNm), 9.0, 1e-12);
  EXPECT_NEAR(transform_affinity(1e9, AffinitySpace::kRawKdNm), 0.0, 1e-12);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double kd = std::pow(10.0, uniform(rng, -3, 8));
    EXPECT_NEAR(transform_affinity(kd, AffinitySpace::kRawKdNm), -std::log10(kd / 1e9), 1e-12);
  }
}

TEST(TransformAffinity, OtherSpacesPassThrough) {
  EXPECT_EQ(transform_affinity(11.2, AffinitySpace::kKiba), 11.2);
  EXPECT_EQ(transform_affinity(-3.5, AffinitySpace::kPKd), -3.5);
  EXPECT_EQ(transform_affinity(0.0, AffinitySpace::kMetzNative), 0.0);
}

TEST(TransformAffinity, NonPositiveKd) {
  EXPECT_THROW(transform_affinity(0.0, AffinitySpace::kRawKdNm), NonPositiveKd);
  EXPECT_THROW(transform_affinity(-1.0, AffinitySpace::kRawKdNm), NonPositiveKd);
  EXPECT_THROW(transform_affinity(std::nan(""), AffinitySpace::kRawKdNm), NonPositiveKd);
}

TEST(AffinitySpace, RoundTripsNames) {
  for (auto s : {AffinitySpace::kPKd, AffinitySpace::kKiba, AffinitySpace::kMetzNative, AffinitySpace::kRawKdNm})
    EXPECT_EQ(parse_affinity_space(to_string(s)), s);
  EXPECT_THROW(parse_affinity_space("Kd"), Error);
}

TEST(LoadDataset, BundledSample) {
  const auto d = load_dataset(testing::data_path("sample.csv"));
  EXPECT_EQ(d.records.size(), 10u);
  EXPECT_TRUE(d.quarantine.empty());
  EXPECT_EQ(d.rows, 10u);
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    EXPECT_EQ(d.records[i].row, i + 1);
    EXPECT_TRUE(std::isfinite(d.records[i].target()));
  }
  EXPECT_NEAR(d.records[1].target(), 5.0, 1e-12);
}

TEST(LoadDataset, QuarantinesBadRowsWithReasons) {
  std::istringstream in(kHeader +
                        "CCO,MKT,5.0,pKd\n"
                        "C1CC,MKT,5.0,pKd\n"
                        "CCO,MKJ,5.0,pKd\n"
                        "CCO,MKT,abc,pKd\n"
                        "CCO,MKT,5.0\n"
                        "CCO,MKT,0,raw_Kd_nM\n"
                        "CCO,MKT,5.0,ki\n"
                        "CCO,,5.0,pKd\n"
                        "CCN,MKT,100,raw_Kd_nM\n");
  const auto d = read_dataset(in);
  EXPECT_EQ(d.rows, 9u);
  EXPECT_EQ(d.records.size() + d.quarantine.size(), d.rows);
  ASSERT_EQ(d.records.size(), 2u);
  EXPECT_EQ(d.records[1].row, 9u);
  EXPECT_NEAR(d.records[1].target(), 7.0, 1e-12);
  std::vector<std::pair<std::size_t, std::string>> got;
  for (const auto& q : d.quarantine) {
    got.emplace_back(q.row, q.kind);
    EXPECT_FALSE(q.reason.empty());
  }
  const std::vector<std::pair<std::size_t, std::string>> expect{
      {2, "UnmatchedRingClosure"}, {3, "UnknownResidue"}, {4, "MalformedAffinity"}, {5, "MalformedRow"},
      {6, "NonPositiveKd"},        {7, "UnknownSpace"},   {8, "EmptySequence"}};
  EXPECT_EQ(got, expect);
}

TEST(LoadDataset, BomCrlfAndBlankLines) {
  std::istringstream in("\xEF\xBB\xBF" "smiles,protein,affinity,space\r\n\r\nCCO,MKT,5.0,pKd\r\n\n  \nCC,AC,6,kiba\r\n");
  const auto d = read_dataset(in);
  ASSERT_EQ(d.records.size(), 2u);
  EXPECT_EQ(d.rows, 2u);
  EXPECT_EQ(d.records[0].smiles, "CCO");
  EXPECT_EQ(d.records[1].affinity_space, AffinitySpace::kKiba);
  EXPECT_EQ(d.records[1].row, 2u);
}

TEST(LoadDataset, Errors) {
  EXPECT_THROW(load_dataset("/nonexistent/data.csv"), FileUnreadable);
  std::istringstream wrong("smiles,sequence,affinity,space\nCCO,MKT,5,pKd\n");
  EXPECT_THROW(read_dataset(wrong), HeaderMismatch);
  std::istringstream empty("");
  EXPECT_THROW(read_dataset(empty), HeaderMismatch);
  std::istringstream only_header(kHeader);
  EXPECT_TRUE(read_dataset(only_header).records.empty());
}

TEST(FeatureCache, DeduplicatesAndReportsFailingRecord) {
  const auto d = load_dataset(testing::data_path("sample.csv"));
  const auto cfg = model::ModelConfig::toy();
  FeatureCache cache(cfg);
  cache.add(d.records, 3);
  std::set<std::string> drugs, targets;
  for (const auto& r : d.records) {
    drugs.insert(r.smiles);
    targets.insert(r.protein_seq);
  }
  EXPECT_EQ(cache.graph_count(), drugs.size());
  EXPECT_EQ(cache.protein_count(), targets.size());
  const auto s = cache.samples(d.records);
  EXPECT_EQ(s[0].graph, cache.sample(d.records[0]).graph);

  DatasetRecord bad;
  bad.smiles = "C1CC";
  bad.protein_seq = "MKT";
  bad.row = 42;
  try {
    cache.add({bad});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("row 42"), std::string::npos) << e.what();
  }
  EXPECT_THROW(cache.sample(bad), Error);
}

TEST(KFold, EvenSplit) {
  const auto folds = kfold_split(10, 5, 3);
  ASSERT_EQ(folds.size(), 5u);
  for (const auto& f : folds) {
    EXPECT_EQ(f.valid.size(), 2u);
    EXPECT_EQ(f.train.size(), 8u);
  }
}

TEST(KFold, PartitionByBruteForce) {
  for (std::size_t n : {5u, 7u, 103u}) {
    const auto folds = kfold_split(n, 5, 11);
    std::vector<int> hits(n, 0);
    std::size_t lo = n, hi = 0;
    for (const auto& f : folds) {
      lo = std::min(lo, f.valid.size());
      hi = std::max(hi, f.valid.size());
      for (std::size_t i : f.valid) ++hits.at(i);
      std::vector<std::size_t> all = f.train;
      all.insert(all.end(), f.valid.begin(), f.valid.end());
      std::sort(all.begin(), all.end());
      for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(all[i], i);
      for (std::size_t i : f.valid)
        EXPECT_FALSE(std::binary_search(f.train.begin(), f.train.end(), i));
    }
    for (int h : hits) EXPECT_EQ(h, 1);
    EXPECT_LE(hi - lo, 1u);
  }
}

TEST(KFold, DeterministicPerSeed) {
  const auto a = kfold_split(50, 5, 7), b = kfold_split(50, 5, 7), c = kfold_split(50, 5, 8);
  bool differs = false;
  for (std::size_t f = 0; f < 5; ++f) {
    EXPECT_EQ(a[f].valid, b[f].valid);
    differs = differs || a[f].valid != c[f].valid;
  }
  EXPECT_TRUE(differs);
}

TEST(KFold, Errors) {
  EXPECT_THROW(kfold_split(4, 5, 0), TooFewRecords);
  EXPECT_THROW(kfold_split(10, 1, 0), Error);
  EXPECT_NO_THROW(kfold_split(5, 5, 0));
}

TEST(TrainConfig, LearningRateSchedule) {
  const TrainConfig c;
  EXPECT_EQ(c.learning_rate(1), 3e-4);
  EXPECT_EQ(c.learning_rate(100), 3e-4);
  EXPECT_EQ(c.learning_rate(101), 1e-4);
  EXPECT_EQ(c.max_epochs, 1000u);
  EXPECT_EQ(c.early_stop_patience, 200u);
  TrainConfig bad;
  bad.folds = 1;
  EXPECT_THROW(bad.validate(), Error);
  bad = TrainConfig{};
  bad.lr_initial = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = TrainConfig{};
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(EpochLog, CsvRow) {
  EpochLog e{3, 0.5, 0.25, 1e-4, 1.5};
  const std::string row = to_csv_row(e);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 4);
  EXPECT_EQ(row.rfind("3,0.5,0.25,", 0), 0u);
  EXPECT_EQ(epoch_log_header(), "epoch,train_mse,valid_mse,lr,seconds");
}

TEST(Train, LogsEveryEpochAndKeepsBest) {
  const auto cfg = model::ModelConfig::toy();
  const auto data = testing::teacher_dataset(12, 2, cfg);
  const std::vector<DatasetRecord> train_set(data.begin(), data.begin() + 9), valid_set(data.begin() + 9, data.end());
  std::size_t seen = 0;
  const auto r = train(train_set, valid_set, cfg, quick(8), [&](const EpochLog&) { ++seen; });
  ASSERT_EQ(r.log.size(), 8u);
  EXPECT_EQ(seen, 8u);
  double best = r.log[0].valid_mse;
  std::size_t best_epoch = 1;
  for (const auto& e : r.log) {
    EXPECT_TRUE(std::isfinite(e.train_mse));
    EXPECT_TRUE(std::isfinite(e.valid_mse));
    EXPECT_GE(e.seconds, 0.0);
    if (e.valid_mse < best) {
      best = e.valid_mse;
      best_epoch = e.epoch;
    }
  }
  EXPECT_EQ(r.best.epoch, best_epoch);
  EXPECT_EQ(r.best.best_valid_mse, best);
  const auto again = predict_batch(r.best, valid_set);
  ASSERT_TRUE(again.metrics.has_value());
  EXPECT_NEAR(again.metrics->mse, best, 1e-6);
}

TEST(Train, LearningRateDropsAfterDecayEpoch) {
  const auto cfg = model::ModelConfig::toy();
  const auto data = testing::teacher_dataset(4, 3, cfg);
  TrainConfig c = quick(5);
  c.lr_decay_epoch = 2;
  const auto r = train(data, {}, cfg, c);
  EXPECT_EQ(r.log[1].lr, 3e-3);
  EXPECT_EQ(r.log[2].lr, 1e-3);
  EXPECT_TRUE(std::isnan(r.log[0].valid_mse));
}

TEST(Train, PatienceZeroStopsAtFirstNonImprovingEpoch) {
  const auto cfg = model::ModelConfig::toy();
  const auto data = testing::teacher_dataset(8, 4, cfg);
  TrainConfig c = quick(300);
  c.lr_initial = c.lr_after_100_epochs = 0.05;
  c.early_stop_patience = 0;
  const auto r = train(data, {}, cfg, c);
  ASSERT_LT(r.log.size(), 300u);
  ASSERT_GE(r.log.size(), 2u);
  double best = r.log[0].train_mse;
  for (std::size_t i = 1; i + 1 < r.log.size(); ++i) {
    EXPECT_LT(r.log[i].train_mse, best) << "epoch " << r.log[i].epoch;
    best = r.log[i].train_mse;
  }
  EXPECT_GE(r.log.back().train_mse, best);
}

TEST(Train, DeterministicGivenSeed) {
  const auto cfg = model::ModelConfig::toy();
  const auto data = testing::teacher_dataset(10, 5, cfg);
  const std::vector<DatasetRecord> train_set(data.begin(), data.begin() + 7), valid_set(data.begin() + 7, data.end());
  const auto a = train(train_set, valid_set, cfg, quick(6, 9));
  const auto b = train(train_set, valid_set, cfg, quick(6, 9));
  const auto c = train(train_set, valid_set, cfg, quick(6, 10));
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].epoch, b.log[i].epoch);
    EXPECT_EQ(a.log[i].train_mse, b.log[i].train_mse);
    EXPECT_EQ(a.log[i].valid_mse, b.log[i].valid_mse);
    EXPECT_EQ(a.log[i].lr, b.log[i].lr);
  }
  EXPECT_NE(a.log.back().train_mse, c.log.back().train_mse);
  ASSERT_EQ(a.best.arrays.size(), b.best.arrays.size());
  for (std::size_t i = 0; i < a.best.arrays.size(); ++i) EXPECT_EQ(a.best.arrays[i].values, b.best.arrays[i].values);
}

TEST(Train, RejectsTinyOrInvalidInput) {
  const auto cfg = model::ModelConfig::toy();
  const auto data = testing::teacher_dataset(3, 6, cfg);
  EXPECT_THROW(train({data[0]}, {}, cfg, quick(1)), TooFewRecords);
  TrainConfig c = quick(1);
  c.max_epochs = 0;
  EXPECT_THROW(train(data, {}, cfg, c), Error);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const auto cfg = model::ModelConfig::toy();
  const auto data = testing::teacher_dataset(16, 7, cfg);
  const auto r = train(data, {}, cfg, quick(3));
  std::stringstream buf;
  write_checkpoint(r.best, buf);
  const auto loaded = read_checkpoint(buf);
  EXPECT_EQ(loaded.epoch, r.best.epoch);
  EXPECT_EQ(loaded.best_valid_mse, r.best.best_valid_mse);
  EXPECT_EQ(loaded.adam_steps, r.best.adam_steps);
  EXPECT_EQ(loaded.rng_state, r.best.rng_state);
  ASSERT_EQ(loaded.arrays.size(), r.best.arrays.size());
  for (std::size_t i = 0; i < loaded.arrays.size(); ++i) {
    EXPECT_EQ(loaded.arrays[i].name, r.best.arrays[i].name);
    EXPECT_EQ(loaded.arrays[i].values, r.best.arrays[i].values);
  }
  const auto before = predict_batch(r.best, data).values;
  const auto after = predict_batch(loaded, data).values;
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i], after[i]);
}

TEST(Checkpoint, FileRoundTripAndBestTrainingMse) {
  const auto cfg = model::ModelConfig::toy();
  const auto data = testing::teacher_dataset(10, 8, cfg);
  const auto r = train(data, {}, cfg, quick(4));
  const std::string path = ::testing::TempDir() + "pipeline_roundtrip.ckpt";
  save_checkpoint(r.best, path);
  const auto p = predict_batch(load_checkpoint(path), data);
  ASSERT_TRUE(p.metrics.has_value());
  EXPECT_LE(p.metrics->mse, r.best.best_valid_mse + 1e-6);
  EXPECT_THROW(load_checkpoint("/nonexistent/model.ckpt"), FileUnreadable);
}

TEST(Checkpoint, VersionMismatch) {
  model::VidtaModel<float> m(model::ModelConfig::toy(), 1);
  auto c = make_checkpoint(m);
  c.format_version = 99;
  EXPECT_THROW(check_compatible(c), VersionMismatch);
  EXPECT_THROW(predict_batch(c, {}), VersionMismatch);
  c = make_checkpoint(m);
  c.feature_layout = "atoms-v0";
  EXPECT_THROW(check_compatible(c), VersionMismatch);
  c = make_checkpoint(m);
  c.residue_table_hash ^= 1;
  EXPECT_THROW(check_compatible(c), VersionMismatch);

  std::stringstream buf;
  write_checkpoint(make_checkpoint(m), buf);
  std::string text = buf.str();
  const auto at = text.find("format_version=1");
  ASSERT_NE(at, std::string::npos);
  text.replace(at, 16, "format_version=2");
  std::istringstream tampered(text);
  EXPECT_THROW(read_checkpoint(tampered), VersionMismatch);
  std::istringstream junk("not a checkpoint\n");
  EXPECT_THROW(read_checkpoint(junk), VersionMismatch);
  std::istringstream truncated(buf.str().substr(0, buf.str().size() - 10));
  EXPECT_THROW(read_checkpoint(truncated), VersionMismatch);
}

TEST(PredictBatch, EmptyAndWorkerInvariant) {
  model::VidtaModel<float> m(model::ModelConfig::toy(), 2);
  const auto c = make_checkpoint(m);
  const auto none = predict_batch(c, {});
  EXPECT_TRUE(none.values.empty());
  EXPECT_FALSE(none.metrics.has_value());
  const auto data = testing::teacher_dataset(20, 9, m.config());
  const auto one = predict_batch(c, data, 1), four = predict_batch(c, data, 4);
  EXPECT_EQ(one.values, four.values);
  EXPECT_TRUE(one.metrics.has_value());
  EXPECT_FALSE(predict_batch(c, {data[0]}).metrics.has_value());
}

TEST(CrossValidate, OneResultPerFold) {
  const auto cfg = model::ModelConfig::toy();
  const auto data = testing::teacher_dataset(9, 10, cfg);
  TrainConfig c = quick(2);
  c.folds = 3;
  std::set<std::size_t> folds_seen;
  const auto out = cross_validate(data, cfg, c, [&](std::size_t k, const EpochLog&) { folds_seen.insert(k); });
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(folds_seen.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(out[k].fold, k);
    EXPECT_EQ(out[k].training.log.size(), 2u);
  }
}

}  // namespace
}  // namespace vidta::pipeline
