#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include <lowfpr/data_model.hpp>

using namespace lowfpr;

namespace {

PredictionDataset parse_csv(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in, "inline");
}

PredictionDataset parse_jsonl(const std::string& text) {
  std::istringstream in(text);
  return read_jsonl(in, "inline");
}

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const data_error& e) {
    return e.what();
  }
  return {};
}

PredictionDataset numbered(std::size_t n) {
  PredictionDataset ds;
  ds.member_count = 1;
  for (std::size_t i = 0; i < n; ++i) {
    ds.records.push_back({"s" + std::to_string(i), i % 2 ? Label::malicious : Label::benign,
                          static_cast<Split>(i % 3), std::nullopt,
                          {static_cast<double>(i) / static_cast<double>(n)}});
  }
  return ds;
}

}  // namespace

TEST(LoadCsv, ParsesValidRows) {
  const auto ds = parse_csv(
      "sample_id,label,split,family,m0,m1\n"
      "a,0,train,,0.1,0.2\n"
      "b,1,validation,zbot,0.9,0.8\n"
      "c,1,test,,1,0\n");
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.member_count, 2u);
  EXPECT_EQ(ds.records[1].family, "zbot");
  EXPECT_FALSE(ds.records[2].family.has_value());
  EXPECT_EQ(ds.records[2].split, Split::test);
  EXPECT_EQ(ds.records[0].member_scores, (std::vector<double>{0.1, 0.2}));
}

TEST(LoadCsv, ScoreAboveOneCitesLine) {
  const auto msg = error_of([] {
    parse_csv("sample_id,label,split,family,m0\na,0,test,,0.5\nb,1,test,,1.2\n");
  });
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("m0"), std::string::npos) << msg;
}

TEST(LoadCsv, MissingHeaderColumnNamed) {
  const auto msg = error_of([] { parse_csv("sample_id,label,family,m0\na,0,,0.5\n"); });
  EXPECT_NE(msg.find("split"), std::string::npos) << msg;
}

TEST(LoadCsv, MalformedFieldsNamed) {
  EXPECT_NE(error_of([] { parse_csv("sample_id,label,split,family,m0\na,2,test,,0.5\n"); })
                .find("label"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_csv("sample_id,label,split,family,m0\na,0,dev,,0.5\n"); })
                .find("split"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_csv("sample_id,label,split,family,m0\na,0,test,,x\n"); })
                .find("not a number"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_csv("sample_id,label,split,family,m0,m1\na,0,test,,0.1\n"); })
                .find("fields"),
            std::string::npos);
}

TEST(LoadCsv, BenignFamilyRejected) {
  const auto msg =
      error_of([] { parse_csv("sample_id,label,split,family,m0\na,0,test,zbot,0.5\n"); });
  EXPECT_NE(msg.find("family"), std::string::npos) << msg;
}

TEST(LoadCsv, DuplicateIdsRejected) {
  const auto msg = error_of(
      [] { parse_csv("sample_id,label,split,family,m0\na,0,test,,0.5\na,1,test,,0.5\n"); });
  EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;
}

TEST(LoadJsonl, ParsesRows) {
  const auto ds = parse_jsonl(
      R"({"id":"a","label":0,"split":"test","family":null,"scores":[0.1,0.2,0.3]})"
      "\n"
      R"({"id":"b","label":1,"split":"train","family":"emotet","scores":[0.9,0.9,0.7]})"
      "\n");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.member_count, 3u);
  EXPECT_EQ(ds.records[1].family, "emotet");
}

TEST(LoadJsonl, InconsistentMemberCountNamesSample) {
  const auto msg = error_of([] {
    parse_jsonl(
        R"({"id":"first","label":0,"split":"test","family":null,"scores":[0.1,0.2,0.3,0.4,0.5]})"
        "\n"
        R"({"id":"second","label":1,"split":"test","family":null,"scores":[0.1,0.2,0.3,0.4]})"
        "\n");
  });
  EXPECT_NE(msg.find("'second'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
}

TEST(LoadJsonl, MissingKeyNamed) {
  const auto msg =
      error_of([] { parse_jsonl(R"({"id":"a","split":"test","scores":[0.5]})" "\n"); });
  EXPECT_NE(msg.find("label"), std::string::npos) << msg;
}

TEST(RoundTrip, CsvAndJsonlPreserveBits) {
  PredictionDataset ds;
  ds.member_count = 3;
  ds.records.push_back({"x", Label::malicious, Split::validation, "fam-1",
                        {0.1, 1.0 / 3.0, 0.999999999999}});
  ds.records.push_back({"y", Label::benign, Split::test, std::nullopt, {0.0, 1e-17, 1.0}});
  for (auto fmt : {DataFormat::csv, DataFormat::jsonl}) {
    std::stringstream buf;
    fmt == DataFormat::csv ? write_csv(buf, ds) : write_jsonl(buf, ds);
    const auto back = fmt == DataFormat::csv ? read_csv(buf) : read_jsonl(buf);
    EXPECT_EQ(back.records, ds.records);
    EXPECT_EQ(back.member_count, ds.member_count);
  }
}

TEST(FilterSplit, SelectsMatchingRows) {
  auto ds = numbered(5);
  for (std::size_t i = 0; i < 5; ++i) ds.records[i].split = i < 2 ? Split::validation : Split::test;
  EXPECT_EQ(filter_split(ds, Split::test).size(), 3u);
  EXPECT_TRUE(filter_split(ds, Split::train).empty());
  const auto once = filter_split(ds, Split::test);
  EXPECT_EQ(filter_split(once, Split::test).records, once.records);
  EXPECT_EQ(once.member_count, ds.member_count);
}

TEST(FilterSplit, SplitsPartitionTheDataset) {
  const auto ds = numbered(31);
  std::multiset<std::string> ids;
  for (auto s : {Split::train, Split::validation, Split::test}) {
    for (const auto& r : filter_split(ds, s).records) ids.insert(r.sample_id);
  }
  ASSERT_EQ(ids.size(), ds.size());
  for (const auto& r : ds.records) EXPECT_EQ(ids.count(r.sample_id), 1u);
}

TEST(Subsample, FullFractionKeepsEverything) {
  const auto ds = numbered(50);
  EXPECT_EQ(subsample(ds, 1.0, 3).records, ds.records);
}

TEST(Subsample, ExactCountAndReproducible) {
  const auto ds = numbered(1000);
  const auto a = subsample(ds, 0.1, 7);
  EXPECT_EQ(a.size(), 100u);
  EXPECT_EQ(subsample(ds, 0.1, 7).records, a.records);
  EXPECT_NE(subsample(ds, 0.1, 8).records, a.records);
}

// Half-to-even outputs enumerated by hand for exactly representable products.
TEST(Subsample, RoundHalfToEven) {
  EXPECT_EQ(subsample_size(10, 0.25), 2u);   // 2.5
  EXPECT_EQ(subsample_size(4, 0.375), 2u);   // 1.5
  EXPECT_EQ(subsample_size(4, 0.625), 2u);   // 2.5
  EXPECT_EQ(subsample_size(7, 0.5), 4u);     // 3.5
  EXPECT_EQ(subsample_size(5, 0.5), 2u);     // 2.5
  EXPECT_EQ(subsample_size(10, 0.05), 1u);   // 0.5 -> 0, kept at one
  EXPECT_EQ(subsample_size(0, 0.5), 0u);
  const auto ds = numbered(10);
  EXPECT_EQ(subsample(ds, 0.25, 1).size(), 2u);
  bool differ = false;
  for (std::uint64_t s = 2; s < 12 && !differ; ++s) {
    differ = subsample(ds, 0.25, s).records != subsample(ds, 0.25, 1).records;
  }
  EXPECT_TRUE(differ);
}

TEST(Subsample, RejectsBadFraction) {
  const auto ds = numbered(4);
  EXPECT_THROW(subsample(ds, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(subsample(ds, 1.5, 1), std::invalid_argument);
}

TEST(Subsample, SelectionIsRoughlyUniform) {
  const auto ds = numbered(20);
  std::vector<int> hits(20, 0);
  for (std::uint64_t s = 0; s < 4000; ++s) {
    for (const auto& r : subsample(ds, 0.25, s).records) ++hits[std::stoi(r.sample_id.substr(1))];
  }
  for (int h : hits) EXPECT_NEAR(h, 1000, 150);
}
