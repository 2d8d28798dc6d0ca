#include <cmath>
#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "fairmargin/data.hpp"
#include "fairmargin/error.hpp"
#include "fairmargin/textio.hpp"

namespace fairmargin {
namespace {

SyntheticSpec two_group_spec(std::uint64_t seed = 3) {
  SyntheticSpec spec;
  spec.groups = {GroupSpec{"light", 3, 0.1, 10}, GroupSpec{"dark", 2, 0.4, 6}};
  spec.input_dim = 5;
  spec.prototype_separation = 0.6;
  spec.seed = seed;
  return spec;
}

std::set<ClassId> classes_of(const std::vector<LabeledSample>& samples) {
  std::set<ClassId> out;
  for (const auto& s : samples) out.insert(s.class_id);
  return out;
}

TEST(Generate, DeterministicAndShaped) {
  const auto a = generate(two_group_spec());
  EXPECT_EQ(a, generate(two_group_spec()));
  EXPECT_NE(a, generate(two_group_spec(4)));
  EXPECT_EQ(a.size(), 3u * 10 + 2u * 6);
  EXPECT_EQ(class_count(a), 5u);
  for (const auto& s : a) {
    EXPECT_EQ(s.input.size(), 5u);
    const bool light = s.class_id < 3;
    EXPECT_EQ(s.attributes.at("group:light"), light ? 1.0 : -1.0);
    EXPECT_EQ(s.attributes.at("group:dark"), light ? -1.0 : 1.0);
  }
}

TEST(Generate, TinySigmaCollapsesToPrototype) {
  SyntheticSpec spec = two_group_spec();
  for (auto& g : spec.groups) g.noise_sigma = 1e-9;
  const auto samples = generate(spec);
  for (const auto& s : samples) {
    const auto& first = *std::find_if(samples.begin(), samples.end(), [&](const auto& o) {
      return o.class_id == s.class_id;
    });
    for (std::size_t k = 0; k < s.input.size(); ++k) EXPECT_NEAR(s.input[k], first.input[k], 1e-7);
    EXPECT_NEAR(l2_norm(s.input), 1.0, 1e-7);
  }
}

TEST(Generate, PrototypesRespectSeparation) {
  SyntheticSpec spec = two_group_spec();
  for (auto& g : spec.groups) g.noise_sigma = 1e-12;
  const auto samples = generate(spec);
  std::vector<Vector> protos(5);
  for (const auto& s : samples) protos[static_cast<std::size_t>(s.class_id)] = s.input;
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = i + 1; j < 5; ++j) {
      EXPECT_GE(std::acos(dot(protos[i], protos[j]) / l2_norm(protos[i]) / l2_norm(protos[j])),
                0.6 - 1e-9);
    }
  }
}

TEST(Generate, Errors) {
  SyntheticSpec spec = two_group_spec();
  spec.groups.clear();
  EXPECT_THROW(generate(spec), Error);
  spec = two_group_spec();
  spec.groups[0].noise_sigma = 0.0;
  try {
    generate(spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSpecInvalid);
  }
  spec = two_group_spec();
  spec.input_dim = 2;
  spec.prototype_separation = 3.0;
  try {
    generate(spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPrototypePlacementFailed);
  }
}

TEST(Split, NineToOne) {
  SyntheticSpec spec;
  spec.groups = {GroupSpec{"g", 4, 0.1, 10}};
  spec.input_dim = 3;
  const auto samples = generate(spec);
  const DatasetSplit s = split(samples, 0.9, 1);
  EXPECT_EQ(s.train.size(), 36u);
  EXPECT_EQ(s.val.size(), 4u);
  for (ClassId c = 0; c < 4; ++c) {
    EXPECT_EQ(std::count_if(s.val.begin(), s.val.end(),
                            [&](const auto& x) { return x.class_id == c; }),
              1);
  }
}

TEST(Split, HalfOfTwo) {
  SyntheticSpec spec;
  spec.groups = {GroupSpec{"g", 3, 0.1, 2}};
  spec.input_dim = 3;
  const DatasetSplit s = split(generate(spec), 0.5, 2);
  EXPECT_EQ(s.train.size(), 3u);
  EXPECT_EQ(s.val.size(), 3u);
}

TEST(Split, DeterministicStratifiedAndPartitioning) {
  const auto samples = generate(two_group_spec());
  for (double ratio : {0.1, 0.5, 0.9, 0.99}) {
    const DatasetSplit a = split(samples, ratio, 9);
    const DatasetSplit b = split(samples, ratio, 9);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.val, b.val);
    EXPECT_EQ(classes_of(a.train), classes_of(samples));
    EXPECT_EQ(classes_of(a.val), classes_of(samples));
    std::set<std::string> ids;
    for (const auto& s : a.train) ids.insert(s.id);
    for (const auto& s : a.val) ids.insert(s.id);
    EXPECT_EQ(ids.size(), samples.size());
  }
}

TEST(Split, ClassTooSmall) {
  auto samples = generate(two_group_spec());
  samples.push_back(LabeledSample{"lonely", 9, {}, Vector(5, 1.0)});
  try {
    split(samples, 0.9, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kClassTooSmall);
  }
}

TEST(DatasetText, RoundTrip) {
  const auto samples = generate(two_group_spec());
  const std::string text = dataset_to_text(samples);
  const auto back = dataset_from_text(text);
  EXPECT_EQ(back, samples);
  EXPECT_EQ(dataset_to_text(back), text);
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "id,class,attr:group:dark,attr:group:light,x0,x1,x2,x3,x4");
}

TEST(DatasetText, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "fm_data_test.csv").string();
  const auto samples = generate(two_group_spec());
  save_dataset(samples, path);
  EXPECT_EQ(load_dataset(path), samples);
  std::filesystem::remove(path);
}

TEST(DatasetText, TruncatedFileNamesLine) {
  const std::string text = dataset_to_text(generate(two_group_spec()));
  const std::string cut = text.substr(0, text.size() - 20);
  try {
    dataset_from_text(cut);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
    EXPECT_NE(std::string(e.what()).find("line 43"), std::string::npos) << e.what();
  }
}

TEST(DatasetText, ExtraAttributeColumnPreserved) {
  const std::string text =
      "id,class,attr:age,attr:smile,x0,x1\n"
      "a,0,0.25,,1,2\n"
      "b,1,-0.5,1,3,4\n";
  const auto samples = dataset_from_text(text);
  ASSERT_EQ(samples.size(), 2u);
  EXPECT_EQ(samples[0].attributes.at("age"), 0.25);
  EXPECT_EQ(samples[0].attributes.count("smile"), 0u);
  EXPECT_EQ(samples[1].attributes.at("smile"), 1.0);
  EXPECT_EQ(dataset_to_text(samples), text);
}

TEST(DatasetText, SchemaErrors) {
  try {
    dataset_from_text("id,label,x0\na,0,1\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchemaMismatch);
  }
  EXPECT_THROW(dataset_from_text("id,class,x0,y1\na,0,1,2\n"), Error);
  EXPECT_THROW(dataset_from_text("id,class,x0\na,zero,1\n"), Error);
  EXPECT_THROW(dataset_from_text("id,class,x0\na,0,1\na,0,2\n"), Error);
}

TEST(DatasetText, AttributeValuesSurviveExactly) {
  std::vector<LabeledSample> samples;
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    samples.push_back(LabeledSample{"s" + std::to_string(i), i % 3,
                                    {{"age", rng.uniform(-1.0, 1.0)}},
                                    {rng.normal(), rng.normal() * 1e-300}});
  }
  EXPECT_EQ(dataset_from_text(dataset_to_text(samples)), samples);
}

TEST(EmbeddingText, UnitRowsUnchangedOthersNormalized) {
  const std::vector<EmbeddingRecord> records{
      {"a", 0, {{"g", 1.0}}, {0.6, 0.8}},
      {"b", 1, {{"g", -1.0}}, {3.0, 4.0}},
  };
  const auto back = embeddings_from_text(embeddings_to_text(records));
  EXPECT_EQ(back[0], records[0]);
  EXPECT_DOUBLE_EQ(back[1].embedding[0], 0.6);
  EXPECT_DOUBLE_EQ(back[1].embedding[1], 0.8);
}

TEST(EmbeddingText, RoundTripIsByteExact) {
  Rng rng(5);
  std::vector<EmbeddingRecord> records;
  for (int i = 0; i < 30; ++i) {
    Vector e(6);
    for (double& v : e) v = rng.normal();
    records.push_back({"r" + std::to_string(i), i % 4, {{"x", rng.uniform()}}, l2_normalize(e)});
  }
  const std::string text = embeddings_to_text(records);
  EXPECT_EQ(embeddings_to_text(embeddings_from_text(text)), text);
}

TEST(EmbeddingText, ZeroRowIsParseError) {
  try {
    embeddings_from_text("id,class,e0,e1\na,0,0.6,0.8\nb,0,0,0\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("ZeroVector"), std::string::npos);
  }
}

TEST(TextIo, DoubleFormatRoundTrips) {
  Rng rng(6);
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-300.0, 300.0));
    EXPECT_EQ(textio::parse_double(textio::format_double(v), "v"), v);
  }
  EXPECT_THROW(textio::parse_double("1.5x", "v"), Error);
  EXPECT_THROW(textio::parse_double("nan", "v"), Error);
}

}  // namespace
}  // namespace fairmargin
