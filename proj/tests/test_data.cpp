#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "l2lws/data.hpp"
#include "l2lws/embeddings.hpp"
#include "l2lws/errors.hpp"

using namespace l2lws;
using data::Vocabulary;

namespace {

data::Dataset parse(const std::string& text, bool mask = false) {
  std::istringstream in(text);
  data::LoadOptions options;
  options.mask = mask;
  return data::parse_jsonl(in, options, "test.jsonl");
}

data::Instance sentence(std::vector<std::string> tokens) {
  data::Instance inst;
  inst.tokens = std::move(tokens);
  return inst;
}

data::SyntheticTaskSpec small_spec() {
  data::SyntheticTaskSpec spec;
  spec.u_size = 2000;
  spec.v_size = 200;
  spec.val_size = 200;
  spec.test_size = 300;
  spec.seed = 4;
  return spec;
}

}  // namespace

TEST(Jsonl, EmptyInputGivesEmptyDataset) { EXPECT_TRUE(parse("").empty()); }

TEST(Jsonl, ThreeLinesInOrder) {
  const auto ds = parse(
      R"({"id": "a", "tokens": ["x", "y"], "label": "positive"}
{"id": "b", "text": "some  words here", "weak": [0.2, 0.3, 0.5]}

{"id": "c", "tokens": ["z"], "label": "neutral", "weak": [0, 0, 1]}
)");
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds[0].id, "a");
  EXPECT_EQ(ds[0].true_label, 0u);
  EXPECT_FALSE(ds[0].weak_label.has_value());
  EXPECT_EQ(ds[1].tokens, (std::vector<std::string>{"some", "words", "here"}));
  EXPECT_FALSE(ds[1].true_label.has_value());
  EXPECT_EQ(ds[1].weak_label->probs[2], 0.5);
  EXPECT_EQ(ds[2].true_label, 2u);
}

TEST(Jsonl, MalformedLineReportsLineNumber) {
  try {
    parse("{\"tokens\": [\"a\"]}\n{not json\n");
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("test.jsonl:2"), std::string::npos) << e.what();
  }
}

TEST(Jsonl, UnknownLabelIsRejectedWithLineNumber) {
  try {
    parse("{\"tokens\": [\"a\"], \"label\": \"angry\"}\n");
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("test.jsonl:1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("angry"), std::string::npos) << msg;
  }
}

TEST(Jsonl, RoundTripsThroughWriter) {
  const auto ds = parse(
      R"({"id": "a", "tokens": ["x", "y"], "label": "negative", "weak": [0.1, 0.8, 0.1]})"
      "\n");
  std::ostringstream out;
  data::write_jsonl(out, ds, data::LabelSet{});
  std::istringstream in(out.str());
  const auto back = data::parse_jsonl(in, {});
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].id, "a");
  EXPECT_EQ(back[0].tokens, ds[0].tokens);
  EXPECT_EQ(back[0].true_label, 1u);
  EXPECT_EQ(back[0].weak_label->probs, ds[0].weak_label->probs);
}

TEST(Masking, UrlsAndMentions) {
  EXPECT_EQ(data::mask_token("http://x.co"), "<url>");
  EXPECT_EQ(data::mask_token("https://example.org/a"), "<url>");
  EXPECT_EQ(data::mask_token("www.site.com"), "<url>");
  EXPECT_EQ(data::mask_token("@someone"), "<user>");
  EXPECT_EQ(data::mask_token("@"), "@");
  EXPECT_EQ(data::mask_token("http"), "http");
  EXPECT_EQ(data::mask_token("great"), "great");
}

TEST(Masking, AppliedOnlyWhenRequested) {
  const std::string line = R"({"tokens": ["@bob", "see", "http://x.co"]})";
  EXPECT_EQ(parse(line)[0].tokens[0], "@bob");
  const auto masked = parse(line, true)[0].tokens;
  EXPECT_EQ(masked, (std::vector<std::string>{"<user>", "see", "<url>"}));
}

TEST(Requirements, FailFastOnMissingLabels) {
  data::Dataset ds{sentence({"a"})};
  EXPECT_THROW(data::require_weak_labels(ds, 3), ValidationError);
  EXPECT_THROW(data::require_true_labels(ds, 3), ValidationError);
  ds[0].true_label = 1;
  EXPECT_NO_THROW(data::require_true_labels(ds, 3));
  EXPECT_THROW(data::require_both_labels(ds, 3), ValidationError);
  ds[0].weak_label = weak::one_hot(1, 3);
  EXPECT_NO_THROW(data::require_both_labels(ds, 3));
  EXPECT_THROW(data::require_weak_labels(ds, 4), ValidationError);
  ds[0].true_label = 5;
  EXPECT_THROW(data::require_true_labels(ds, 3), ValidationError);
}

TEST(Vocab, ReservedEntriesFirst) {
  const Vocabulary vocab;
  EXPECT_EQ(vocab.size(), 2u);
  EXPECT_EQ(vocab.index_of("anything"), Vocabulary::kUnk);
  EXPECT_EQ(vocab.token(Vocabulary::kPad), "<pad>");
}

TEST(Vocab, MinCountOneKeepsEverything) {
  const std::vector<data::Instance> corpus{sentence({"a", "b"})};
  const auto vocab = Vocabulary::build(corpus, 1);
  EXPECT_EQ(vocab.size(), 4u);
  EXPECT_TRUE(vocab.find("a").has_value());
  EXPECT_TRUE(vocab.find("b").has_value());
}

TEST(Vocab, OrderedByCountThenLexicographically) {
  const std::vector<data::Instance> corpus{sentence({"pear", "fig", "apple", "fig"}),
                                           sentence({"pear", "kiwi", "date"})};
  const auto vocab = Vocabulary::build(corpus, 1);
  const std::vector<std::string> expected{"<pad>", "<unk>", "fig", "pear", "apple", "date", "kiwi"};
  EXPECT_EQ(vocab.tokens(), expected);
  const auto pruned = Vocabulary::build(corpus, 2);
  EXPECT_EQ(pruned.size(), 4u);
  EXPECT_EQ(pruned.index_of("apple"), Vocabulary::kUnk);
}

TEST(Vocab, DeterministicAndBijective) {
  const auto syn = data::generate_synthetic(small_spec());
  const auto a = Vocabulary::build(syn.u);
  const auto b = Vocabulary::build(syn.u);
  EXPECT_EQ(a.tokens(), b.tokens());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.index_of(a.token(i)), i);
}

TEST(Vocab, EncodePadsToMinimumLength) {
  const auto vocab = Vocabulary::from_tokens({"a", "b"});
  const std::vector<std::string> tokens{"b", "zzz"};
  EXPECT_EQ(vocab.encode(tokens, 4), (std::vector<std::size_t>{3, 1, 0, 0}));
  EXPECT_EQ(vocab.encode(tokens, 1), (std::vector<std::size_t>{3, 1}));
}

TEST(Synthetic, NoFlipsMeansWeakMatchesTruth) {
  auto spec = small_spec();
  spec.flip_prob = 0.0;
  const auto syn = data::generate_synthetic(spec);
  for (const auto& inst : syn.v) {
    EXPECT_EQ(inst.weak_label->argmax(), *inst.true_label);
    EXPECT_NEAR(weak::confidence_target(*inst.true_label, inst.weak_label->probs).value,
                1.0 - (4.0 / 9.0) * (1.0 - spec.soft_mix), 1e-12);
  }
  for (std::size_t i = 0; i < syn.u.size(); ++i)
    EXPECT_EQ(syn.u[i].weak_label->argmax(), syn.u_hidden_labels[i]);
}

TEST(Synthetic, HardOneHotWithoutFlipsHasUnitConfidence) {
  auto spec = small_spec();
  spec.flip_prob = 0.0;
  spec.soft_mix = 1.0;
  for (const auto& inst : data::generate_synthetic(spec).v)
    EXPECT_DOUBLE_EQ(weak::confidence_target(*inst.true_label, inst.weak_label->probs).value, 1.0);
}

TEST(Synthetic, AlwaysFlipNeverMatches) {
  auto spec = small_spec();
  spec.flip_prob = 1.0;
  const auto syn = data::generate_synthetic(spec);
  for (const auto& inst : syn.v) EXPECT_NE(inst.weak_label->argmax(), *inst.true_label);
  for (std::size_t i = 0; i < syn.u.size(); ++i)
    EXPECT_NE(syn.u[i].weak_label->argmax(), syn.u_hidden_labels[i]);
}

TEST(Synthetic, EmpiricalFlipRate) {
  auto spec = small_spec();
  spec.u_size = 10000;
  spec.flip_prob = 0.3;
  const auto syn = data::generate_synthetic(spec);
  std::size_t flips = 0;
  for (std::size_t i = 0; i < syn.u.size(); ++i)
    flips += syn.u[i].weak_label->argmax() != syn.u_hidden_labels[i];
  const double rate = static_cast<double>(flips) / syn.u.size();
  EXPECT_GE(rate, 0.29);
  EXPECT_LE(rate, 0.31);
}

TEST(Synthetic, SplitsCarryTheRightLabelsAndAreDisjoint) {
  const auto syn = data::generate_synthetic(small_spec());
  EXPECT_EQ(syn.u.size(), 2000u);
  EXPECT_EQ(syn.v.size(), 200u);
  EXPECT_EQ(syn.val.size(), 200u);
  EXPECT_EQ(syn.test.size(), 300u);
  for (const auto& inst : syn.u) EXPECT_FALSE(inst.true_label.has_value());
  EXPECT_NO_THROW(data::require_weak_labels(syn.u, 3));
  EXPECT_NO_THROW(data::require_both_labels(syn.v, 3));
  EXPECT_NO_THROW(data::require_true_labels(syn.test, 3));
  std::set<std::string> ids;
  for (const auto* split : {&syn.u, &syn.v, &syn.val, &syn.test})
    for (const auto& inst : *split) EXPECT_TRUE(ids.insert(inst.id).second) << inst.id;
}

TEST(Synthetic, PureFunctionOfSpec) {
  const auto a = data::generate_synthetic(small_spec());
  const auto b = data::generate_synthetic(small_spec());
  std::ostringstream sa, sb;
  data::write_jsonl(sa, a.u, {});
  data::write_jsonl(sa, a.test, {});
  data::write_jsonl(sb, b.u, {});
  data::write_jsonl(sb, b.test, {});
  EXPECT_EQ(sa.str(), sb.str());
  auto other = small_spec();
  other.seed = 5;
  std::ostringstream sc;
  data::write_jsonl(sc, data::generate_synthetic(other).u, {});
  data::write_jsonl(sc, a.test, {});
  EXPECT_NE(sa.str(), sc.str());
}

TEST(Synthetic, InvalidSpecIsConfigError) {
  auto spec = small_spec();
  spec.flip_prob = 1.5;
  EXPECT_THROW(data::generate_synthetic(spec), ConfigError);
  spec = small_spec();
  spec.flip_prob = -0.1;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = small_spec();
  spec.min_length = 10;
  spec.max_length = 5;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Encode, MapsTokensAndLabels) {
  const auto syn = data::generate_synthetic(small_spec());
  const auto vocab = Vocabulary::build(syn.u);
  const auto enc = data::encode_dataset(syn.v, vocab, 5);
  ASSERT_EQ(enc.size(), syn.v.size());
  for (std::size_t i = 0; i < enc.size(); ++i) {
    EXPECT_GE(enc[i].tokens.size(), 5u);
    EXPECT_EQ(enc[i].true_label, syn.v[i].true_label);
    EXPECT_EQ(*enc[i].weak, syn.v[i].weak_label->probs);
  }
}

TEST(CooccurrenceEmbeddings, ShapeScaleAndReservedRows) {
  auto spec = small_spec();
  spec.vocab_size = 400;
  const auto syn = data::generate_synthetic(spec);
  const auto vocab = Vocabulary::build(syn.u);
  const std::size_t dim = 8;
  const auto table = data::cooccurrence_embeddings(syn.u, vocab, dim);
  ASSERT_EQ(table.size(), vocab.size() * dim);
  for (std::size_t d = 0; d < 2 * dim; ++d) EXPECT_EQ(table[d], 0.0);
  double largest = 0.0;
  for (double v : table) largest = std::max(largest, std::abs(v));
  EXPECT_NEAR(largest, 0.5, 1e-12);
  EXPECT_EQ(table, data::cooccurrence_embeddings(syn.u, vocab, dim));
}

TEST(CooccurrenceEmbeddings, TokensSharingContextsAreCloser) {
  // "a" and "b" always appear alongside "x"; "c" only alongside "y".
  std::vector<data::Instance> corpus;
  for (int i = 0; i < 30; ++i) {
    corpus.push_back(sentence({"a", "x", "p"}));
    corpus.push_back(sentence({"b", "x", "p"}));
    corpus.push_back(sentence({"c", "y", "q"}));
  }
  const auto vocab = Vocabulary::build(corpus, 1);
  const std::size_t dim = 3;
  const auto t = data::cooccurrence_embeddings(corpus, vocab, dim);
  auto row = [&](std::string_view tok) {
    const std::size_t r = vocab.index_of(tok);
    return std::vector<double>(t.begin() + r * dim, t.begin() + (r + 1) * dim);
  };
  auto cosine = [](const std::vector<double>& u, const std::vector<double>& v) {
    double uv = 0, uu = 0, vv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      uv += u[i] * v[i];
      uu += u[i] * u[i];
      vv += v[i] * v[i];
    }
    return uv / std::sqrt(uu * vv + 1e-300);
  };
  EXPECT_GT(cosine(row("a"), row("b")), cosine(row("a"), row("c")) + 0.5);
}
