#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "gradcheck.hpp"
#include "oodp/objective.hpp"

using namespace oodp;
using namespace oodp::objective;
using oodp::testing::max_rel_error;
using oodp::testing::random_masks;

namespace {

data::ProposalMask make_proposal(int h, int w, std::initializer_list<int> on) {
  data::ProposalMask p{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w), 0)};
  for (int i : on) p.bits[static_cast<std::size_t>(i)] = 1;
  return p;
}

}  // namespace

TEST(TotalLoss, AllZeroIsZero) {
  auto minus = LossBundle::make(Variant::WithoutProposal);
  minus.reconstruction = minus.consistency = minus.background = 0.0;
  EXPECT_EQ(total_loss(minus), 0.0);
  auto plus = LossBundle::make(Variant::WithProposal);
  plus.proposal = 0.0;
  EXPECT_EQ(total_loss(plus), 0.0);
}

TEST(TotalLoss, WeightedExamples) {
  auto minus = LossBundle::make(Variant::WithoutProposal);
  minus.prediction = 0.01;
  minus.reconstruction = minus.consistency = minus.background = 0.0;
  EXPECT_NEAR(total_loss(minus), 1.0, 1e-12);
  auto plus = LossBundle::make(Variant::WithProposal);
  plus.proposal = 0.5;
  EXPECT_NEAR(total_loss(plus), 0.5, 1e-12);
}

TEST(TotalLoss, VariantWeights) {
  const auto m = LossWeights::for_variant(Variant::WithoutProposal);
  EXPECT_EQ(m.prediction, 100);
  EXPECT_EQ(m.entropy, 0.1);
  EXPECT_EQ(m.reconstruction, 100);
  EXPECT_EQ(m.consistency, 1);
  EXPECT_EQ(m.background, 1);
  const auto p = LossWeights::for_variant(Variant::WithProposal);
  EXPECT_EQ(p.prediction, 10);
  EXPECT_EQ(p.entropy, 1);
  EXPECT_EQ(p.proposal, 1);
}

TEST(TotalLoss, LinearInEachComponent) {
  const auto base = [] {
    auto b = LossBundle::make(Variant::WithoutProposal);
    b.highway = 0.3, b.prediction = 0.2, b.entropy = 1.1;
    b.reconstruction = 0.05, b.consistency = 0.7, b.background = 0.4;
    return b;
  }();
  const double t0 = total_loss(base);
  struct Probe {
    double LossBundle::*plain;
    std::optional<double> LossBundle::*opt;
    double weight;
  };
  const auto& w = base.weights;
  const std::vector<Probe> probes{{&LossBundle::highway, nullptr, 1.0},
                                  {&LossBundle::prediction, nullptr, w.prediction},
                                  {&LossBundle::entropy, nullptr, w.entropy},
                                  {nullptr, &LossBundle::reconstruction, w.reconstruction},
                                  {nullptr, &LossBundle::consistency, w.consistency},
                                  {nullptr, &LossBundle::background, w.background}};
  for (const auto& pr : probes) {
    auto b = base;
    if (pr.plain) b.*pr.plain += 1.0;
    else *(b.*pr.opt) += 1.0;
    EXPECT_NEAR(total_loss(b) - t0, pr.weight, 1e-9);
  }
}

TEST(TotalLoss, NegativeOrNonFiniteThrows) {
  auto b = LossBundle::make(Variant::WithoutProposal);
  b.reconstruction = b.consistency = b.background = 0.0;
  auto neg = b;
  neg.prediction = -1e-9;
  EXPECT_THROW(total_loss(neg), LossInvariantError);
  auto nan = b;
  nan.consistency = std::nan("");
  EXPECT_THROW(total_loss(nan), LossInvariantError);
  auto missing = LossBundle::make(Variant::WithoutProposal);
  EXPECT_THROW(total_loss(missing), LossInvariantError);
  EXPECT_THROW(total_loss(LossBundle::make(Variant::WithProposal)), LossInvariantError);
}

TEST(TotalLoss, WithProposalIgnoresAuxiliaryFields) {
  auto b = LossBundle::make(Variant::WithProposal);
  b.prediction = 0.1, b.entropy = 0.2, b.proposal = 0.3;
  const double clean = total_loss(b);
  b.reconstruction = -5.0;
  b.consistency = std::nan("");
  b.background = 1e9;
  EXPECT_EQ(total_loss(b), clean);
  EXPECT_NEAR(clean, 10 * 0.1 + 1 * 0.2 + 1 * 0.3, 1e-12);
}

TEST(ParseVariant, AcceptsShortAndLongNames) {
  EXPECT_EQ(parse_variant("+p"), Variant::WithProposal);
  EXPECT_EQ(parse_variant("with-proposal"), Variant::WithProposal);
  EXPECT_EQ(parse_variant("-p"), Variant::WithoutProposal);
  EXPECT_EQ(parse_variant("without-proposal"), Variant::WithoutProposal);
  EXPECT_EQ(parse_variant(to_string(Variant::WithProposal)), Variant::WithProposal);
  EXPECT_THROW(parse_variant("p"), std::invalid_argument);
}

TEST(ProposalLoss, ExactMatchIsZero) {
  const auto prop = make_proposal(4, 5, {3, 7, 8});
  Tensor<double> masks(1, 2, 4, 5);
  masks.plane(0, 0)[3] = 0.25, masks.plane(0, 1)[3] = 0.75;
  masks.plane(0, 0)[7] = 1.0;
  masks.plane(0, 1)[8] = 1.0;
  const std::vector<data::ProposalMask> props{prop};
  EXPECT_EQ(proposal_loss<double>(masks, props).value, 0.0);
}

TEST(ProposalLoss, EmptyProposalAndEmptyMasksIsZero) {
  const std::vector<data::ProposalMask> props{make_proposal(3, 3, {})};
  EXPECT_EQ(proposal_loss<double>(Tensor<double>(1, 1, 3, 3), props).value, 0.0);
}

TEST(ProposalLoss, EmptyProposalReducesToNegativeTerm) {
  Tensor<double> masks(1, 1, 2, 2);
  masks[0] = 0.5;
  const std::vector<data::ProposalMask> props{make_proposal(2, 2, {})};
  EXPECT_NEAR(proposal_loss<double>(masks, props).value, 0.25 / 4, 1e-15);
}

TEST(ProposalLoss, MissedPositiveAmongNinetyNineNegatives) {
  // One positive pixel of 100 weighs 99 / 1; the masks miss it and match the rest.
  const std::vector<data::ProposalMask> props{make_proposal(10, 10, {42})};
  EXPECT_NEAR(proposal_loss<double>(Tensor<double>(1, 1, 10, 10), props).value, 99.0 / 100.0, 1e-12);
}

TEST(ProposalLoss, BatchMeanAndShapeChecks) {
  Tensor<double> masks(2, 1, 10, 10);
  const std::vector<data::ProposalMask> props{make_proposal(10, 10, {42}), make_proposal(10, 10, {})};
  EXPECT_NEAR(proposal_loss<double>(masks, props).value, 99.0 / 200.0, 1e-12);
  const std::vector<data::ProposalMask> one{make_proposal(10, 10, {})};
  EXPECT_THROW(proposal_loss<double>(masks, one), ShapeError);
  const std::vector<data::ProposalMask> wrong{make_proposal(10, 9, {}), make_proposal(10, 9, {})};
  EXPECT_THROW(proposal_loss<double>(masks, wrong), ShapeError);
}

TEST(ProposalLoss, Gradient) {
  std::mt19937_64 rng(2);
  Tensor<double> masks = random_masks({2, 3, 6, 6}, rng);
  const std::vector<data::ProposalMask> props{make_proposal(6, 6, {0, 1, 6, 7, 20}), make_proposal(6, 6, {35})};
  const auto l = proposal_loss<double>(masks, props);
  auto f = [&] { return proposal_loss<double>(masks, props).value; };
  EXPECT_LT(max_rel_error(masks.span(), l.grad.span(), f), 1e-3);
}

TEST(TrainLogWriter, WritesHeaderAndBlankUnusedColumns) {
  const auto path = std::filesystem::temp_directory_path() / "oodp_test_train_log.csv";
  {
    TrainLogWriter log(path);
    auto b = LossBundle::make(Variant::WithProposal);
    b.highway = 0.5, b.prediction = 0.1, b.entropy = 0.25, b.proposal = 0.125;
    log.write(7, b);
  }
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "step,highway,prediction,entropy,reconstruction,consistency,background,proposal,total");
  EXPECT_EQ(row, "7,0.5,0.1,0.25,,,,0.125,1.875");
  std::filesystem::remove(path);
}
