#include <gtest/gtest.h>

#include <set>

#include "treeview/factorization.hpp"

using namespace treeview;

namespace {

// Two blocks of 5 neurons over T samples; rows inside a block are noisy
// copies of one random signal.
ActivationMatrix planted_blocks(std::uint64_t seed, std::size_t t = 40, double noise = 0.05) {
  Rng rng(seed);
  ActivationMatrix am;
  am.values.resize(10, static_cast<Eigen::Index>(t));
  VectorXd base[2];
  for (auto& b : base) {
    b.resize(static_cast<Eigen::Index>(t));
    for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = rng.uniform(0, 1);
  }
  // interleave block membership so order matters for bookkeeping
  const int block_of[10] = {0, 1, 0, 0, 1, 1, 0, 1, 0, 1};
  for (Eigen::Index r = 0; r < 10; ++r) {
    for (Eigen::Index j = 0; j < am.values.cols(); ++j) {
      am.values(r, j) = (1.0 + 0.3 * static_cast<double>(r)) * base[block_of[r]](j) + noise * rng.uniform(-1, 1);
    }
    am.neuron_ids.push_back({static_cast<std::size_t>(r / 5), static_cast<std::size_t>(r % 5)});
  }
  for (std::size_t j = 0; j < t; ++j) am.sample_ids.push_back(std::to_string(j));
  return am;
}

const std::vector<std::size_t> kBlock0{0, 2, 3, 6, 8};

// Independent average-linkage oracle: recompute cluster-average distances
// from the raw matrix at every step.
std::vector<std::set<std::size_t>> naive_average_linkage(const MatrixXd& d, std::size_t k) {
  std::vector<std::set<std::size_t>> clusters;
  for (Eigen::Index i = 0; i < d.rows(); ++i) clusters.push_back({static_cast<std::size_t>(i)});
  while (clusters.size() > k) {
    double best = 1e300;
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        double s = 0;
        for (auto i : clusters[a]) {
          for (auto j : clusters[b]) s += d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
        s /= static_cast<double>(clusters[a].size() * clusters[b].size());
        if (s < best - 1e-12) {
          best = s;
          ba = a;
          bb = b;
        }
      }
    }
    clusters[ba].insert(clusters[bb].begin(), clusters[bb].end());
    clusters.erase(clusters.begin() + static_cast<long>(bb));
  }
  return clusters;
}

}  // namespace

TEST(CorrelationDistance, PearsonArithmetic) {
  MatrixXd rows(2, 3);
  rows << 1, 2, 3, 1, 2, 4;
  const MatrixXd d = correlation_distance(rows);
  EXPECT_NEAR(1.0 - d(0, 1), 0.98198, 1e-5);
  EXPECT_NEAR(d(0, 1), 0.01802, 1e-5);
  EXPECT_EQ(d(0, 1), d(1, 0));
  EXPECT_EQ(d(0, 0), 0.0);
}

TEST(CorrelationDistance, DuplicateAndNegation) {
  MatrixXd rows(3, 4);
  rows << 1, 5, 2, 7, 1, 5, 2, 7, -1, -5, -2, -7;
  const MatrixXd d = correlation_distance(rows);
  EXPECT_NEAR(d(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(d(0, 2), 2.0, 1e-12);
}

TEST(CorrelationDistance, DeadUnitIsUncorrelated) {
  MatrixXd rows(3, 4);
  rows << 0, 0, 0, 0, 1, 2, 3, 4, 3, 3, 3, 3;
  const MatrixXd d = correlation_distance(rows);
  EXPECT_EQ(d(0, 1), 1.0);
  EXPECT_EQ(d(0, 2), 1.0);
  EXPECT_EQ(d(0, 0), 0.0);
}

TEST(CorrelationDistance, AffineInvariance) {
  Rng rng(12);
  MatrixXd rows(6, 20);
  for (Eigen::Index i = 0; i < rows.size(); ++i) rows.data()[i] = rng.uniform(-1, 1);
  MatrixXd scaled = rows;
  for (Eigen::Index r = 0; r < rows.rows(); ++r) scaled.row(r) = rows.row(r) * (0.5 + r) + VectorXd::Constant(20, 3.0 * r).transpose();
  EXPECT_LE((correlation_distance(rows) - correlation_distance(scaled)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CorrelationDistance, RangeAndSymmetry) {
  Rng rng(2);
  MatrixXd rows(15, 9);
  for (Eigen::Index i = 0; i < rows.size(); ++i) rows.data()[i] = rng.uniform(-1, 1);
  const MatrixXd d = correlation_distance(rows);
  EXPECT_EQ(d, d.transpose());
  EXPECT_GE(d.minCoeff(), 0.0);
  EXPECT_LE(d.maxCoeff(), 2.0);
  EXPECT_EQ(d.diagonal(), VectorXd::Zero(15));
}

TEST(CorrelationDistance, FloatScalar) {
  Eigen::MatrixXf rows(2, 3);
  rows << 1, 2, 3, 1, 2, 4;
  EXPECT_NEAR(correlation_distance(rows)(0, 1), 0.01802f, 1e-5f);
}

TEST(NeuronDistance, NeedsTwoSamples) {
  ActivationMatrix am;
  am.values = MatrixXd::Ones(2, 1);
  am.neuron_ids = {{0, 0}, {0, 1}};
  am.sample_ids = {"a"};
  EXPECT_THROW(neuron_distance(am), ValidationError);
}

TEST(ClusterNeurons, PlantedBlocksRecovered) {
  const ActivationMatrix am = planted_blocks(1);
  const NeuronDistanceMatrix dm = neuron_distance(am);
  const FactorPartition fp = cluster_neurons(dm, 2);
  EXPECT_EQ(fp.num_factors, 2u);
  EXPECT_EQ(fp.members(0), kBlock0);
  EXPECT_EQ(fp.members(1), (std::vector<std::size_t>{1, 4, 5, 7, 9}));
  EXPECT_NO_THROW(fp.validate());
}

TEST(ClusterNeurons, TrivialCuts) {
  const NeuronDistanceMatrix dm = neuron_distance(planted_blocks(2));
  const FactorPartition one = cluster_neurons(dm, 1);
  EXPECT_EQ(one.sizes(), std::vector<std::size_t>{10});
  const FactorPartition all = cluster_neurons(dm, 10);
  EXPECT_EQ(all.sizes(), std::vector<std::size_t>(10, 1));
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all.assignment[i], i);
  EXPECT_THROW(cluster_neurons(dm, 0), ValidationError);
  EXPECT_THROW(cluster_neurons(dm, 11), ValidationError);
}

TEST(AverageLinkage, MatchesNaiveOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Eigen::Index n = 4 + static_cast<Eigen::Index>(rng.below(8));
    MatrixXd rows(n, 12);
    for (Eigen::Index i = 0; i < rows.size(); ++i) rows.data()[i] = rng.uniform(-1, 1);
    const MatrixXd d = correlation_distance(rows);
    const auto merges = average_linkage(d);
    ASSERT_EQ(merges.size(), static_cast<std::size_t>(n - 1));
    for (std::size_t i = 1; i < merges.size(); ++i) {
      EXPECT_GE(merges[i].distance, merges[i - 1].distance - 1e-12);  // average linkage is monotone
    }
    for (std::size_t k = 1; k <= static_cast<std::size_t>(n); ++k) {
      const auto labels = cut_dendrogram(static_cast<std::size_t>(n), merges, k);
      std::vector<std::set<std::size_t>> got(k);
      for (std::size_t i = 0; i < labels.size(); ++i) got[labels[i]].insert(i);
      auto want = naive_average_linkage(d, k);
      std::sort(want.begin(), want.end());
      std::sort(got.begin(), got.end());
      EXPECT_EQ(got, want) << "seed " << seed << " k " << k;
    }
  }
}

TEST(AverageLinkage, TiesGoToSmallestPair) {
  MatrixXd d = MatrixXd::Ones(4, 4);
  d.diagonal().setZero();
  const auto merges = average_linkage(d);
  EXPECT_EQ(merges[0].keep, 0u);
  EXPECT_EQ(merges[0].absorbed, 1u);
}

TEST(ClusterNeurons, OrderInvariantUpToRelabel) {
  const ActivationMatrix am = planted_blocks(3);
  const std::vector<Eigen::Index> perm{9, 3, 0, 7, 1, 8, 2, 6, 4, 5};
  ActivationMatrix shuffled = am;
  for (Eigen::Index r = 0; r < 10; ++r) {
    shuffled.values.row(r) = am.values.row(perm[static_cast<std::size_t>(r)]);
    shuffled.neuron_ids[static_cast<std::size_t>(r)] = am.neuron_ids[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])];
  }
  const FactorPartition a = cluster_neurons(neuron_distance(am), 2);
  const FactorPartition b = cluster_neurons(neuron_distance(shuffled), 2);
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t j = 0; j < 10; ++j) {
      const bool same_a = a.assignment[static_cast<std::size_t>(perm[i])] == a.assignment[static_cast<std::size_t>(perm[j])];
      EXPECT_EQ(b.assignment[i] == b.assignment[j], same_a);
    }
  }
}

TEST(Silhouette, BruteForceOnPlantedFixture) {
  const NeuronDistanceMatrix dm = neuron_distance(planted_blocks(4));
  std::vector<std::size_t> labels(10);
  for (std::size_t i = 0; i < 10; ++i) labels[i] = std::count(kBlock0.begin(), kBlock0.end(), i) ? 0 : 1;
  double expect = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    double a = 0, b = 0;
    for (std::size_t j = 0; j < 10; ++j) {
      if (j == i) continue;
      (labels[j] == labels[i] ? a : b) += dm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    a /= 4;
    b /= 5;
    expect += (b - a) / std::max(a, b);
  }
  expect /= 10;
  EXPECT_NEAR(silhouette_score(dm.values, labels), expect, 1e-12);
  EXPECT_GT(expect, 0.8);
}

TEST(SelectNumFactors, PlantedPicksTwo) {
  const NeuronDistanceMatrix dm = neuron_distance(planted_blocks(5));
  EXPECT_EQ(select_num_factors(dm, 2, 5), 2u);
}

TEST(SelectNumFactors, EquidistantTiesToSmallest) {
  NeuronDistanceMatrix dm;
  dm.values = MatrixXd::Ones(6, 6);
  dm.values.diagonal().setZero();
  for (std::size_t i = 0; i < 6; ++i) dm.neuron_ids.push_back({0, i});
  EXPECT_EQ(select_num_factors(dm, 2, 4), 2u);
}

TEST(SelectNumFactors, RangeValidation) {
  const NeuronDistanceMatrix dm = neuron_distance(planted_blocks(5));
  EXPECT_THROW(select_num_factors(dm, 4, 3), ValidationError);
  EXPECT_THROW(select_num_factors(dm, 2, 10), ValidationError);
}

TEST(FactorActivations, Bookkeeping) {
  const ActivationMatrix am = planted_blocks(6);
  const FactorPartition fp = cluster_neurons(neuron_distance(am), 2);
  const ActivationMatrix f0 = factor_activations(am, fp, 0);
  ASSERT_EQ(f0.num_neurons(), 5u);
  for (std::size_t r = 0; r < 5; ++r) {
    EXPECT_EQ(f0.values.row(static_cast<Eigen::Index>(r)), am.values.row(static_cast<Eigen::Index>(kBlock0[r])));
    EXPECT_EQ(f0.neuron_ids[r], am.neuron_ids[kBlock0[r]]);
  }
  const FactorPartition whole = cluster_neurons(neuron_distance(am), 1);
  EXPECT_EQ(factor_activations(am, whole, 0).values, am.values);
  const FactorPartition singles = cluster_neurons(neuron_distance(am), 10);
  EXPECT_EQ(factor_activations(am, singles, 3).values.rows(), 1);
  EXPECT_THROW(factor_activations(am, fp, 2), ValidationError);
}
