#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "sslforge/common/error.h"
#include "sslforge/tensor/gradcheck.h"
#include "sslforge/tensor/io.h"
#include "sslforge/tensor/linalg.h"
#include "sslforge/tensor/ops.h"
#include "test_util.h"

namespace sslforge {
namespace {

using testing::random_matrix;

TEST(MatmulTest, IdentityLeavesMatrixUnchanged) {
  const Tensor m = random_matrix(3, 4, 1);
  const Tensor out = matmul(Tensor::eye(3), m);
  EXPECT_EQ(out.vec(), m.vec());
}

TEST(MatmulTest, HandArithmetic) {
  const Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor b = Tensor::matrix(2, 1, {1, 1});
  const Tensor c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_DOUBLE_EQ(c[0], 3.0);
  EXPECT_DOUBLE_EQ(c[1], 7.0);
}

TEST(MatmulTest, GradientOfSumIsOnesTimesBTranspose) {
  const Tensor a = random_matrix(5, 4, 2).with_grad();
  const Tensor b = random_matrix(4, 3, 3);
  backward(sum(matmul(a, b)));
  // Finite-difference oracle for d sum(AB) / dA.
  const Tensor fd = finite_diff_grad(
      [&](const Tensor& x) { return sum(matmul(x, b)).item(); }, a.detach(), 1e-5);
  const auto g = a.grad();
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      double expected = 0.0;  // (ones * B^T)(i, k) = row sum of B row k
      for (std::size_t j = 0; j < 3; ++j) expected += b.at(k, j);
      EXPECT_NEAR(g[i * 4 + k], expected, 1e-12);
      EXPECT_NEAR(fd[i * 4 + k], expected, 1e-8);
    }
  }
}

TEST(MatmulTest, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
  }
}

TEST(NormalizeTest, UnitRowUnchanged) {
  const Tensor out = l2_normalize_rows(Tensor::matrix(1, 3, {1, 0, 0}));
  EXPECT_EQ(out.vec(), (std::vector<double>{1, 0, 0}));
}

TEST(NormalizeTest, ThreeFourFive) {
  const Tensor out = l2_normalize_rows(Tensor::matrix(1, 2, {3, 4}), 1e-12);
  EXPECT_NEAR(out[0], 0.6, 1e-15);
  EXPECT_NEAR(out[1], 0.8, 1e-15);
}

TEST(NormalizeTest, ZeroRowStaysZero) {
  const Tensor out = l2_normalize_rows(Tensor::zeros({2, 3}), 1e-12);
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(NormalizeTest, RowNormsAreOneOrBelow) {
  Tensor z = random_matrix(20, 5, 4);
  std::vector<double> v = z.vec();
  for (std::size_t j = 0; j < 5; ++j) v[3 * 5 + j] *= 1e-14;  // row below eps
  const Tensor out = l2_normalize_rows(Tensor({20, 5}, v), 1e-12);
  for (std::size_t i = 0; i < 20; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) s += out.at(i, j) * out.at(i, j);
    if (i == 3) {
      EXPECT_LE(std::sqrt(s), 1.0);
    } else {
      EXPECT_NEAR(std::sqrt(s), 1.0, 1e-14);
    }
  }
}

TEST(NormalizeTest, RejectsNonPositiveEps) {
  EXPECT_THROW(l2_normalize_rows(Tensor::zeros({1, 2}), 0.0), ParameterError);
}

TEST(SoftmaxTest, ConstantRowIsUniform) {
  for (double tau : {0.05, 1.0, 7.0}) {
    const Tensor p = softmax_rows(Tensor::filled({1, 4}, 3.3), tau);
    for (double v : p.values()) EXPECT_NEAR(v, 0.25, 1e-15);
  }
}

TEST(SoftmaxTest, TwoClassClosedForm) {
  const Tensor p = softmax_rows(Tensor::matrix(1, 2, {1, 0}), 1.0);
  const double e = std::numbers::e;
  EXPECT_NEAR(p[0], e / (e + 1), 1e-15);
  EXPECT_NEAR(p[1], 1 / (e + 1), 1e-15);
}

TEST(SoftmaxTest, LowTemperatureIsOneHot) {
  const Tensor p = softmax_rows(Tensor::matrix(1, 2, {1, 0}), 0.01);
  // e^{-100} ~ 3.7e-44
  EXPECT_NEAR(p[0], 1.0, 1e-8);
  EXPECT_NEAR(p[1], 0.0, 1e-8);
}

TEST(SoftmaxTest, RowsSumToOne) {
  const Tensor p = softmax_rows(random_matrix(16, 9, 5, 4.0), 0.3);
  for (std::size_t i = 0; i < 16; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 9; ++j) s += p.at(i, j);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(SoftmaxTest, RejectsNonPositiveTau) {
  EXPECT_THROW(softmax_rows(Tensor::zeros({1, 2}), 0.0), ParameterError);
  EXPECT_THROW(softmax_rows(Tensor::zeros({1, 2}), -1.0), ParameterError);
}

TEST(CosineTest, OrthonormalRowsGiveIdentity) {
  const Tensor a = Tensor::eye(4);
  const Tensor s = cosine_similarity_matrix(a, a);
  EXPECT_EQ(s.vec(), Tensor::eye(4).vec());
}

TEST(CosineTest, AntipodalIsMinusOne) {
  const Tensor a = Tensor::matrix(1, 3, {1, -2, 0.5});
  const Tensor b = Tensor::matrix(1, 3, {-2, 4, -1});
  EXPECT_NEAR(cosine_similarity_matrix(a, b).item(), -1.0, 1e-15);
}

TEST(CosineTest, MatchesPerEntryLoop) {
  const Tensor a = random_matrix(3, 5, 6);
  const Tensor b = random_matrix(4, 5, 7);
  const Tensor s = cosine_similarity_matrix(a, b);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t k = 0; k < 5; ++k) {
        dot += a.at(i, k) * b.at(j, k);
        na += a.at(i, k) * a.at(i, k);
        nb += b.at(j, k) * b.at(j, k);
      }
      EXPECT_NEAR(s.at(i, j), dot / (std::sqrt(na) * std::sqrt(nb)), 1e-14);
    }
  }
}

TEST(BackwardTest, SumGivesOnes) {
  const Tensor x = random_matrix(3, 3, 8).with_grad();
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(BackwardTest, SquaredNormGivesTwoX) {
  const Tensor x = random_matrix(4, 2, 9).with_grad();
  backward(sum(square(x)));
  const auto g = x.grad();
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_DOUBLE_EQ(g[i], 2.0 * x[i]);
}

TEST(BackwardTest, NonScalarIsContractError) {
  const Tensor x = random_matrix(2, 2, 10).with_grad();
  EXPECT_THROW(backward(scale(x, 2.0)), ContractError);
}

TEST(BackwardTest, SecondCallWithoutResetIsContractError) {
  const Tensor x = random_matrix(2, 2, 11).with_grad();
  const Tensor loss = sum(square(x));
  backward(loss);
  EXPECT_THROW(backward(loss), ContractError);
  reset_backward(loss);
  backward(loss);
  const auto g = x.grad();
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_DOUBLE_EQ(g[i], 2.0 * x[i]);
}

TEST(BackwardTest, UntrackedLossIsContractError) {
  EXPECT_THROW(backward(sum(Tensor::zeros({2, 2}))), ContractError);
}

TEST(BackwardTest, LeavesAccumulateAcrossGraphs) {
  const Tensor x = Tensor::parameter({1}, {3.0});
  backward(sum(x));
  backward(sum(scale(x, 2.0)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
}

TEST(FiniteDiffTest, SumGivesOnes) {
  const Tensor x = random_matrix(3, 4, 12);
  const Tensor g = finite_diff_grad([](const Tensor& t) { return sum(t).item(); }, x);
  for (double v : g.values()) EXPECT_NEAR(v, 1.0, 1e-10);
}

TEST(FiniteDiffTest, SquareAtThree) {
  const Tensor g = finite_diff_grad(
      [](const Tensor& t) { return t[0] * t[0]; }, Tensor::scalar(3.0), 1e-5);
  EXPECT_NEAR(g.item(), 6.0, 1e-9);
}

TEST(FiniteDiffTest, RejectsNonPositiveStep) {
  EXPECT_THROW(finite_diff_grad([](const Tensor&) { return 0.0; }, Tensor::scalar(1), 0.0),
               ParameterError);
}

TEST(GradCheckTest, RandomMlpMatchesFiniteDifferences) {
  const Tensor x = random_matrix(6, 5, 13);
  const Tensor w1 = random_matrix(5, 7, 14, 0.5);
  const Tensor b1 = random_matrix(1, 7, 15, 0.1);
  const Tensor w2 = random_matrix(7, 3, 16, 0.5);
  auto f = [](const std::vector<Tensor>& p) {
    const Tensor h = relu(add(matmul(p[0], p[1]), expand_rows(p[2], p[0].rows())));
    return mean(square(matmul(h, p[3])));
  };
  const auto report = check_gradients(f, {x, w1, b1, w2});
  EXPECT_LT(report.max_rel_error, 1e-4);
}

// Every differentiable primitive on random inputs (dims <= 32).
TEST(GradCheckTest, PrimitivesMatchFiniteDifferences) {
  const Tensor a = random_matrix(6, 4, 20);
  const Tensor b = random_matrix(6, 4, 21);
  const Tensor pos = add_scalar(square(random_matrix(6, 4, 22)), 0.5);
  using Fn = std::function<Tensor(const std::vector<Tensor>&)>;
  const std::vector<std::pair<const char*, Fn>> cases = {
      {"add", [](auto& p) { return sum(square(add(p[0], p[1]))); }},
      {"sub", [](auto& p) { return sum(square(sub(p[0], p[1]))); }},
      {"mul", [](auto& p) { return sum(mul(p[0], p[1])); }},
      {"div", [](auto& p) { return sum(div(p[0], add_scalar(square(p[1]), 1.0))); }},
      {"exp", [](auto& p) { return sum(exp(p[0])); }},
      {"sigmoid", [](auto& p) { return sum(sigmoid(mul(p[0], p[1]))); }},
      {"softplus", [](auto& p) { return sum(softplus(scale(p[0], 3.0))); }},
      {"transpose", [](auto& p) { return sum(square(matmul(transpose(p[0]), p[1]))); }},
      {"normalize", [](auto& p) { return sum(mul(l2_normalize_rows(p[0]), p[1])); }},
      {"softmax", [](auto& p) { return sum(mul(softmax_rows(p[0], 0.7), p[1])); }},
      {"log_softmax", [](auto& p) { return sum(mul(log_softmax_rows(p[0], 0.7), p[1])); }},
      {"cosine", [](auto& p) { return sum(square(cosine_similarity_matrix(p[0], p[1]))); }},
      {"sq_dist", [](auto& p) { return sum(sqrt(pairwise_sq_dist(p[0], p[1]))); }},
      {"col_mean", [](auto& p) { return sum(square(col_mean(mul(p[0], p[1])))); }},
      {"row_sum", [](auto& p) { return sum(square(row_sum(mul(p[0], p[1])))); }},
      {"expand_cols", [](auto& p) { return sum(mul(expand_cols(row_sum(p[0]), 4), p[1])); }},
      {"slice_concat",
       [](auto& p) {
         const std::vector<Tensor> parts = {slice_rows(p[0], 2, 5), slice_rows(p[1], 0, 2)};
         return sum(square(concat_rows(parts)));
       }},
      {"gather_pick",
       [](auto& p) {
         const std::vector<std::size_t> idx = {0, 3, 3, 5};
         const std::vector<IndexPair> e = {{0, 1}, {2, 2}, {0, 1}};
         return add(sum(square(gather_rows(p[0], idx))), sum(pick(mul(p[0], p[1]), e)));
       }},
      {"masked_lse",
       [](auto& p) {
         std::vector<std::uint8_t> mask(36, 1);
         for (std::size_t i = 0; i < 6; ++i) mask[i * 6 + i] = 0;
         return sum(masked_logsumexp_rows(matmul(p[0], transpose(p[1])), mask));
       }},
  };
  for (const auto& [name, fn] : cases) {
    const auto report = check_gradients(fn, {a, b});
    EXPECT_LT(report.max_rel_error, 1e-4) << name;
  }
  const auto rep_log = check_gradients([](auto& p) { return sum(log(p[0])); }, {pos});
  EXPECT_LT(rep_log.max_rel_error, 1e-4) << "log";
}

TEST(GradCheckTest, ConvAndPoolMatchFiniteDifferences) {
  const Tensor x = testing::random_tensor({2, 2, 5, 5}, 30);
  const Tensor w = testing::random_tensor({3, 2, 3, 3}, 31);
  const Tensor b = random_matrix(1, 3, 32);
  auto f = [](const std::vector<Tensor>& p) {
    return sum(square(global_avg_pool(conv2d(p[0], p[1], p[2], 2, 1))));
  };
  EXPECT_LT(check_gradients(f, {x, w, b}).max_rel_error, 1e-4);
}

TEST(ConvTest, MatchesDirectLoop) {
  const Tensor x = testing::random_tensor({1, 2, 6, 6}, 33);
  const Tensor w = testing::random_tensor({2, 2, 3, 3}, 34);
  const Tensor b = Tensor::matrix(1, 2, {0.5, -1.0});
  const Tensor y = conv2d(x, w, b, 2, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 3, 3}));
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t oy = 0; oy < 3; ++oy) {
      for (std::size_t ox = 0; ox < 3; ++ox) {
        double s = b[o];
        for (std::size_t c = 0; c < 2; ++c) {
          for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const long iy = long(oy * 2 + ky) - 1, ix = long(ox * 2 + kx) - 1;
              if (iy < 0 || ix < 0 || iy >= 6 || ix >= 6) continue;
              s += w[((o * 2 + c) * 3 + ky) * 3 + kx] * x[(c * 6 + iy) * 6 + ix];
            }
          }
        }
        EXPECT_NEAR(y[(o * 3 + oy) * 3 + ox], s, 1e-13);
      }
    }
  }
}

TEST(StopGradientTest, NothingFlowsBack) {
  const Tensor x = random_matrix(3, 2, 40).with_grad();
  const Tensor y = stop_gradient(x);
  EXPECT_EQ(y.vec(), x.vec());
  EXPECT_FALSE(y.requires_grad());
}

TEST(SvdValuesTest, IdentityHasUnitSpectrum) {
  const auto s = svd_values(Tensor::eye(4));
  ASSERT_EQ(s.size(), 4u);
  for (double v : s) EXPECT_NEAR(v, 1.0, 1e-14);
}

TEST(SvdValuesTest, RankOneOuterProduct) {
  const std::vector<double> u = {1, 2, -1, 0.5}, v = {3, 0, 4};
  std::vector<double> m;
  for (double ui : u) {
    for (double vj : v) m.push_back(ui * vj);
  }
  const auto s = svd_values(Tensor({4, 3}, m));
  ASSERT_EQ(s.size(), 3u);
  const double nu = std::sqrt(1 + 4 + 1 + 0.25), nv = 5.0;
  EXPECT_NEAR(s[0], nu * nv, 1e-12);
  EXPECT_NEAR(s[1], 0.0, 1e-6);
  EXPECT_NEAR(s[2], 0.0, 1e-6);
}

TEST(SvdValuesTest, FrobeniusIdentityAndOrdering) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor m = random_matrix(10, 6, 100 + seed);
    const auto s = svd_values(m);
    double s2 = 0.0, f2 = 0.0;
    for (double v : s) s2 += v * v;
    for (double v : m.values()) f2 += v * v;
    EXPECT_NEAR(s2, f2, 1e-8);
    for (std::size_t k = 1; k < s.size(); ++k) EXPECT_GE(s[k - 1], s[k]);
    for (double v : s) EXPECT_GE(v, 0.0);
  }
}

TEST(SvdValuesTest, AgreesWithEigenJacobiSvd) {
  for (auto [n, d] : {std::pair{12, 5}, std::pair{4, 9}, std::pair{16, 16}}) {
    const Tensor m = random_matrix(n, d, 7 * n + d);
    Eigen::MatrixXd em(n, d);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) em(i, j) = m.at(i, j);
    }
    const Eigen::VectorXd ref = Eigen::JacobiSVD<Eigen::MatrixXd>(em).singularValues();
    const auto s = svd_values(m);
    ASSERT_EQ(s.size(), static_cast<std::size_t>(ref.size()));
    for (std::size_t k = 0; k < s.size(); ++k) EXPECT_NEAR(s[k], ref[k], 1e-9);
  }
}

TEST(SvdValuesTest, NonFiniteIsDataError) {
  EXPECT_THROW(svd_values(Tensor::matrix(1, 2, {1.0, NAN})), DataError);
  EXPECT_THROW(svd_values(Tensor::matrix(1, 2, {INFINITY, 0.0})), DataError);
}

TEST(DeterminismTest, RepeatedCallsAreBitIdentical) {
  const Tensor z = random_matrix(12, 8, 50);
  const Tensor a1 = softmax_rows(cosine_similarity_matrix(z, z), 0.1);
  const Tensor a2 = softmax_rows(cosine_similarity_matrix(z, z), 0.1);
  EXPECT_EQ(a1.vec(), a2.vec());
  EXPECT_EQ(svd_values(z), svd_values(z));
}

TEST(TensorIoTest, DumpLayoutAndRoundTrip) {
  const Tensor t = Tensor::matrix(2, 3, {1, -2, 3.5, 0, 1e-300, -7});
  std::stringstream buf;
  write_tensor(buf, t);
  const std::string bytes = buf.str();
  ASSERT_EQ(bytes.size(), 4u + 4u + 2 * 8u + 6 * 8u);
  EXPECT_EQ(bytes.substr(0, 4), "SSLT");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 2u);  // rank, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2u);  // dim 0
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 3u);  // dim 1
  const Tensor back = read_tensor(buf);
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_EQ(back.vec(), t.vec());
}

TEST(TensorIoTest, BadMagicIsDataError) {
  std::stringstream buf("XXXX0000");
  EXPECT_THROW(read_tensor(buf), DataError);
}

}  // namespace
}  // namespace sslforge
