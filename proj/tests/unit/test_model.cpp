#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <string>

#include "kesten/errors.hpp"
#include "kesten/model.hpp"

using namespace kesten;

namespace {

Matrix m2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

Scenario make(std::vector<MatrixAtom> atoms, VectorLaw eta, int dim = 2) {
  Scenario sc;
  sc.dim = dim;
  sc.mu = MatrixLaw::finite(std::move(atoms));
  sc.eta = std::move(eta);
  return sc;
}

const char* kScalar = R"({
  "dim": 1, "N": 2,
  "mu": {"atoms": [{"matrix": [[0.00390625]], "p": 0.9}, {"matrix": [[16.0]], "p": 0.1}]},
  "eta": {"generator": "point", "params": {"value": [1.0]}},
  "s1": 0.5, "s2": 0.54, "seed": 7
})";

std::string with(const std::string& text, const std::string& from, const std::string& to) {
  std::string s = text;
  s.replace(s.find(from), from.size(), to);
  return s;
}

}  // namespace

TEST(SampleMatrix, PointMassAlwaysSame) {
  const Matrix a = m2(1, 2, 3, 4);
  const MatrixLaw mu = MatrixLaw::finite({{PositiveMatrix(a), 1.0}});
  Stream rng(1);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(sample_matrix(mu, rng).matrix(), a);
}

TEST(SampleMatrix, AtomFrequencyWithinBinomialBand) {
  const MatrixLaw mu = MatrixLaw::finite({{PositiveMatrix(m2(1, 0, 0, 1)), 0.5}, {PositiveMatrix(m2(2, 0, 0, 2)), 0.5}});
  Stream rng(2);
  const int n = 1000000;
  int first = 0;
  for (int i = 0; i < n; ++i) first += mu.sample_atom(rng) == 0;
  EXPECT_NEAR(static_cast<double>(first) / n, 0.5, 3.0 * std::sqrt(0.25 / n));
}

TEST(SampleMatrix, Replay) {
  const MatrixLaw mu = MatrixLaw::lognormal_entries(m2(1, 0.5, 0.5, 1), 0.3);
  Stream a(9), b(9);
  for (int i = 0; i < 50; ++i) ASSERT_EQ(mu.sample(a).matrix(), mu.sample(b).matrix());
}

TEST(SampleVector, PointAndUniformMean) {
  Vector one(2);
  one << 1, 1;
  Stream rng(3);
  EXPECT_EQ(sample_vector(VectorLaw::point(one), rng), one);

  const VectorLaw u = VectorLaw::product({Uniform1D{0, 1}, Uniform1D{0, 1}});
  const int n = 1000000;
  Vector sum = Vector::Zero(2);
  for (int i = 0; i < n; ++i) sum += sample_vector(u, rng);
  const double se = std::sqrt(1.0 / 12.0 / n);
  EXPECT_NEAR(sum(0) / n, 0.5, 3 * se);
  EXPECT_NEAR(sum(1) / n, 0.5, 3 * se);
}

TEST(SampleVector, Replay) {
  const VectorLaw eta = VectorLaw::product({Exponential1D{0, 1}, Pareto1D{0, 1, 2}});
  Stream a(4), b(4);
  for (int i = 0; i < 50; ++i) ASSERT_EQ(eta.sample(a), eta.sample(b));
}

TEST(Contractivity, StrictlyPositiveHitsAtOnce) {
  const auto sc = make({{PositiveMatrix(m2(1, 2, 3, 4)), 1.0}}, VectorLaw::arc_uniform(1.0));
  const auto rep = check_contractivity(sc, 8, 1000, 1);
  EXPECT_EQ(rep.hit_probability, 1.0);
  EXPECT_EQ(rep.hitting_histogram[1], 1000u);
}

TEST(Contractivity, PermutationNeverHits) {
  const auto sc = make({{PositiveMatrix(m2(0, 1, 1, 0)), 1.0}}, VectorLaw::arc_uniform(1.0));
  const auto rep = check_contractivity(sc, 16, 500, 1);
  EXPECT_EQ(rep.hit_probability, 0.0);
  EXPECT_EQ(rep.censored, 500u);
}

TEST(Contractivity, MixtureHitProbabilityMatchesWords) {
  const auto sc = make({{PositiveMatrix(m2(0, 1, 1, 0)), 0.5}, {PositiveMatrix(m2(1, 1, 1, 1)), 0.5}},
                       VectorLaw::arc_uniform(1.0));
  // Oracle: a product is positive iff some factor is the all-ones atom.
  for (int n : {1, 3, 8}) {
    const auto rep = check_contractivity(sc, n, 20000, 2);
    const double exact = 1.0 - std::pow(0.5, n);
    EXPECT_NEAR(rep.hit_probability, exact, 4 * std::sqrt(exact * (1 - exact) / 20000) + 1e-12) << n;
  }
}

TEST(Spanning, Examples) {
  const auto diag = make({{PositiveMatrix(m2(2, 0, 0, 1)), 1.0}}, VectorLaw::arc_uniform(1.0));
  const auto r1 = check_spanning(diag, 200, 1);
  EXPECT_EQ(r1.rank, 1);
  EXPECT_FALSE(r1.spanning);

  // Oracle: dominant eigenvectors of the two atoms are independent.
  const Matrix a = m2(2, 1, 1, 1), b = m2(1, 1, 1, 2);
  Eigen::SelfAdjointEigenSolver<Matrix> ea(a), eb(b);
  Matrix pair(2, 2);
  pair << ea.eigenvectors().col(1), eb.eigenvectors().col(1);
  ASSERT_GT(std::abs(pair.determinant()), 1e-3);
  const auto mix = make({{PositiveMatrix(a), 0.5}, {PositiveMatrix(b), 0.5}}, VectorLaw::arc_uniform(1.0));
  const auto r2 = check_spanning(mix, 200, 1);
  EXPECT_EQ(r2.rank, 2);
  EXPECT_TRUE(r2.spanning);

  Vector one(1);
  one << 1;
  const auto scalar = make({{PositiveMatrix(Matrix::Constant(1, 1, 0.3)), 1.0}}, VectorLaw::point(one), 1);
  const auto r3 = check_spanning(scalar, 10, 1);
  EXPECT_EQ(r3.rank, 1);
  EXPECT_TRUE(r3.spanning);
}

TEST(HypothesisAudit, ScalarTwoAtomClosedForm) {
  const Scenario sc = parse_scenario(kScalar);
  const auto audit = hypothesis_audit(sc);
  EXPECT_NEAR(audit.norm_s1.value, 0.9 / 16 + 0.1 * 4, 1e-14);
  EXPECT_TRUE(audit.norm_s1.exact);
  EXPECT_TRUE(audit.norm_s1.pass);
}

TEST(HypothesisAudit, IdentityFailsAndPointBMoment) {
  Vector one(2);
  one << 1, 1;
  auto sc = make({{PositiveMatrix(Matrix::Identity(2, 2)), 1.0}}, VectorLaw::point(one));
  sc.s2 = 1.3;
  const auto audit = hypothesis_audit(sc);
  EXPECT_DOUBLE_EQ(audit.norm_s1.value, 1.0);
  EXPECT_FALSE(audit.norm_s1.pass);
  EXPECT_NEAR(audit.b_s2.value, std::pow(2.0, 1.3 / 2), 1e-14);
  EXPECT_TRUE(audit.b_s2.pass);
  EXPECT_FALSE(audit.all_pass());
}

TEST(ScenarioIo, ParsesScalarFixture) {
  const Scenario sc = parse_scenario(kScalar);
  EXPECT_EQ(sc.dim, 1);
  EXPECT_EQ(sc.N, 2);
  ASSERT_EQ(sc.mu.atoms().size(), 2u);
  EXPECT_DOUBLE_EQ(sc.mu.atoms()[1].matrix(0, 0), 16.0);
  EXPECT_EQ(sc.seed, 7u);
}

TEST(ScenarioIo, S1AboveHalfRejected) {
  try {
    parse_scenario(with(kScalar, "\"s1\": 0.5", "\"s1\": 0.7"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
  }
}

TEST(ScenarioIo, SyntaxErrorCarriesLineAndColumn) {
  try {
    parse_scenario("{\n  \"dim\": 1,\n  \"N\": ]\n}");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("column"), std::string::npos);
  }
}

TEST(ScenarioIo, UnknownFieldRejected) {
  try {
    parse_scenario(with(kScalar, "\"seed\": 7", "\"seed\": 7, \"colour\": 1"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos);
  }
}

TEST(ScenarioIo, BadProbabilitiesRejected) {
  EXPECT_THROW(parse_scenario(with(kScalar, "\"p\": 0.9", "\"p\": 0.8")), Error);
}

TEST(ScenarioIo, CanonicalJsonRoundTrips) {
  const Scenario sc = parse_scenario(kScalar);
  const std::string canon = canonical_json(sc);
  EXPECT_EQ(canonical_json(parse_scenario(canon)), canon);
  const Scenario spaced = parse_scenario(with(kScalar, "\"dim\": 1, \"N\": 2", "\"N\": 2,   \"dim\": 1"));
  EXPECT_EQ(canonical_json(spaced), canon);
}
