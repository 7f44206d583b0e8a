#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mupp/param_algebra.hpp"
#include "mupp/param_json.hpp"

#include <algorithm>
#include <cmath>

using namespace mupp;

namespace {

Rational R(std::int64_t p, std::int64_t q = 1) { return Rational(p, q); }
std::vector<Rational> V(std::initializer_list<Rational> v) { return v; }

Parameterization mup_with(const Rational& d, const std::vector<Rational>& dl, int L = 3) {
  Parameterization p = preset("mup", L);
  p.d_global = d;
  p.d_layers = dl;
  p.rule.tag = RuleTag::sam_joint_lp;
  return p;
}

}  // namespace

TEST_CASE("r matches the reference table") {
  CHECK(compute_r(preset("mup", 3)) == 0);
  CHECK(compute_r(preset("sp", 3)) == -1);
  CHECK(compute_r(preset("ntp", 3)) == R(1, 2));
  const auto mup = preset("mup", 3);
  CHECK(mup.b == V({0, R(1, 2), R(1, 2), 1}));
  CHECK(mup.c == V({-1, 0, 0, 1}));
}

TEST_CASE("r tilde for naive, global and effective scaling") {
  const std::vector<Rational> halves(4, R(1, 2));
  CHECK(compute_r_tilde(mup_with(0, halves)) == R(1, 2));
  CHECK(compute_r_tilde(mup_with(R(1, 2), halves)) == 1);
  CHECK(compute_r_tilde(mup_with(R(-1, 2), V({R(-1, 2), R(1, 2), R(1, 2), R(3, 2)}))) == 0);
  CHECK_THROWS_AS(compute_r_tilde(preset("mup", 3), 4), std::out_of_range);
  CHECK_THROWS_AS(compute_r_tilde(preset("mup", 3), 0), std::out_of_range);
}

TEST_CASE("classify: SP naive blows up, global perturbs only the last layer, mupp perturbs all") {
  Parameterization sp = preset("sp", 3);
  sp.d_global = 0;
  sp.d_layers.assign(4, R(1, 2));
  sp.rule.tag = RuleTag::sam_joint_lp;
  const auto sp_rep = classify(sp);
  CHECK_FALSE(sp_rep.stable);
  CHECK_FALSE(sp_rep.stability.perturbation_output);

  const auto g = classify(preset("mup-global", 3));
  CHECK(g.stable);
  CHECK(g.perturbation_status.back() == PerturbStatus::effective);
  for (int l = 0; l < 3; ++l) CHECK(g.perturbation_status[l] == PerturbStatus::vanishing);

  const auto m = classify(preset("mupp", 3));
  CHECK(m.stable);
  CHECK(m.nontrivial);
  for (bool f : m.feature_learning) CHECK(f);
  for (auto s : m.perturbation_status) CHECK(s == PerturbStatus::effective);
  CHECK(m.violations.empty());

  const auto naive = classify(preset("mup-naive", 2));
  CHECK_FALSE(naive.stable);
  CHECK(std::find(naive.violations.begin(), naive.violations.end(), "d+d_{L+1} ≥ 1 violated") !=
        naive.violations.end());
}

TEST_CASE("derive_mpp under muP and its failure for b_last < 1") {
  const auto s = derive_mpp(V({0, R(1, 2), R(1, 2), 1}), V({-1, 0, 0, 1}));
  REQUIRE(s);
  CHECK(s->d_global == R(-1, 2));
  CHECK(s->d_layers == V({R(-1, 2), R(1, 2), R(1, 2), R(3, 2)}));

  const auto ntp = preset("ntp", 3);
  REQUIRE(ntp.b.back() == R(1, 2));
  CHECK_FALSE(derive_mpp(ntp.b, ntp.c));

  // c_{L+1}=2 leaves the gradient-norm scale unchanged.
  const auto t = derive_mpp(V({0, R(1, 2), R(1, 2), 1}), V({-1, 0, 0, 2}));
  REQUIRE(t);
  CHECK(t->d_global == s->d_global);
  CHECK(t->d_layers == s->d_layers);

  CHECK_THROWS_AS(derive_mpp(V({1, R(1, 2), 1}), V({0, 0, 0})), std::invalid_argument);
}

TEST_CASE("select_perturbation_scaling for layer subsets") {
  const auto first = select_perturbation_scaling({1}, 1, 3);
  CHECK(first.d_global == R(-1, 2));
  CHECK(first.d_layers == V({R(-1, 2), R(3, 2), R(3, 2), R(5, 2)}));

  const auto last = select_perturbation_scaling({4}, 1, 3);
  CHECK(last.d_global == R(1, 2));
  CHECK(last.d_layers.back() == R(1, 2));

  const auto all = select_perturbation_scaling({1, 2, 3, 4}, 1, 3);
  const auto mpp = derive_mpp(preset("mup", 3).b, preset("mup", 3).c);
  CHECK(all.d_global == mpp->d_global);
  CHECK(all.d_layers == mpp->d_layers);

  CHECK(select_perturbation_scaling({}, 1, 3).reduces_to_sgd);
  CHECK_THROWS_AS(select_perturbation_scaling({5}, 1, 3), std::invalid_argument);
  CHECK_THROWS_AS(select_perturbation_scaling({1}, R(1, 4), 3), std::invalid_argument);
}

TEST_CASE("brute force: exactly one canonical effective-everywhere scaling under muP") {
  // Effectiveness and norm-constraint conditions written out directly for
  // muP at L=2: min(b_3, c_3) = 1 and c_nabla = 1.
  const int L = 2;
  const Rational q(1, 4);
  int oracle_hits = 0, classify_hits = 0, disagreements = 0;
  Rational hit_d;
  std::vector<Rational> hit_dl;
  for (Rational d = R(-3, 2); d <= R(3, 2); d += q)
    for (Rational d1 = -1; d1 <= 2; d1 += q)
      for (Rational d2 = -1; d2 <= 2; d2 += q)
        for (Rational d3 = -1; d3 <= 2; d3 += q) {
          const bool eff = 1 + d + d1 == 0 && 1 + d + d2 - 1 == 0 && d + d3 == 1;
          const bool bounds = d1 >= R(-1, 2) && d2 >= 0 && d3 >= R(1, 2);
          const bool tight = d1 == R(-1, 2) || d2 == 0 || d3 == R(1, 2);
          const bool oracle = eff && bounds && tight;
          const auto rep = classify(mup_with(d, V({d1, d2, d3}), L));
          bool all_eff = rep.stable && rep.norm_constraints_valid;
          for (auto s : rep.perturbation_status) all_eff = all_eff && s == PerturbStatus::effective;
          oracle_hits += oracle;
          classify_hits += all_eff;
          disagreements += oracle != all_eff;
          if (oracle) {
            hit_d = d;
            hit_dl = {d1, d2, d3};
          }
        }
  CHECK(oracle_hits == 1);
  CHECK(classify_hits == 1);
  CHECK(disagreements == 0);
  const auto mpp = derive_mpp(preset("mup", L).b, preset("mup", L).c);
  CHECK(mpp->d_global == hit_d);
  CHECK(mpp->d_layers == hit_dl);
}

TEST_CASE("predicted exponents follow the closed-form scalings") {
  // Output perturbation scales as n^{1-(d+d_{L+1})}.
  const auto naive = preset("mup-naive", 3);
  CHECK(predict_exponent(naive, "df_perturb") == 1 - (naive.d_global + naive.d_layers.back()));
  CHECK(predict_exponent(preset("mupp", 3), "dx_perturb/3") == 0);
  CHECK(predict_exponent(preset("mup-global", 3), "dx_perturb/2") == -1);
  CHECK_THROWS_AS(predict_exponent(preset("mupp", 3), "no_such_statistic"), std::out_of_range);
}

TEST_CASE("variant scaling table") {
  // Powers of n multiplying ρ, per role.
  const auto expect = [](RuleTag tag, LayerRole role, Rational global, Rational layer) {
    const auto v = variant_scaling(tag, role);
    REQUIRE(v.global);
    REQUIRE(v.layer);
    CHECK(*v.global == global);
    CHECK(*v.layer == layer);
  };
  expect(RuleTag::sam_joint_lp, LayerRole::input_like, R(1, 2), R(1, 2));
  expect(RuleTag::sam_joint_lp, LayerRole::hidden_like, R(1, 2), R(-1, 2));
  expect(RuleTag::sam_joint_lp, LayerRole::output_like, R(1, 2), R(-3, 2));
  expect(RuleTag::asam_layerwise, LayerRole::input_like, 0, 0);
  expect(RuleTag::asam_elementwise, LayerRole::hidden_like, R(1, 2), 0);

  const auto elem = variant_scaling(RuleTag::asam_elementwise, LayerRole::output_like);
  REQUIRE(elem.layer);
  CHECK(*elem.layer == 0);

  const auto lw = variant_scaling(RuleTag::asam_layerwise, LayerRole::hidden_like);
  REQUIRE(lw.layer);
  CHECK(*lw.layer == -1);

  CHECK_FALSE(variant_scaling(RuleTag::sam_on, LayerRole::hidden_like).layer);
  CHECK_FALSE(variant_scaling(RuleTag::sam_on, LayerRole::output_like).layer);
}

TEST_CASE("spectral factors") {
  const auto sq = spectral_scaling(256, 256);
  CHECK(sq.lr_factor == doctest::Approx(1.0));
  CHECK(sq.init_std == doctest::Approx(1.0 / 16.0));
  CHECK(spectral_scaling(16, 256).lr_factor == doctest::Approx(256.0 / 16.0));
  CHECK(spectral_scaling(256, 4).lr_factor == doctest::Approx(4.0 / 256.0));
}

TEST_CASE("equivalence transforms") {
  const auto p = preset("mupp", 3);
  const auto same = equivalence_transform(p, 0, 0);
  CHECK(same.a == p.a);
  CHECK(same.b == p.b);
  CHECK(same.c == p.c);
  CHECK(same.d_layers == p.d_layers);
  CHECK(same.d_global == p.d_global);

  const Rational C(1, 4);
  const auto t = equivalence_transform(p, R(1, 2), C);
  for (int l = 0; l <= 3; ++l) {
    CHECK(t.a[l] == p.a[l] + R(1, 2));
    CHECK(t.b[l] == p.b[l] - R(1, 2));
    CHECK(t.c[l] == p.c[l] - 1);
    CHECK(t.d_layers[l] == p.d_layers[l] - R(1, 2) + C);
  }
  CHECK(t.d_global == p.d_global - R(1, 2));
}

TEST_CASE("multiplier presets") {
  CHECK(a_mupp(3) == V({R(-1, 2), 0, 0, R(1, 2)}));
  const auto s = mupp_for_multipliers(mup_package_multipliers(3));
  CHECK(s.d_global == R(-1, 2));
  CHECK(s.d_layers.front() == R(-1, 2));
  CHECK(s.d_layers.back() == R(-1, 2));
  CHECK(s.d_layers[1] == R(1, 2));
  CHECK(s.d_layers[2] == R(1, 2));
}

TEST_CASE("phase labels") {
  CHECK(phase_label(R(-1, 4), 1, 1) == PhaseLabel::unstable);
  CHECK(phase_label(R(3, 2), R(3, 2), 1) == PhaseLabel::effective_sgd);
  CHECK(phase_label(0, 1, 1) == PhaseLabel::effective_all);
  const auto pt = phase_point(preset("mupp", 3));
  CHECK(pt.phase == PhaseLabel::effective_all);

  const auto grid = phase_grid(1, R(1, 4));
  std::set<PhaseLabel> seen;
  for (const auto& g : grid) seen.insert(g.phase);
  CHECK(seen.size() == 4);
  // With b_{L+1} < 1 no grid point perturbs every layer effectively.
  for (const auto& g : phase_grid(R(1, 2), R(1, 4))) CHECK(g.phase != PhaseLabel::effective_all);
}

TEST_CASE("rationals and presets parse and print") {
  CHECK(parse_rational("-3/6") == R(-1, 2));
  CHECK(parse_rational("0.25") == R(1, 4));
  CHECK(parse_rational("2") == 2);
  CHECK(to_string(R(3, 2)) == "3/2");
  CHECK(to_string(ExtRational{}) == "inf");
  CHECK_THROWS_AS(parse_rational("1/0"), std::invalid_argument);
  CHECK_THROWS_AS(parse_rational("x"), std::invalid_argument);
  CHECK_THROWS_AS(preset("nope", 2), std::invalid_argument);
  for (const auto& name : preset_names()) CHECK_NOTHROW(preset(name, 2).validate());
}

TEST_CASE("parameterization json round trip") {
  for (const auto& name : preset_names()) {
    const auto p = preset(name, 3);
    const auto q = parameterization_from_json(parameterization_to_json(p));
    CHECK(q.L == p.L);
    CHECK(q.a == p.a);
    CHECK(q.b == p.b);
    CHECK(q.c == p.c);
    CHECK(q.d_layers == p.d_layers);
    CHECK(q.d_global == p.d_global);
    CHECK(q.rule.tag == p.rule.tag);
    CHECK(q.rule.d_tilde == p.rule.d_tilde);
  }
  CHECK_THROWS_AS(parameterization_from_json("{\"L\": 1, \"bogus\": 2}"), std::invalid_argument);
}
