#include <cmath>

#include <gtest/gtest.h>

#include "lego/canonical/frame.hpp"
#include "lego/check/transforms.hpp"
#include "lego/sim/world.hpp"

namespace {

using namespace lego;
using namespace lego::canonical;

sim::EntityState agent(Vec2 p, Vec2 v) {
  sim::EntityState e;
  e.position = p;
  e.velocity = v;
  return e;
}

TEST(BuildFrame, ZeroVelocityFallsBackToGlobalX) {
  const auto f = build_frame(agent({0, 0}, {0, 0}), Vec2(0.3, 0.7));
  EXPECT_EQ(Vec2(f.rotation.col(0)), Vec2(1, 0));
  EXPECT_EQ(Vec2(f.rotation.col(1)), Vec2(0, 1));
}

TEST(BuildFrame, CenterOfMassAboveGivesIdentity) {
  const auto f = build_frame(agent({0, 0}, {2, 0}), Vec2(0, 1));
  EXPECT_TRUE(f.rotation.isApprox(Mat2::Identity(), 1e-15));
  EXPECT_EQ(f.handedness, 1);
}

TEST(BuildFrame, CenterOfMassBelowFlipsHandedness) {
  const auto f = build_frame(agent({0, 0}, {2, 0}), Vec2(0, -1));
  EXPECT_EQ(Vec2(f.rotation.col(1)), Vec2(0, -1));
  EXPECT_NEAR(f.rotation.determinant(), -1.0, 1e-15);
  EXPECT_EQ(f.handedness, -1);
}

TEST(BuildFrame, ZeroOffsetTiesToPositiveSide) {
  const auto f = build_frame(agent({0.4, 0.4}, {0, 3}), Vec2(0.4, 0.4));
  EXPECT_EQ(f.handedness, 1);
  EXPECT_TRUE(Vec2(f.rotation.col(1)).isApprox(Vec2(-1, 0)));
}

TEST(BuildFrame, OrthonormalWithMatchingHandedness) {
  Rng rng = make_rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto a = agent({uniform(rng, -1, 1), uniform(rng, -1, 1)}, {uniform(rng, -2, 2), uniform(rng, -2, 2)});
    const auto f = build_frame(a, Vec2(uniform(rng, -1, 1), uniform(rng, -1, 1)));
    EXPECT_LT((f.rotation.transpose() * f.rotation - Mat2::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(f.rotation.determinant(), static_cast<double>(f.handedness), 1e-9);
  }
}

TEST(CenterOfMass, ControllableAgentsOnly) {
  auto w = sim::reset(sim::ScenarioConfig::spread(2), 0);
  w.entities[0].position = Vec2(0, 0);
  w.entities[1].position = Vec2(2, 0);
  EXPECT_EQ(center_of_mass(w), Vec2(1, 0));

  auto single = sim::reset(sim::ScenarioConfig::spread(1), 0);
  EXPECT_EQ(center_of_mass(single), single.entities[0].position);

  auto tri = sim::reset(sim::ScenarioConfig::spread(3), 0);
  for (int k = 0; k < 3; ++k)
    tri.entities[static_cast<std::size_t>(k)].position = Vec2(std::cos(2 * M_PI * k / 3), std::sin(2 * M_PI * k / 3));
  EXPECT_LT(center_of_mass(tri).norm(), 1e-15);
}

TEST(Canonicalize, IdentityFrameIsPureTranslation) {
  auto w = sim::reset(sim::ScenarioConfig::spread(2), 0);
  w.entities[0].position = Vec2(1, 1);
  w.entities[1].position = Vec2(2, 1);
  const auto frame = CanonicalFrame::identity(Vec2(1, 1));
  const std::vector<std::size_t> visible{0, 1};
  const auto obs = canonicalize(w, 0, visible, frame);
  ASSERT_EQ(obs.neighbors.size(), 1u);
  EXPECT_EQ(obs.neighbors[0].position, Vec2(1, 0));
  EXPECT_EQ(obs.self_speed.y(), 0.0);
}

CanonicalObservation observe(const sim::WorldState& w, std::size_t i) {
  const auto frame = build_frame(w.entities[i], center_of_mass(w));
  return canonicalize(w, i, sim::visible_entities(w, i), frame);
}

double max_difference(const CanonicalObservation& a, const CanonicalObservation& b) {
  EXPECT_EQ(a.neighbors.size(), b.neighbors.size());
  double d = (a.self_speed - b.self_speed).cwiseAbs().maxCoeff();
  for (std::size_t k = 0; k < std::min(a.neighbors.size(), b.neighbors.size()); ++k) {
    EXPECT_EQ(a.neighbors[k].index, b.neighbors[k].index);
    d = std::max(d, (a.neighbors[k].position - b.neighbors[k].position).cwiseAbs().maxCoeff());
    d = std::max(d, (a.neighbors[k].velocity - b.neighbors[k].velocity).cwiseAbs().maxCoeff());
  }
  return d;
}

TEST(Canonicalize, InvariantUnderRotationTranslationAndReflection) {
  Rng rng = make_rng(2024);
  double worst = 0.0;
  for (auto config : {sim::ScenarioConfig::spread(4), sim::ScenarioConfig::tag()}) {
    for (int s = 0; s < 50; ++s) {
      const auto w = check::random_world(config, rng);
      for (int k = 0; k < 8; ++k) {
        const auto g = check::random_isometry(rng, k);
        const auto moved = check::transform(w, g);
        for (auto i : sim::controllable_indices(w)) worst = std::max(worst, max_difference(observe(w, i), observe(moved, i)));
      }
    }
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Canonicalize, PreservesDistances) {
  Rng rng = make_rng(8);
  for (int s = 0; s < 100; ++s) {
    const auto w = check::random_world(sim::ScenarioConfig::tag(), rng);
    for (auto i : sim::controllable_indices(w)) {
      for (const auto& n : observe(w, i).neighbors)
        EXPECT_NEAR(n.position.norm(), (w.entities[n.index].position - w.entities[i].position).norm(), 1e-9);
    }
  }
}

TEST(Frame, EquivariantUnderWorldIsometries) {
  Rng rng = make_rng(31);
  for (int s = 0; s < 200; ++s) {
    const auto w = check::random_world(sim::ScenarioConfig::spread(3), rng);
    const auto g = check::random_isometry(rng, s);
    const auto moved = check::transform(w, g);
    for (auto i : sim::controllable_indices(w)) {
      const auto f = build_frame(w.entities[i], center_of_mass(w));
      const auto h = build_frame(moved.entities[i], center_of_mass(moved));
      EXPECT_LT((h.rotation - g.linear * f.rotation).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Decanonicalize, Examples) {
  EXPECT_EQ(decanonicalize_action(CanonicalFrame::identity(), Vec2(0.5, -0.3)), Vec2(0.5, -0.3));
  CanonicalFrame quarter;
  quarter.rotation = quarter_turn();
  EXPECT_TRUE(decanonicalize_action(quarter, Vec2(1, 0)).isApprox(Vec2(0, 1)));
}

TEST(Decanonicalize, NormPreservationAndRoundTrip) {
  Rng rng = make_rng(12);
  for (int i = 0; i < 1000; ++i) {
    const auto a = agent({uniform(rng, -1, 1), uniform(rng, -1, 1)}, {uniform(rng, -1, 1), uniform(rng, -1, 1)});
    const auto f = build_frame(a, Vec2(uniform(rng, -1, 1), uniform(rng, -1, 1)));
    const Vec2 local(uniform(rng, -2, 2), uniform(rng, -2, 2));
    EXPECT_NEAR(decanonicalize_action(f, local).norm(), local.norm(), 1e-12);
    const Vec2 world(uniform(rng, -2, 2), uniform(rng, -2, 2));
    EXPECT_LT((decanonicalize_action(f, f.rotation.transpose() * world) - world).cwiseAbs().maxCoeff(), 1e-9);
  }
}

}  // namespace
