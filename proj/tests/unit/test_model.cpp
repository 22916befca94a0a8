#include <gtest/gtest.h>

#include "sphperf/engine_config.hpp"
#include "sphperf/model.hpp"

using namespace sphperf;

namespace {

std::string first_error(SimParams p) {
  try {
    validate(p);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Validate, AcceptsConsistentParameters) {
  SimParams p;
  p.h = 0.01;
  p.dp = 0.005;
  p.n_subdiv = 2;
  p.cfl = 0.3;
  const SimParams q = validate(p);
  EXPECT_EQ(q.h, p.h);
  EXPECT_EQ(q.cfl, p.cfl);
}

TEST(Validate, ReportsFirstViolation) {
  SimParams p;
  p.h = 0;
  EXPECT_EQ(first_error(p), "h must be positive");
  p = {};
  p.cfl = 1.5;
  EXPECT_EQ(first_error(p), "cfl in (0,1)");
  p = {};
  p.h = -1;
  p.cfl = 2;
  EXPECT_EQ(first_error(p), "h must be positive");
}

TEST(Validate, NamesTheField) {
  SimParams p;
  p.n_subdiv = 0;
  try {
    validate(p);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "n_subdiv");
  }
}

TEST(Validate, RejectsEachInvariant) {
  const auto bad = [](auto mutate) {
    SimParams p;
    mutate(p);
    return !first_error(p).empty();
  };
  EXPECT_TRUE(bad([](SimParams& p) { p.dp = 0; }));
  EXPECT_TRUE(bad([](SimParams& p) { p.gamma = 0.5; }));
  EXPECT_TRUE(bad([](SimParams& p) { p.alpha = -0.1; }));
  EXPECT_TRUE(bad([](SimParams& p) { p.cfl = 0; }));
  EXPECT_TRUE(bad([](SimParams& p) { p.domain_max = {1, 0, 1}; }));
  EXPECT_TRUE(bad([](SimParams& p) { p.verlet_corrector_stride = 0; }));
  EXPECT_TRUE(bad([](SimParams& p) { p.dt_min = 1.0; }));
  EXPECT_FALSE(bad([](SimParams& p) { p.alpha = 0; }));
  EXPECT_FALSE(bad([](SimParams& p) { p.gamma = 1; }));
}

TEST(ParticleSystem, ResizeKeepsBoundaryFirst) {
  ParticleSystem s;
  s.resize(3, 2);
  EXPECT_EQ(s.size(), 5u);
  EXPECT_EQ(s.fluid_begin(), 3u);
  EXPECT_EQ(s.kind[2], ParticleKind::Boundary);
  EXPECT_EQ(s.kind[3], ParticleKind::Fluid);
  EXPECT_FALSE(s.is_fluid(2));
  EXPECT_TRUE(s.is_fluid(3));
}

TEST(ParticleSystem, CheckRejectsBrokenInvariants) {
  ParticleSystem s;
  s.resize(1, 1);
  s.rho = {1000.0f, 1000.0f};
  s.id = {0, 1};
  s.mass_fluid = s.mass_boundary = 1e-3f;
  EXPECT_NO_THROW(s.check());
  s.rho[1] = 0.0f;
  EXPECT_THROW(s.check(), ConfigError);
  s.rho[1] = 1000.0f;
  s.vel.pop_back();
  EXPECT_THROW(s.check(), ConfigError);
  s.vel.push_back({});
  s.kind[0] = ParticleKind::Fluid;
  EXPECT_THROW(s.check(), ConfigError);
}

TEST(EngineConfigValidate, Rules) {
  EngineConfig g;
  g.engine = EngineKind::Gather;
  EXPECT_THROW(validate(g), ConfigError);  // symmetry defaults to On
  g.symmetry = Symmetry::Off;
  EXPECT_NO_THROW(validate(g));

  EngineConfig c;
  c.threading = Threading::Symmetric;
  c.symmetry = Symmetry::Off;
  EXPECT_THROW(validate(c), ConfigError);

  c.threading = Threading::Asymmetric;
  c.symmetry = Symmetry::On;
  EXPECT_EQ(validate(c).symmetry, Symmetry::Off);

  c = {};
  c.lane_batch = 2;
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.thread_count = 0;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(EngineConfigTag, RoundTrips) {
  for (const char* tag : {"cp-sym-l4-symmetric-t8", "cp-nosym-l1-single-t1-n1", "cp-nosym-l4-asymmetric-t3",
                          "cp-sym-l1-slices-t4-rec", "gather-fast-half-t4", "gather-slow-h-t1-rec",
                          "gather-slow-half-t2"})
    EXPECT_EQ(to_tag(parse_tag(tag)), tag);
}

TEST(EngineConfigTag, RejectsMalformed) {
  for (const char* tag : {"", "cp", "cp-sym-l4-single", "cp-maybe-l1-single-t1", "cp-sym-l3-single-t1",
                          "gather-fast-t1", "gather-slow-half-t1-n2", "cp-sym-l1-single-tx", "warp-sym-l1-single-t1"})
    EXPECT_THROW(parse_tag(tag), ConfigError) << tag;
}

TEST(EngineConfig, Subdivision) {
  EngineConfig c;
  EXPECT_EQ(c.subdivision(2), 2);
  c.n_subdiv_override = 1;
  EXPECT_EQ(c.subdivision(2), 1);
  c = parse_tag("gather-slow-h-t1");
  EXPECT_EQ(c.subdivision(2), 1);
  EXPECT_FALSE(c.needs_ranges());
  c = parse_tag("gather-fast-half-t1");
  EXPECT_EQ(c.subdivision(1), 2);
  EXPECT_TRUE(c.needs_ranges());
}
