#include <gtest/gtest.h>

#include "askin/multiview.hpp"
#include "askin/synth.hpp"

#include "helpers.hpp"

using namespace askin;
using askin::testing::demo_head;

namespace {

std::vector<CameraView> views_with_initial_poses(const SynthViewsCase& synth) { return synth.views; }

}  // namespace

TEST(Reconstruct, FiveViewsHalveNeutralRmse) {
  const DemoHead& head = demo_head();
  const SynthViewsCase synth = synth_views_case(head, 2, 71, 1.0, 5, 96);
  const AsmParams neutral = AsmParams::neutral(head.mesh, head.skeleton, 2);
  MvConfig cfg;
  cfg.uv_resolution = 96;
  cfg.iterations = 500;

  const DeformedMesh neutral_mesh = asm_forward(head.mesh, head.skeleton, neutral);
  const double rmse0 = vertex_rmse(neutral_mesh.vertices, synth.gt_vertices);

  const ReconstructResult rec = reconstruct(head.mesh, head.skeleton, views_with_initial_poses(synth),
                                            cfg, neutral, head.landmarks68, 2);
  const DeformedMesh fitted = asm_forward(head.mesh, head.skeleton, rec.params);
  const double rmse1 = vertex_rmse(fitted.vertices, synth.gt_vertices);

  EXPECT_LE(rec.history.back(), rec.history.front());
  for (double e : rec.history) EXPECT_TRUE(std::isfinite(e));
  EXPECT_LE(rmse1, 0.5 * rmse0) << "rmse0 " << rmse0 << " rmse1 " << rmse1;
}

TEST(Reconstruct, NearStationaryAtGroundTruth) {
  const DemoHead& head = demo_head();
  const SynthViewsCase synth = synth_views_case(head, 2, 73, 0.8, 4, 96);
  MvConfig cfg;
  cfg.uv_resolution = 96;
  cfg.iterations = 500;
  const ReconstructResult rec = reconstruct(head.mesh, head.skeleton, synth.views, cfg,
                                            synth.gt_params, head.landmarks68, 2);
  // starting from the truth, the energy must not increase
  EXPECT_LE(rec.history.back(), rec.history.front() + 1e-6);
  EXPECT_LE(rec.final_energy, rec.history.front() + 1e-6);
}

TEST(Reconstruct, RequiresTwoViews) {
  const DemoHead& head = demo_head();
  const SynthViewsCase synth = synth_views_case(head, 2, 75, 0.5, 2, 64);
  const AsmParams neutral = AsmParams::neutral(head.mesh, head.skeleton, 2);
  std::vector<CameraView> one = {synth.views[0]};
  MvConfig cfg;
  cfg.iterations = 1;
  EXPECT_THROW(reconstruct(head.mesh, head.skeleton, one, cfg, neutral, head.landmarks68), Error);
}
