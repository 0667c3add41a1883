// Writes the bundled demo assets (template head, skeleton, annotations) and
// prints a few sanity figures about them.
#include <cstdio>
#include <json.hpp>

#include "askin/demo_assets.hpp"
#include "askin/gmm.hpp"
#include "askin/mesh_io.hpp"

using namespace askin;

int main(int argc, char** argv) {
  const std::string out_dir = argc > 1 ? argv[1] : "assets";
  DemoHead head = make_demo_head();

  std::printf("demo head: %d vertices, %d faces, %d bones\n", head.mesh.vertex_count(),
              head.mesh.face_count(), head.skeleton.bone_count());

  // bone spread in uv
  const auto zetas = head.skeleton.initial_zetas(head.mesh);
  std::vector<double> nn(zetas.size(), 1e9);
  for (std::size_t i = 0; i < zetas.size(); ++i)
    for (std::size_t j = 0; j < zetas.size(); ++j)
      if (i != j) nn[i] = std::min(nn[i], (zetas[i] - zetas[j]).norm());
  std::vector<double> sorted = nn;
  std::sort(sorted.begin(), sorted.end());
  std::printf("bone uv nearest-neighbor distance: min %.4f median %.4f max %.4f\n", sorted.front(),
              sorted[sorted.size() / 2], sorted.back());
  for (std::size_t i = 0; i < zetas.size(); ++i)
    for (std::size_t j = i + 1; j < zetas.size(); ++j)
      if ((zetas[i] - zetas[j]).norm() < 1e-12)
        std::printf("  shared proxy: %s and %s\n", head.skeleton.bones[i].name.c_str(),
                    head.skeleton.bones[j].name.c_str());

  // worst uv gap between a vertex and its nearest bone
  double worst_gap = 0.0;
  int worst_v = -1;
  for (int v = 0; v < head.mesh.vertex_count(); ++v) {
    double d = 1e9;
    for (const Vec2& z : zetas) d = std::min(d, (head.mesh.uv[v] - z).norm());
    if (d > worst_gap) {
      worst_gap = d;
      worst_v = v;
    }
  }
  std::printf("worst vertex-to-bone uv gap: %.4f at vertex %d uv=(%.3f, %.3f)\n", worst_gap, worst_v,
              head.mesh.uv[worst_v].x(), head.mesh.uv[worst_v].y());
  std::printf("coverage radius at sigma = median/2: %.4f\n",
              0.5 * sorted[sorted.size() / 2] *
                  std::sqrt(2.0 * std::log(1.0 / (kCoverageEpsilon * kTwoPi *
                                                  0.25 * sorted[sorted.size() / 2] *
                                                  sorted[sorted.size() / 2]))));

  const auto params = init_isotropic(head.mesh, head.skeleton, 2);
  const WeightField field = normalized_weights(head.mesh, params);
  std::printf("weight field rows: %ld, max |row sum - 1| = %.3e\n",
              static_cast<long>(field.weights.rows()),
              (field.weights.rowwise().sum().array() - 1.0).abs().maxCoeff());

  // how close the least covered vertex is to the rejection threshold
  Eigen::VectorXd dens = Eigen::VectorXd::Zero(head.mesh.vertex_count());
  for (int v = 0; v < head.mesh.vertex_count(); ++v)
    for (std::size_t j = 0; j < params.size(); ++j) dens[v] += bone_weight(head.mesh, params[j], v);
  std::printf("min total density %.3e (threshold %.0e)\n", dens.minCoeff(), kCoverageEpsilon);

  // near-silhouette band for a frontal view
  int steep = 0;
  for (int f = 0; f < head.mesh.face_count(); ++f) {
    const auto& t = head.mesh.faces[f];
    const Vec3 n = (head.mesh.vertices[t[1]] - head.mesh.vertices[t[0]])
                       .cross(head.mesh.vertices[t[2]] - head.mesh.vertices[t[0]])
                       .normalized();
    if (std::abs(n.z()) < 0.1736) ++steep;
  }
  std::printf("faces with |n_z| < sin(10 deg): %d\n", steep);

  save_obj(out_dir + "/demo_head.obj", head.mesh, head.mesh.vertices);
  save_skeleton(out_dir + "/demo_skeleton.json", head.skeleton);

  nlohmann::json ann;
  ann["landmarks68"] = head.landmarks68;
  nlohmann::json kp;
  for (std::size_t i = 0; i < head.keypoints7.size(); ++i)
    kp[keypoint_labels()[i]] = head.keypoints7[i];
  ann["keypoints"] = kp;
  atomic_write(out_dir + "/demo_annotations.json", ann.dump(2) + "\n");
  std::printf("assets written to %s\n", out_dir.c_str());
  return 0;
}
