// Multi-view uncalibrated reconstruction: landmark, contour and uv-space
// photometric-consistency energies over the model parameters and per-view
// camera poses.
//
// Per-vertex intensities are sampled from each image at the projected vertex
// positions and splatted into a fixed uv-space grid (the chart is constant,
// so the splat is a precomputed sparse linear map). Photometric consistency
// compares 3x3 patches of these uv maps across view pairs with normalized
// cross-correlation. Discrete state (visibility, contour membership, nearest
// neighbors, uv faces) is frozen per gradient evaluation and refreshed every
// optimizer iteration.
#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "askin/adam.hpp"
#include "askin/autodiff.hpp"
#include "askin/camera.hpp"
#include "askin/model.hpp"
#include "askin/raster.hpp"
#include "askin/registration.hpp"

namespace askin {

struct MvConfig {
  double lambda1 = 0.001;  // landmarks
  double lambda2 = 0.4;    // edge
  double lambda3 = 100.0;  // photometric consistency
  double lambda4 = 1.0;    // regularization (RegConfig weights inside)
  double theta_deg = 10.0;
  double lr = 1e-4;
  int iterations = 500;
  int uv_resolution = 256;
  int patch = 3;  // fixed 3x3 sampling window
  bool optimize_focal = false;
  // Literal sign reading: minimize the mean LNCC itself rather than the
  // dissimilarity 1 - LNCC.
  bool literal_photometric = false;
  RegConfig reg;
  double zbuffer_bias = 0.02;
  // Contour candidates sit at grazing incidence where z-buffer depths are
  // quantization-noisy; their visibility screen uses a looser tolerance.
  double contour_zbuffer_bias = 0.2;
};

// --- chamfer -----------------------------------------------------------------

// Halved symmetric mean squared nearest-neighbor distance.
inline double chamfer(const std::vector<Vec2>& set_a, const std::vector<Vec2>& set_b) {
  if (set_a.empty() || set_b.empty()) fail("chamfer: empty point set");
  double sum_a = 0.0;
  for (const Vec2& a : set_a) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2& b : set_b) best = std::min(best, (a - b).squaredNorm());
    sum_a += best;
  }
  double sum_b = 0.0;
  for (const Vec2& b : set_b) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2& a : set_a) best = std::min(best, (a - b).squaredNorm());
    sum_b += best;
  }
  return 0.5 * (sum_a / set_a.size() + sum_b / set_b.size());
}

inline std::vector<int> nearest_indices(const std::vector<Vec2>& from, const std::vector<Vec2>& to) {
  std::vector<int> idx(from.size(), 0);
  for (std::size_t i = 0; i < from.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < to.size(); ++j) {
      const double d = (from[i] - to[j]).squaredNorm();
      if (d < best) {
        best = d;
        idx[i] = static_cast<int>(j);
      }
    }
  }
  return idx;
}

// --- model contour -----------------------------------------------------------

struct ModelContour {
  std::vector<int> vertices;   // selected vertex indices
  std::vector<Vec2> projected; // their pixel positions
};

// Vertices whose camera-space normal is within theta of perpendicular to the
// view axis (|n_z| < sin(theta)) and which pass the z-buffer test.
inline ModelContour extract_model_contour(const std::vector<Vec3>& vertices,
                                          const std::vector<std::array<int, 3>>& faces,
                                          const CameraView& view, double theta_deg,
                                          const std::vector<bool>& visibility) {
  const std::vector<Vec3> normals = vertex_normals(vertices, faces);
  const double threshold = std::sin(theta_deg * 3.14159265358979323846 / 180.0);
  ModelContour out;
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    if (!visibility[v]) continue;
    const Vec3 n_cam = view.rotation * normals[v];
    if (std::abs(n_cam.z()) >= threshold) continue;
    out.vertices.push_back(static_cast<int>(v));
    out.projected.push_back(project(vertices[v], view));
  }
  if (out.vertices.empty()) fail("no-silhouette: contour selection is empty");
  return out;
}

inline ModelContour extract_model_contour(const DeformedMesh& mesh, const CameraView& view,
                                          double theta_deg, int zbuffer_resolution = 0,
                                          double bias = 0.02) {
  const int res = zbuffer_resolution > 0 ? zbuffer_resolution : view.image.width();
  const auto vis = zbuffer_visibility(mesh.vertices, mesh.base->faces, view, res,
                                      zbuffer_resolution > 0 ? res : view.image.height(), bias);
  return extract_model_contour(mesh.vertices, mesh.base->faces, view, theta_deg, vis);
}

// --- uv intensity maps ---------------------------------------------------------

struct UvIntensityMap {
  Eigen::MatrixXd intensity;               // resolution x resolution
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask;
};

// texel -> (face, barycentric weights) over the fixed uv chart.
class UvRasterTable {
 public:
  UvRasterTable() = default;
  UvRasterTable(const Mesh& mesh, int resolution) : res_(resolution) {
    const UvGrid grid(mesh);
    face_.assign(static_cast<std::size_t>(res_) * res_, -1);
    bary_.resize(static_cast<std::size_t>(res_) * res_);
    for (int ty = 0; ty < res_; ++ty)
      for (int tx = 0; tx < res_; ++tx) {
        const Vec2 p((tx + 0.5) / res_, (ty + 0.5) / res_);
        try {
          const BarycentricHit hit = locate_uv(mesh, p, grid);
          face_[index(tx, ty)] = hit.face_index;
          bary_[index(tx, ty)] = {hit.alpha, hit.beta, hit.gamma};
        } catch (const Error&) {
          // texel outside the chart stays unmapped
        }
      }
  }

  int resolution() const { return res_; }
  int face(int tx, int ty) const { return face_[index(tx, ty)]; }
  const Bary& bary(int tx, int ty) const { return bary_[index(tx, ty)]; }

 private:
  std::size_t index(int tx, int ty) const { return static_cast<std::size_t>(ty) * res_ + tx; }
  int res_ = 0;
  std::vector<int> face_;
  std::vector<Bary> bary_;
};

// Per-vertex intensities: bilinear samples at the projected positions.
struct VertexSamples {
  Eigen::VectorXd intensity;
  std::vector<Vec2> pixel;       // projection of each vertex
  std::vector<Vec3> camera;      // camera-space positions
  std::vector<bool> visible;
};

inline VertexSamples sample_vertex_intensities(const std::vector<Vec3>& vertices,
                                               const CameraView& view,
                                               const std::vector<bool>& visibility) {
  VertexSamples s;
  const std::size_t n = vertices.size();
  s.intensity = Eigen::VectorXd::Zero(n);
  s.pixel.resize(n);
  s.camera.resize(n);
  s.visible = visibility;
  for (std::size_t v = 0; v < n; ++v) {
    s.camera[v] = view.to_camera(vertices[v]);
    if (!s.visible[v] || !(s.camera[v].z() > 0.0)) {
      s.visible[v] = false;
      continue;
    }
    s.pixel[v] = project_camera(s.camera[v], view.focal, view.principal);
    s.intensity[v] = bilinear_sample(view.image, s.pixel[v]);
  }
  return s;
}

// Splat per-vertex intensities into the uv grid; a texel is valid when its
// face's three corners are all visible.
inline UvIntensityMap unwrap_intensities(const VertexSamples& samples, const Mesh& mesh,
                                         const UvRasterTable& table) {
  const int res = table.resolution();
  UvIntensityMap map;
  map.intensity = Eigen::MatrixXd::Zero(res, res);
  map.mask.setZero(res, res);
  for (int ty = 0; ty < res; ++ty)
    for (int tx = 0; tx < res; ++tx) {
      const int f = table.face(tx, ty);
      if (f < 0) continue;
      const auto& tri = mesh.faces[f];
      if (!samples.visible[tri[0]] || !samples.visible[tri[1]] || !samples.visible[tri[2]]) continue;
      const Bary& b = table.bary(tx, ty);
      map.intensity(ty, tx) = b.alpha * samples.intensity[tri[0]] +
                              b.beta * samples.intensity[tri[1]] +
                              b.gamma * samples.intensity[tri[2]];
      map.mask(ty, tx) = 1;
    }
  return map;
}

// Convenience wrapper used by tests and the CLI; visibility from the z-buffer
// at the image resolution.
inline UvIntensityMap unwrap_intensities(const DeformedMesh& mesh, const CameraView& view,
                                         int uv_resolution) {
  const auto vis = zbuffer_visibility(mesh.vertices, mesh.base->faces, view, view.image.width(),
                                      view.image.height());
  const VertexSamples s = sample_vertex_intensities(mesh.vertices, view, vis);
  const UvRasterTable table(*mesh.base, uv_resolution);
  return unwrap_intensities(s, *mesh.base, table);
}

// --- lncc ---------------------------------------------------------------------

namespace detail {

struct LnccWindows {
  Eigen::MatrixXd ncc;       // per window
  Eigen::MatrixXd sa, sb, va, vb, cov;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> valid;
  int count = 0;             // valid windows
  double mean = 0.0;
};

// All 3x3 window statistics; window (r, c) is centered at texel (r, c).
inline LnccWindows lncc_windows(const UvIntensityMap& a, const UvIntensityMap& b) {
  if (a.intensity.rows() != b.intensity.rows() || a.intensity.cols() != b.intensity.cols())
    fail("lncc: map resolutions differ");
  const int res = static_cast<int>(a.intensity.rows());
  LnccWindows w;
  w.ncc = Eigen::MatrixXd::Zero(res, res);
  w.sa = w.sb = w.va = w.vb = w.cov = Eigen::MatrixXd::Zero(res, res);
  w.valid.setZero(res, res);
  constexpr double kVarFloor = 1e-30;
  for (int r = 1; r + 1 < res; ++r) {
    for (int c = 1; c + 1 < res; ++c) {
      bool ok = true;
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dr = -1; dr <= 1 && ok; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          if (!a.mask(r + dr, c + dc) || !b.mask(r + dr, c + dc)) {
            ok = false;
            break;
          }
          const double va = a.intensity(r + dr, c + dc);
          const double vb = b.intensity(r + dr, c + dc);
          sa += va;
          sb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      if (!ok) continue;
      w.valid(r, c) = 1;
      ++w.count;
      const double var_a = saa - sa * sa / 9.0;
      const double var_b = sbb - sb * sb / 9.0;
      const double cov = sab - sa * sb / 9.0;
      w.sa(r, c) = sa;
      w.sb(r, c) = sb;
      w.va(r, c) = var_a;
      w.vb(r, c) = var_b;
      w.cov(r, c) = cov;
      // zero-variance patches are neutral rather than undefined
      w.ncc(r, c) = (var_a > kVarFloor && var_b > kVarFloor)
                        ? cov / std::sqrt(var_a * var_b)
                        : 0.0;
      w.mean += w.ncc(r, c);
    }
  }
  if (w.count == 0) fail("no-overlap: no jointly valid texels between the two uv maps");
  w.mean /= w.count;
  return w;
}

}  // namespace detail

// Mean NCC between 3x3 patches over texels whose full neighborhood is
// unmasked in both maps; zero-variance patches contribute 0. Result in [-1, 1].
inline double lncc(const UvIntensityMap& a, const UvIntensityMap& b, int patch = 3) {
  if (patch != 3) fail("lncc: only the 3x3 sampling window is supported");
  return detail::lncc_windows(a, b).mean;
}

// d(mean ncc)/d(a texels) and /d(b texels), scaled by `upstream`.
inline void lncc_backward(const UvIntensityMap& a, const UvIntensityMap& b,
                          const detail::LnccWindows& w, double upstream, Eigen::MatrixXd& abar,
                          Eigen::MatrixXd& bbar) {
  const int res = static_cast<int>(a.intensity.rows());
  constexpr double kVarFloor = 1e-30;
  // per-window coefficients of the affine form dncc/da_p = ka*a_p + kb*b_p + k1
  Eigen::MatrixXd ka_a = Eigen::MatrixXd::Zero(res, res), kb_a = ka_a, k1_a = ka_a;
  Eigen::MatrixXd ka_b = ka_a, kb_b = ka_a, k1_b = ka_a;
  const double scale = upstream / w.count;
  for (int r = 1; r + 1 < res; ++r)
    for (int c = 1; c + 1 < res; ++c) {
      if (!w.valid(r, c)) continue;
      const double va = w.va(r, c), vb = w.vb(r, c);
      if (!(va > kVarFloor && vb > kVarFloor)) continue;
      const double inv_sqrt = 1.0 / std::sqrt(va * vb);
      const double ncc = w.ncc(r, c);
      // dncc/da_p = (b_p - sb/9) * inv_sqrt - ncc * (a_p - sa/9) / va
      kb_a(r, c) = scale * inv_sqrt;
      ka_a(r, c) = -scale * ncc / va;
      k1_a(r, c) = scale * (-w.sb(r, c) / 9.0 * inv_sqrt + ncc * w.sa(r, c) / (9.0 * va));
      // and symmetrically for b
      ka_b(r, c) = scale * inv_sqrt;
      kb_b(r, c) = -scale * ncc / vb;
      k1_b(r, c) = scale * (-w.sa(r, c) / 9.0 * inv_sqrt + ncc * w.sb(r, c) / (9.0 * vb));
    }
  // a texel participates in the 3x3 block of windows around it
  for (int r = 0; r < res; ++r)
    for (int c = 0; c < res; ++c) {
      if (!a.mask(r, c) || !b.mask(r, c)) continue;
      double sum_ka_a = 0, sum_kb_a = 0, sum_k1_a = 0, sum_ka_b = 0, sum_kb_b = 0, sum_k1_b = 0;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int wr = r + dr, wc = c + dc;
          if (wr < 1 || wr + 1 >= res || wc < 1 || wc + 1 >= res) continue;
          sum_ka_a += ka_a(wr, wc);
          sum_kb_a += kb_a(wr, wc);
          sum_k1_a += k1_a(wr, wc);
          sum_ka_b += ka_b(wr, wc);
          sum_kb_b += kb_b(wr, wc);
          sum_k1_b += k1_b(wr, wc);
        }
      abar(r, c) += sum_ka_a * a.intensity(r, c) + sum_kb_a * b.intensity(r, c) + sum_k1_a;
      bbar(r, c) += sum_ka_b * a.intensity(r, c) + sum_kb_b * b.intensity(r, c) + sum_k1_b;
    }
}

// --- landmark energy -----------------------------------------------------------

// Mean over views and over the 68 annotated vertices of squared pixel error.
inline double landmark_energy(const std::vector<std::vector<Vec3>>& per_view_vertices,
                              const std::vector<CameraView>& views,
                              const std::vector<int>& landmark_vertices) {
  if (views.empty()) fail("landmark_energy: no views");
  double sum = 0.0;
  for (std::size_t n = 0; n < views.size(); ++n) {
    if (views[n].landmarks68.size() != landmark_vertices.size())
      fail("landmark_energy: landmark count mismatch");
    for (std::size_t k = 0; k < landmark_vertices.size(); ++k) {
      const Vec2 p = project(per_view_vertices[n][landmark_vertices[k]], views[n]);
      sum += (views[n].landmarks68[k] - p).squaredNorm();
    }
  }
  return sum / (static_cast<double>(views.size()) * landmark_vertices.size());
}

// --- pose block ------------------------------------------------------------------

// Multi-view pose layout: per view [t(3), euler(3)], then one focal scale per
// view when focal optimization is on.
inline int mv_pose_dims(int n_views, bool optimize_focal) {
  return n_views * 6 + (optimize_focal ? n_views : 0);
}

struct CamPose {
  Mat3 rot;
  Vec3 t;
  std::array<Mat3, 3> drot;
  double focal;
  Vec2 principal;

  CamPose(const Eigen::Ref<const Eigen::VectorXd>& x6, double f, const Vec2& pp)
      : focal(f), principal(pp) {
    t = x6.segment<3>(0);
    const Vec3 e = x6.segment<3>(3);
    const Mat3 rx = detail::rot_x(e[0]), ry = detail::rot_y(e[1]), rz = detail::rot_z(e[2]);
    rot = rx * ry * rz;
    drot[0] = detail::drot_x(e[0]) * ry * rz;
    drot[1] = rx * detail::drot_y(e[1]) * rz;
    drot[2] = rx * ry * detail::drot_z(e[2]);
  }

  Vec3 to_camera(const Vec3& p) const { return rot * p + t; }

  // pbar: gradient wrt the projected pixel of world point v.
  void backward(const Vec3& v, const Vec3& vcam, const Vec2& pbar, Vec3& vbar,
                Eigen::Ref<Eigen::VectorXd> pose6_grad, double* focal_grad) const {
    const Eigen::Matrix<double, 2, 3> jproj = project_jacobian(vcam, focal);
    const Vec3 cbar = jproj.transpose() * pbar;
    vbar += rot.transpose() * cbar;
    pose6_grad.segment<3>(0) += cbar;
    for (int i = 0; i < 3; ++i) pose6_grad[3 + i] += cbar.dot(drot[i] * v);
    if (focal_grad) *focal_grad += pbar.dot(Vec2(vcam.x() / vcam.z(), vcam.y() / vcam.z()));
  }
};

inline Eigen::VectorXd cam_pose_to_vector(const CameraView& view) {
  Eigen::VectorXd x(6);
  x.segment<3>(0) = view.translation;
  x.segment<3>(3) = euler_xyz_from_matrix(view.rotation);
  return x;
}

// --- frozen per-iteration state ---------------------------------------------------

struct MvFrozen {
  FrozenBinding binding;
  std::vector<std::vector<bool>> visibility;          // per view, plain z-buffer test
  std::vector<std::vector<bool>> sampling_visibility; // footprint-safe, photometric term
  std::vector<std::vector<int>> contour_vertices;     // per view
  std::vector<std::vector<int>> nn_image_to_model;    // index into contour_vertices
  std::vector<std::vector<int>> nn_model_to_image;    // index into view.contour
};

struct MvProblem {
  const AsmContext* ctx = nullptr;
  const std::vector<CameraView>* views = nullptr;
  const std::vector<int>* landmark_vertices = nullptr;
  MvConfig cfg;
  UvRasterTable uv_table;
  ParamLayout layout;

  MvProblem(const AsmContext& context, const std::vector<CameraView>& view_list,
            const std::vector<int>& landmarks, const MvConfig& config)
      : ctx(&context), views(&view_list), landmark_vertices(&landmarks), cfg(config),
        uv_table(*context.mesh, config.uv_resolution),
        layout{context.skeleton->bone_count(), 0, 0} {
    if (view_list.size() < 2) fail("reconstruct: need at least two views");
  }

  void set_K(int K) {
    layout = ParamLayout{ctx->skeleton->bone_count(), K,
                         mv_pose_dims(static_cast<int>(views->size()), cfg.optimize_focal)};
  }

  AsmParams params_of(const Eigen::VectorXd& x) const {
    return AsmParams::unpack(x, layout.bones, layout.K);
  }
  CamPose pose_of(const Eigen::VectorXd& x, int view) const {
    const int off = layout.pose_offset() + 6 * view;
    const double f = cfg.optimize_focal
                         ? x[layout.pose_offset() + 6 * static_cast<int>(views->size()) + view]
                         : (*views)[view].focal;
    return CamPose(x.segment<6>(off), f, (*views)[view].principal);
  }

  // Discrete state at the base point x; refreshed once per optimizer step.
  MvFrozen freeze(const Eigen::VectorXd& x) const {
    MvFrozen fr;
    const AsmParams params = params_of(x);
    const AsmEval ev = asm_eval(*ctx, params);
    fr.binding = freeze_binding(ev);
    const std::size_t nviews = views->size();
    fr.visibility.resize(nviews);
    fr.sampling_visibility.resize(nviews);
    fr.contour_vertices.resize(nviews);
    fr.nn_image_to_model.resize(nviews);
    fr.nn_model_to_image.resize(nviews);
    for (std::size_t n = 0; n < nviews; ++n) {
      const CameraView& base_view = (*views)[n];
      const CamPose pose = pose_of(x, static_cast<int>(n));
      CameraView posed = base_view;
      posed.rotation = pose.rot;
      posed.translation = pose.t;
      posed.focal = pose.focal;
      fr.visibility[n] = zbuffer_visibility(ev.deformed, ctx->mesh->faces, posed,
                                            base_view.image.width(), base_view.image.height(),
                                            cfg.zbuffer_bias);
      fr.sampling_visibility[n] =
          sampling_visibility(ev.deformed, ctx->mesh->faces, posed, base_view.image.width(),
                              base_view.image.height(), cfg.zbuffer_bias);
      const auto contour_vis =
          zbuffer_visibility(ev.deformed, ctx->mesh->faces, posed, base_view.image.width(),
                             base_view.image.height(), cfg.contour_zbuffer_bias);
      const ModelContour contour = extract_model_contour(ev.deformed, ctx->mesh->faces, posed,
                                                         cfg.theta_deg, contour_vis);
      fr.contour_vertices[n] = contour.vertices;
      fr.nn_image_to_model[n] = nearest_indices(base_view.contour, contour.projected);
      fr.nn_model_to_image[n] = nearest_indices(contour.projected, base_view.contour);
    }
    return fr;
  }
};

// --- energy terms ------------------------------------------------------------------

// Shared forward state for one evaluation point.
struct MvEvalState {
  AsmEval ev;
  std::vector<CamPose> poses;
  std::vector<VertexSamples> samples;   // per view (photometric only)
  std::vector<UvIntensityMap> maps;     // per view
};

namespace detail {

inline MvEvalState mv_forward(const MvProblem& prob, const MvFrozen& frozen,
                              const Eigen::VectorXd& x, bool with_photometric) {
  MvEvalState st;
  st.ev = asm_eval(*prob.ctx, prob.params_of(x), &frozen.binding);
  const int nviews = static_cast<int>(prob.views->size());
  st.poses.reserve(nviews);
  for (int n = 0; n < nviews; ++n) st.poses.push_back(prob.pose_of(x, n));
  if (with_photometric) {
    st.samples.resize(nviews);
    st.maps.resize(nviews);
    for (int n = 0; n < nviews; ++n) {
      CameraView posed = (*prob.views)[n];
      posed.rotation = st.poses[n].rot;
      posed.translation = st.poses[n].t;
      posed.focal = st.poses[n].focal;
      st.samples[n] =
          sample_vertex_intensities(st.ev.deformed, posed, frozen.sampling_visibility[n]);
      st.maps[n] = unwrap_intensities(st.samples[n], *prob.ctx->mesh, prob.uv_table);
    }
  }
  return st;
}

}  // namespace detail

// Each term evaluates against a shared forward state; gradient contributions
// are scaled by an upstream weight, vertex adjoints accumulate into a shared
// buffer and the caller pulls them through the model chain once.
class LandmarkEnergy : public Objective {
 public:
  LandmarkEnergy(const MvProblem& prob, MvFrozen frozen) : prob_(&prob), frozen_(std::move(frozen)) {}
  const char* name() const override { return "landmark-energy"; }

  double value(const Eigen::VectorXd& x) const override {
    const MvEvalState st = detail::mv_forward(*prob_, frozen_, x, false);
    return eval(st, nullptr, nullptr, 1.0);
  }
  double value_and_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
    const MvEvalState st = detail::mv_forward(*prob_, frozen_, x, false);
    Eigen::MatrixXd vbar = Eigen::MatrixXd::Zero(prob_->ctx->mesh->vertex_count(), 3);
    const double e = eval(st, &vbar, &grad, 1.0);
    asm_backward(*prob_->ctx, st.ev, vbar, grad);
    return e;
  }

  double eval(const MvEvalState& st, Eigen::MatrixXd* vbar, Eigen::VectorXd* grad,
              double weight) const {
    const auto& views = *prob_->views;
    const auto& lms = *prob_->landmark_vertices;
    const double inv = 1.0 / (static_cast<double>(views.size()) * lms.size());
    double sum = 0.0;
    for (std::size_t n = 0; n < views.size(); ++n) {
      const CamPose& pose = st.poses[n];
      for (std::size_t k = 0; k < lms.size(); ++k) {
        const Vec3 world = st.ev.deformed[lms[k]];
        const Vec3 cam = pose.to_camera(world);
        if (!(cam.z() > 0.0)) fail("behind-camera: landmark vertex behind view " + std::to_string(n));
        const Vec2 p = project_camera(cam, pose.focal, pose.principal);
        const Vec2 diff = p - views[n].landmarks68[k];
        sum += diff.squaredNorm();
        if (grad) {
          const Vec2 pbar = weight * 2.0 * inv * diff;
          Vec3 vb = Vec3::Zero();
          double* fg = focal_slot(grad, static_cast<int>(n));
          pose.backward(world, cam, pbar, vb, pose_slot(grad, static_cast<int>(n)), fg);
          vbar->row(lms[k]) += vb.transpose();
        }
      }
    }
    return sum * inv;
  }

 private:
  Eigen::Ref<Eigen::VectorXd> pose_slot(Eigen::VectorXd* grad, int n) const {
    return grad->segment(prob_->layout.pose_offset() + 6 * n, 6);
  }
  double* focal_slot(Eigen::VectorXd* grad, int n) const {
    if (!prob_->cfg.optimize_focal) return nullptr;
    return &(*grad)[prob_->layout.pose_offset() + 6 * static_cast<int>(prob_->views->size()) + n];
  }
  const MvProblem* prob_;
  MvFrozen frozen_;
};

// E_edge: mean over views of the chamfer between the image contour set and
// the projected frozen contour vertices, with frozen nearest neighbors.
class EdgeEnergy : public Objective {
 public:
  EdgeEnergy(const MvProblem& prob, MvFrozen frozen) : prob_(&prob), frozen_(std::move(frozen)) {}
  const char* name() const override { return "edge-energy"; }

  double value(const Eigen::VectorXd& x) const override {
    const MvEvalState st = detail::mv_forward(*prob_, frozen_, x, false);
    return eval(st, nullptr, nullptr, 1.0);
  }
  double value_and_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
    const MvEvalState st = detail::mv_forward(*prob_, frozen_, x, false);
    Eigen::MatrixXd vbar = Eigen::MatrixXd::Zero(prob_->ctx->mesh->vertex_count(), 3);
    const double e = eval(st, &vbar, &grad, 1.0);
    asm_backward(*prob_->ctx, st.ev, vbar, grad);
    return e;
  }

  double eval(const MvEvalState& st, Eigen::MatrixXd* vbar, Eigen::VectorXd* grad,
              double weight) const {
    const auto& views = *prob_->views;
    double total = 0.0;
    const double inv_views = 1.0 / static_cast<double>(views.size());
    for (std::size_t n = 0; n < views.size(); ++n) {
      const CamPose& pose = st.poses[n];
      const auto& cverts = frozen_.contour_vertices[n];
      if (cverts.empty()) fail("no-silhouette: frozen contour is empty");
      std::vector<Vec2> proj(cverts.size());
      std::vector<Vec3> cam(cverts.size());
      for (std::size_t i = 0; i < cverts.size(); ++i) {
        cam[i] = pose.to_camera(st.ev.deformed[cverts[i]]);
        if (!(cam[i].z() > 0.0)) fail("behind-camera: contour vertex behind view " + std::to_string(n));
        proj[i] = project_camera(cam[i], pose.focal, pose.principal);
      }
      const auto& img_pts = views[n].contour;
      if (img_pts.empty()) fail("edge-energy: view has no contour points");
      const double inv_a = 1.0 / static_cast<double>(img_pts.size());
      const double inv_b = 1.0 / static_cast<double>(proj.size());
      auto add_pair = [&](const Vec2& img, std::size_t model_idx, double pair_w) {
        const Vec2 diff = proj[model_idx] - img;
        total += inv_views * pair_w * diff.squaredNorm();
        if (grad) {
          const Vec2 pbar = weight * inv_views * 2.0 * pair_w * diff;
          Vec3 vb = Vec3::Zero();
          double* fg = focal_slot(grad, static_cast<int>(n));
          pose.backward(st.ev.deformed[cverts[model_idx]], cam[model_idx], pbar, vb,
                        pose_slot(grad, static_cast<int>(n)), fg);
          vbar->row(cverts[model_idx]) += vb.transpose();
        }
      };
      for (std::size_t i = 0; i < img_pts.size(); ++i)
        add_pair(img_pts[i], frozen_.nn_image_to_model[n][i], 0.5 * inv_a);
      for (std::size_t j = 0; j < proj.size(); ++j)
        add_pair(img_pts[frozen_.nn_model_to_image[n][j]], j, 0.5 * inv_b);
    }
    return total;
  }

 private:
  Eigen::Ref<Eigen::VectorXd> pose_slot(Eigen::VectorXd* grad, int n) const {
    return grad->segment(prob_->layout.pose_offset() + 6 * n, 6);
  }
  double* focal_slot(Eigen::VectorXd* grad, int n) const {
    if (!prob_->cfg.optimize_focal) return nullptr;
    return &(*grad)[prob_->layout.pose_offset() + 6 * static_cast<int>(prob_->views->size()) + n];
  }
  const MvProblem* prob_;
  MvFrozen frozen_;
};

// E_pc: mean over view pairs of (1 - LNCC) between uv intensity maps
// (or the literal mean LNCC under the flag).
class PhotometricEnergy : public Objective {
 public:
  PhotometricEnergy(const MvProblem& prob, MvFrozen frozen) : prob_(&prob), frozen_(std::move(frozen)) {}
  const char* name() const override { return "photometric-energy"; }

  double value(const Eigen::VectorXd& x) const override {
    const MvEvalState st = detail::mv_forward(*prob_, frozen_, x, true);
    return eval(st, nullptr, nullptr, 1.0);
  }
  double value_and_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
    const MvEvalState st = detail::mv_forward(*prob_, frozen_, x, true);
    Eigen::MatrixXd vbar = Eigen::MatrixXd::Zero(prob_->ctx->mesh->vertex_count(), 3);
    const double e = eval(st, &vbar, &grad, 1.0);
    asm_backward(*prob_->ctx, st.ev, vbar, grad);
    return e;
  }

  double eval(const MvEvalState& st, Eigen::MatrixXd* vbar, Eigen::VectorXd* grad,
              double weight) const {
    const auto& views = *prob_->views;
    const int nviews = static_cast<int>(views.size());
    if (nviews < 2) fail("photometric-energy: need at least two views");
    const int res = prob_->cfg.uv_resolution;
    const double pair_weight = 2.0 / (static_cast<double>(nviews) * (nviews - 1));
    const double sign = prob_->cfg.literal_photometric ? 1.0 : -1.0;

    std::vector<Eigen::MatrixXd> map_bars;
    if (grad) map_bars.assign(nviews, Eigen::MatrixXd::Zero(res, res));

    double total = 0.0;
    for (int i = 0; i < nviews; ++i)
      for (int j = i + 1; j < nviews; ++j) {
        const auto w = detail::lncc_windows(st.maps[i], st.maps[j]);
        total += pair_weight * (prob_->cfg.literal_photometric ? w.mean : 1.0 - w.mean);
        if (grad)
          lncc_backward(st.maps[i], st.maps[j], w, weight * sign * pair_weight, map_bars[i],
                        map_bars[j]);
      }

    if (grad) {
      const int nv = prob_->ctx->mesh->vertex_count();
      for (int n = 0; n < nviews; ++n) {
        // texel adjoints -> per-vertex intensity adjoints via the fixed splat
        Eigen::VectorXd sbar = Eigen::VectorXd::Zero(nv);
        for (int ty = 0; ty < res; ++ty)
          for (int tx = 0; tx < res; ++tx) {
            if (!st.maps[n].mask(ty, tx)) continue;
            const double g = map_bars[n](ty, tx);
            if (g == 0.0) continue;
            const auto& tri = prob_->ctx->mesh->faces[prob_->uv_table.face(tx, ty)];
            const Bary& b = prob_->uv_table.bary(tx, ty);
            sbar[tri[0]] += g * b.alpha;
            sbar[tri[1]] += g * b.beta;
            sbar[tri[2]] += g * b.gamma;
          }
        // intensity -> pixel position -> world vertex and pose
        for (int v = 0; v < nv; ++v) {
          if (sbar[v] == 0.0 || !st.samples[n].visible[v]) continue;
          const Vec2 igrad = bilinear_gradient(views[n].image, st.samples[n].pixel[v]);
          const Vec2 pbar = sbar[v] * igrad;
          Vec3 vb = Vec3::Zero();
          double* fg = focal_slot(grad, n);
          st.poses[n].backward(st.ev.deformed[v], st.samples[n].camera[v], pbar, vb,
                               pose_slot(grad, n), fg);
          vbar->row(v) += vb.transpose();
        }
      }
    }
    return total;
  }

 private:
  Eigen::Ref<Eigen::VectorXd> pose_slot(Eigen::VectorXd* grad, int n) const {
    return grad->segment(prob_->layout.pose_offset() + 6 * n, 6);
  }
  double* focal_slot(Eigen::VectorXd* grad, int n) const {
    if (!prob_->cfg.optimize_focal) return nullptr;
    return &(*grad)[prob_->layout.pose_offset() + 6 * static_cast<int>(prob_->views->size()) + n];
  }
  const MvProblem* prob_;
  MvFrozen frozen_;
};

// E_total = l1 E_lmk + l2 E_edge + l3 E_pc + l4 E_reg with one shared
// forward pass and one pullback through the model chain.
class TotalEnergy : public Objective {
 public:
  TotalEnergy(const MvProblem& prob, MvFrozen frozen, const AsmParams& init)
      : prob_(&prob),
        lmk_(prob, frozen),
        edge_(prob, frozen),
        pc_(prob, frozen),
        reg_(init, prob.cfg.reg, prob.layout.pose_dims),
        frozen_(std::move(frozen)) {}

  const char* name() const override { return "total-energy"; }

  double value(const Eigen::VectorXd& x) const override {
    const MvEvalState st = detail::mv_forward(*prob_, frozen_, x, true);
    const MvConfig& cfg = prob_->cfg;
    return cfg.lambda1 * lmk_.eval(st, nullptr, nullptr, 1.0) +
           cfg.lambda2 * edge_.eval(st, nullptr, nullptr, 1.0) +
           cfg.lambda3 * pc_.eval(st, nullptr, nullptr, 1.0) + cfg.lambda4 * reg_.value(x);
  }

  double value_and_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
    const MvEvalState st = detail::mv_forward(*prob_, frozen_, x, true);
    const MvConfig& cfg = prob_->cfg;
    Eigen::MatrixXd vbar = Eigen::MatrixXd::Zero(prob_->ctx->mesh->vertex_count(), 3);
    double total = 0.0;
    total += cfg.lambda1 * lmk_.eval(st, &vbar, &grad, cfg.lambda1);
    total += cfg.lambda2 * edge_.eval(st, &vbar, &grad, cfg.lambda2);
    total += cfg.lambda3 * pc_.eval(st, &vbar, &grad, cfg.lambda3);
    asm_backward(*prob_->ctx, st.ev, vbar, grad);
    Eigen::VectorXd reg_grad = Eigen::VectorXd::Zero(x.size());
    total += cfg.lambda4 * reg_.value_and_grad(x, reg_grad);
    grad += cfg.lambda4 * reg_grad;
    return total;
  }

 private:
  const MvProblem* prob_;
  LandmarkEnergy lmk_;
  EdgeEnergy edge_;
  PhotometricEnergy pc_;
  RegEnergy reg_;
  MvFrozen frozen_;
};


// --- reconstruction loop --------------------------------------------------------

struct ReconstructResult {
  AsmParams params;
  std::vector<Eigen::VectorXd> poses;  // per view [t(3), euler(3)]
  std::vector<double> focals;
  std::vector<double> history;
  double final_energy = 0.0;
};

// Joint first-order minimization of the total energy over the model
// parameters and per-view poses. Discrete sets are refreshed every iteration
// and frozen within each gradient evaluation. Returns the best iterate.
inline ReconstructResult reconstruct(const Mesh& mesh, const Skeleton& skeleton,
                                     const std::vector<CameraView>& views, const MvConfig& cfg,
                                     const AsmParams& init, const std::vector<int>& landmark_vertices,
                                     int threads = 1) {
  if (views.size() < 2) fail("reconstruct: need at least two views with landmarks and contours");
  for (const CameraView& v : views) v.validate();
  AsmContext ctx(mesh, skeleton, threads);
  MvProblem prob(ctx, views, landmark_vertices, cfg);
  prob.set_K(init.K);
  const ParamLayout& lay = prob.layout;

  Eigen::VectorXd x(lay.total_dims());
  x.head(lay.model_dims()) = init.pack();
  const int nviews = static_cast<int>(views.size());
  for (int n = 0; n < nviews; ++n) x.segment<6>(lay.pose_offset() + 6 * n) = cam_pose_to_vector(views[n]);
  if (cfg.optimize_focal)
    for (int n = 0; n < nviews; ++n) x[lay.pose_offset() + 6 * nviews + n] = views[n].focal;

  AdamState adam(x.size());
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;

  ReconstructResult out;
  out.history.reserve(cfg.iterations + 1);
  Eigen::VectorXd best_x = x;
  double best_energy = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const MvFrozen frozen = prob.freeze(x);
    const TotalEnergy energy(prob, frozen, init);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(x.size());
    const double e = energy.value_and_grad(x, grad);
    if (!std::isfinite(e) || !grad.allFinite())
      fail("reconstruct: non-finite energy or gradient at iteration " + std::to_string(iter));
    out.history.push_back(e);
    if (e < best_energy) {
      best_energy = e;
      best_x = x;
    }
    adam_step(adam, grad, x, adam_cfg);
    try {  // a step that breaks weight coverage is rolled back
      (void)asm_eval(ctx, prob.params_of(x));
    } catch (const Error&) {
      x = best_x;
    }
  }
  {
    const MvFrozen frozen = prob.freeze(x);
    const TotalEnergy energy(prob, frozen, init);
    const double e = energy.value(x);
    out.history.push_back(e);
    if (e < best_energy) {
      best_energy = e;
      best_x = x;
    }
  }

  out.params = prob.params_of(best_x);
  for (int n = 0; n < nviews; ++n) out.poses.push_back(best_x.segment<6>(lay.pose_offset() + 6 * n));
  for (int n = 0; n < nviews; ++n)
    out.focals.push_back(cfg.optimize_focal ? best_x[lay.pose_offset() + 6 * nviews + n]
                                            : views[n].focal);
  out.final_energy = best_energy;
  return out;
}

// Root-mean-square 3D vertex error between two deformations of one template.
inline double vertex_rmse(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.size() != b.size() || a.empty()) fail("vertex_rmse: size mismatch");
  double sum = 0.0;
  for (std::size_t v = 0; v < a.size(); ++v) sum += (a[v] - b[v]).squaredNorm();
  return std::sqrt(sum / a.size());
}

}  // namespace askin
