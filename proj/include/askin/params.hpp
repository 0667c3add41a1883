// The model's full degree-of-freedom vector: per-bone gmm parameters plus a
// nine-parameter transform, packed into a flat layout of J*(11+6K) doubles,
// optionally followed by a pose block owned by a solver.
#pragma once

#include <Eigen/Dense>
#include <cstring>
#include <string>
#include <vector>

#include "askin/gmm.hpp"
#include "askin/skeleton.hpp"

namespace askin {

inline int param_count(int J, int K) {
  if (J < 1 || K < 1) fail("param_count: J and K must be >= 1");
  return J * (11 + 6 * K);
}

enum class ParamGroup { Zeta, PiLogits, Mu, SigmaChol, Tau, Pose };

inline const char* param_group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Zeta: return "zeta";
    case ParamGroup::PiLogits: return "pi";
    case ParamGroup::Mu: return "mu";
    case ParamGroup::SigmaChol: return "sigma";
    case ParamGroup::Tau: return "tau";
    case ParamGroup::Pose: return "pose";
  }
  return "?";
}

// Maps (bone, group) to a contiguous slice of the flat vector. Slices
// partition the vector exactly: J blocks of [zeta | pi | mu | sigma | tau]
// followed by pose_dims trailing entries.
struct ParamLayout {
  int bones = 0;
  int K = 0;
  int pose_dims = 0;

  int per_bone() const { return 11 + 6 * K; }
  int model_dims() const { return bones * per_bone(); }
  int total_dims() const { return model_dims() + pose_dims; }
  int bone_offset(int j) const { return j * per_bone(); }
  int group_size(ParamGroup g) const {
    switch (g) {
      case ParamGroup::Zeta: return 2;
      case ParamGroup::PiLogits: return K;
      case ParamGroup::Mu: return 2 * K;
      case ParamGroup::SigmaChol: return 3 * K;
      case ParamGroup::Tau: return 9;
      case ParamGroup::Pose: return pose_dims;
    }
    return 0;
  }
  int offset(int bone, ParamGroup g) const {
    int off = bone_offset(bone);
    if (g == ParamGroup::Zeta) return off;
    off += 2;
    if (g == ParamGroup::PiLogits) return off;
    off += K;
    if (g == ParamGroup::Mu) return off;
    off += 2 * K;
    if (g == ParamGroup::SigmaChol) return off;
    off += 3 * K;
    if (g == ParamGroup::Tau) return off;
    return model_dims();  // pose block
  }
  int pose_offset() const { return model_dims(); }
};

struct AsmParams {
  std::vector<GmmBoneParams> gmm;  // one per bone
  std::vector<Tau> tau;            // one per bone
  int K = 0;

  int bone_count() const { return static_cast<int>(gmm.size()); }
  ParamLayout layout(int pose_dims = 0) const { return {bone_count(), K, pose_dims}; }

  static AsmParams neutral(const Mesh& mesh, const Skeleton& skeleton, int K) {
    AsmParams p;
    p.K = K;
    p.gmm = init_isotropic(mesh, skeleton, K);
    p.tau.assign(skeleton.bones.size(), tau_identity());
    return p;
  }

  Eigen::VectorXd pack() const {
    const ParamLayout lay = layout();
    Eigen::VectorXd x(lay.model_dims());
    for (int j = 0; j < bone_count(); ++j) {
      const GmmBoneParams& g = gmm[j];
      int off = lay.bone_offset(j);
      x[off++] = g.zeta.x();
      x[off++] = g.zeta.y();
      for (int k = 0; k < K; ++k) x[off++] = g.log_pi[k];
      for (int k = 0; k < K; ++k) {
        x[off++] = g.mu[k].x();
        x[off++] = g.mu[k].y();
      }
      for (int k = 0; k < K; ++k) {
        x[off++] = g.chol[k][0];
        x[off++] = g.chol[k][1];
        x[off++] = g.chol[k][2];
      }
      for (int i = 0; i < 9; ++i) x[off++] = tau[j][i];
    }
    return x;
  }

  static AsmParams unpack(const Eigen::VectorXd& x, int J, int K) {
    const ParamLayout lay{J, K, 0};
    if (x.size() < lay.model_dims()) fail("params: vector too short for layout");
    AsmParams p;
    p.K = K;
    p.gmm.resize(J);
    p.tau.resize(J);
    for (int j = 0; j < J; ++j) {
      GmmBoneParams& g = p.gmm[j];
      int off = lay.bone_offset(j);
      g.zeta = Vec2(x[off], x[off + 1]);
      off += 2;
      g.log_pi.resize(K);
      for (int k = 0; k < K; ++k) g.log_pi[k] = x[off++];
      g.mu.resize(K);
      for (int k = 0; k < K; ++k) {
        g.mu[k] = Vec2(x[off], x[off + 1]);
        off += 2;
      }
      g.chol.resize(K);
      for (int k = 0; k < K; ++k) {
        g.chol[k] = Eigen::Vector3d(x[off], x[off + 1], x[off + 2]);
        off += 3;
      }
      for (int i = 0; i < 9; ++i) p.tau[j][i] = x[off++];
    }
    return p;
  }
};

// --- model file ------------------------------------------------------------
//
// Binary container: magic, version, J, K, template hash, skeleton hash, then
// J*(11+6K) binary64 values in layout order. Self-describing enough to
// refuse foreign assets and to report where a truncated file stopped.

inline constexpr char kModelMagic[4] = {'A', 'S', 'K', '1'};
inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

template <class T>
void put(std::string& out, const T& v) {
  const auto* p = reinterpret_cast<const char*>(&v);
  out.append(p, sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& off, const std::string& path) {
  if (off + sizeof(T) > in.size())
    fail("model file " + path + ": truncated at byte offset " + std::to_string(off));
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace detail

inline std::string params_to_bytes(const AsmParams& params, std::uint64_t template_hash,
                                   std::uint64_t skeleton_hash) {
  std::string out;
  out.append(kModelMagic, 4);
  detail::put(out, kModelVersion);
  detail::put(out, static_cast<std::uint32_t>(params.bone_count()));
  detail::put(out, static_cast<std::uint32_t>(params.K));
  detail::put(out, template_hash);
  detail::put(out, skeleton_hash);
  const Eigen::VectorXd x = params.pack();
  for (Eigen::Index i = 0; i < x.size(); ++i) detail::put(out, x[i]);
  return out;
}

struct ModelFile {
  AsmParams params;
  std::uint64_t template_hash = 0;
  std::uint64_t skeleton_hash = 0;
};

inline ModelFile params_from_bytes(const std::string& bytes, const std::string& path) {
  std::size_t off = 0;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0)
    fail("model file " + path + ": bad magic");
  off = 4;
  const auto version = detail::take<std::uint32_t>(bytes, off, path);
  if (version != kModelVersion)
    fail("model file " + path + ": unsupported version " + std::to_string(version));
  const auto J = detail::take<std::uint32_t>(bytes, off, path);
  const auto K = detail::take<std::uint32_t>(bytes, off, path);
  if (J < 1 || K < 1 || J > 100000 || K > 1000) fail("model file " + path + ": implausible J/K");
  ModelFile mf;
  mf.template_hash = detail::take<std::uint64_t>(bytes, off, path);
  mf.skeleton_hash = detail::take<std::uint64_t>(bytes, off, path);
  const int dims = param_count(static_cast<int>(J), static_cast<int>(K));
  Eigen::VectorXd x(dims);
  for (int i = 0; i < dims; ++i) x[i] = detail::take<double>(bytes, off, path);
  if (off != bytes.size()) fail("model file " + path + ": trailing bytes at offset " + std::to_string(off));
  mf.params = AsmParams::unpack(x, static_cast<int>(J), static_cast<int>(K));
  return mf;
}

inline void save_params(const std::string& path, const AsmParams& params, std::uint64_t template_hash,
                        std::uint64_t skeleton_hash) {
  atomic_write(path, params_to_bytes(params, template_hash, skeleton_hash));
}

inline ModelFile load_params(const std::string& path, std::uint64_t expect_template_hash = 0,
                             std::uint64_t expect_skeleton_hash = 0) {
  ModelFile mf = params_from_bytes(read_file(path), path);
  if (expect_template_hash != 0 && mf.template_hash != expect_template_hash)
    fail("model file " + path + ": template hash mismatch (model was built for a different template)");
  if (expect_skeleton_hash != 0 && mf.skeleton_hash != expect_skeleton_hash)
    fail("model file " + path + ": skeleton hash mismatch (model was built for a different skeleton)");
  return mf;
}

// Text export for diffing: one value per line with group labels.
inline std::string params_to_text(const AsmParams& params) {
  std::string out;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "askin-params J=%d K=%d\n", params.bone_count(), params.K);
  out += buf;
  const Eigen::VectorXd x = params.pack();
  const ParamLayout lay = params.layout();
  for (int j = 0; j < params.bone_count(); ++j) {
    for (ParamGroup g : {ParamGroup::Zeta, ParamGroup::PiLogits, ParamGroup::Mu,
                         ParamGroup::SigmaChol, ParamGroup::Tau}) {
      const int off = lay.offset(j, g), n = lay.group_size(g);
      for (int i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof(buf), "bone%03d.%s[%d] = %.17g\n", j, param_group_name(g), i,
                      x[off + i]);
        out += buf;
      }
    }
  }
  return out;
}

}  // namespace askin
