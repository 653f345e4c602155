#include "taskgrasp/surface.hpp"

#include "taskgrasp/error.hpp"
#include "taskgrasp/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace taskgrasp::surface {

std::vector<Vec3> SurfaceCloud::positions() const {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.position);
  return out;
}

CloudColumns::CloudColumns(const SurfaceCloud& cloud) {
  x.reserve(cloud.size());
  y.reserve(cloud.size());
  z.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    x.push_back(p.position.x());
    y.push_back(p.position.y());
    z.push_back(p.position.z());
  }
}

double Mesh::area() const {
  double a = 0.0;
  for (const auto& t : triangles)
    a += 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
  return a;
}

Vec3 Mesh::face_normal(std::size_t t) const {
  const auto& tri = triangles[t];
  const Vec3 n = (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

namespace {

// Cube corner c sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
// Faces list their corners counter-clockwise seen from outside the cube.
constexpr int kFaces[6][4] = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4},
                              {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}};

struct CaseTable {
  std::array<std::array<int, 2>, 12> edge_corners{};
  // Per configuration: triangles as triples of cube-edge indices.
  std::array<std::vector<std::array<int, 3>>, 256> triangles;

  int edge_of(int a, int b) const {
    for (int e = 0; e < 12; ++e) {
      const auto& ec = edge_corners[static_cast<std::size_t>(e)];
      if ((ec[0] == a && ec[1] == b) || (ec[0] == b && ec[1] == a)) return e;
    }
    return -1;
  }
};

// Builds the case table from face rules instead of a hand-typed table. On
// every face, each boundary crossing from an empty to a solid corner is joined
// to the next solid-to-empty crossing (counter-clockwise); ambiguous faces
// therefore always separate their solid corners, which both cubes sharing the
// face agree on. The directed segments close into loops around the solid
// region, and fan triangulation of each loop yields outward-facing triangles.
CaseTable build_case_table() {
  CaseTable table;
  int e = 0;
  for (int a = 0; a < 8; ++a)
    for (int b = a + 1; b < 8; ++b)
      if (std::popcount(static_cast<unsigned>(a ^ b)) == 1)
        table.edge_corners[static_cast<std::size_t>(e++)] = {a, b};

  for (int config = 0; config < 256; ++config) {
    auto solid = [&](int c) { return ((config >> c) & 1) != 0; };
    std::array<int, 12> next;
    next.fill(-1);
    for (const auto& face : kFaces) {
      struct Crossing {
        int edge;
        bool enter;
      };
      std::vector<Crossing> xs;
      for (int i = 0; i < 4; ++i) {
        const int c0 = face[i], c1 = face[(i + 1) % 4];
        if (solid(c0) != solid(c1)) xs.push_back({table.edge_of(c0, c1), solid(c1)});
      }
      const std::size_t m = xs.size();
      for (std::size_t i = 0; i < m; ++i) {
        if (!xs[i].enter) continue;
        for (std::size_t s = 1; s < m; ++s) {
          const Crossing& o = xs[(i + s) % m];
          if (!o.enter) {
            next[static_cast<std::size_t>(xs[i].edge)] = o.edge;
            break;
          }
        }
      }
    }
    std::array<bool, 12> used{};
    for (int start = 0; start < 12; ++start) {
      if (next[static_cast<std::size_t>(start)] < 0 || used[static_cast<std::size_t>(start)])
        continue;
      std::vector<int> loop;
      for (int cur = start; cur >= 0 && !used[static_cast<std::size_t>(cur)];
           cur = next[static_cast<std::size_t>(cur)]) {
        used[static_cast<std::size_t>(cur)] = true;
        loop.push_back(cur);
      }
      for (std::size_t i = 1; i + 1 < loop.size(); ++i)
        table.triangles[static_cast<std::size_t>(config)].push_back({loop[0], loop[i], loop[i + 1]});
    }
  }
  return table;
}

const CaseTable& case_table() {
  static const CaseTable table = build_case_table();
  return table;
}

}  // namespace

Mesh marching_cubes(const fusion::FusedVolume& volume) {
  const CaseTable& table = case_table();
  const auto& d = volume.dims();
  const auto means = volume.means();
  const auto vars = volume.variances();
  Mesh mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;

  auto vertex_on = [&](int i, int j, int k, int ca, int cb) -> std::uint32_t {
    if (ca > cb) std::swap(ca, cb);
    const int axis = std::countr_zero(static_cast<unsigned>(ca ^ cb));
    const int li = i + (ca & 1), lj = j + ((ca >> 1) & 1), lk = k + ((ca >> 2) & 1);
    const std::uint64_t key = static_cast<std::uint64_t>(volume.index(li, lj, lk)) * 3 + axis;
    if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
    const int hi = li + (axis == 0), hj = lj + (axis == 1), hk = lk + (axis == 2);
    const std::size_t a = volume.index(li, lj, lk), b = volume.index(hi, hj, hk);
    const double va = means[a], vb = means[b];
    const double t = va / (va - vb);
    const Vec3 pa = volume.center(li, lj, lk), pb = volume.center(hi, hj, hk);
    const auto id = static_cast<std::uint32_t>(mesh.vertices.size());
    mesh.vertices.push_back(pa + t * (pb - pa));
    mesh.vertex_sigma.push_back((1 - t) * std::sqrt(vars[a]) + t * std::sqrt(vars[b]));
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int k = 0; k + 1 < d[2]; ++k)
    for (int j = 0; j + 1 < d[1]; ++j)
      for (int i = 0; i + 1 < d[0]; ++i) {
        int config = 0;
        bool complete = true;
        for (int c = 0; c < 8 && complete; ++c) {
          const std::size_t idx = volume.index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
          if (!volume.observed(idx)) complete = false;
          else if (means[idx] > 0.0) config |= 1 << c;
        }
        if (!complete || config == 0 || config == 255) continue;
        for (const auto& tri : table.triangles[static_cast<std::size_t>(config)]) {
          std::array<std::uint32_t, 3> ids{};
          for (int v = 0; v < 3; ++v) {
            const auto& ec = table.edge_corners[static_cast<std::size_t>(tri[v])];
            ids[static_cast<std::size_t>(v)] = vertex_on(i, j, k, ec[0], ec[1]);
          }
          if (ids[0] == ids[1] || ids[1] == ids[2] || ids[0] == ids[2]) continue;
          mesh.triangles.push_back(ids);
        }
      }
  return mesh;
}

namespace {

class DiskGrid {
 public:
  explicit DiskGrid(double r) : r_(r) {}

  bool clear_of(const Vec3& p, const std::vector<Vec3>& accepted) const {
    const Key c = key(p);
    const double r2 = r_ * r_;
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          const auto it = cells_.find(hash(Key{c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it == cells_.end()) continue;
          for (std::size_t i : it->second)
            if ((accepted[i] - p).squaredNorm() < r2) return false;
        }
    return true;
  }

  void insert(const Vec3& p, std::size_t id) { cells_[hash(key(p))].push_back(id); }

 private:
  using Key = std::array<std::int64_t, 3>;
  Key key(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / r_)),
            static_cast<std::int64_t>(std::floor(p.y() / r_)),
            static_cast<std::int64_t>(std::floor(p.z() / r_))};
  }
  static std::uint64_t hash(const Key& k) {
    return (static_cast<std::uint64_t>(k[0] & 0x1fffff) << 42) |
           (static_cast<std::uint64_t>(k[1] & 0x1fffff) << 21) |
           static_cast<std::uint64_t>(k[2] & 0x1fffff);
  }
  double r_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

}  // namespace

SurfaceCloud resample_mesh(const Mesh& mesh, const ExtractParams& params) {
  if (mesh.triangles.empty()) fail(ErrorKind::EmptySurface, "surface has no triangles");
  if (params.target_point_count == 0) fail(ErrorKind::InvalidConfig, "target point count is 0");

  const std::size_t nt = mesh.triangles.size();
  std::vector<double> cumulative(nt);
  std::vector<Vec3> vertex_normal(mesh.vertices.size(), Vec3::Zero());
  double total = 0.0;
  for (std::size_t t = 0; t < nt; ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec3 cr =
        (mesh.vertices[tri[1]] - mesh.vertices[tri[0]]).cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
    total += 0.5 * cr.norm();
    cumulative[t] = total;
    for (auto v : tri) vertex_normal[v] += cr;
  }
  if (!(total > 0.0)) fail(ErrorKind::EmptySurface, "surface has zero area");
  for (auto& n : vertex_normal) {
    const double len = n.norm();
    if (len > 0.0) n /= len;
  }

  const std::size_t target = params.target_point_count;
  const std::size_t pool_size = std::max<std::size_t>(10 * target, 1000);
  Rng rng(params.seed);
  std::vector<SurfacePoint> pool;
  pool.reserve(pool_size);
  for (std::size_t s = 0; s < pool_size; ++s) {
    const double pick = rng.uniform() * total;
    const std::size_t t = std::min<std::size_t>(
        static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) -
                                 cumulative.begin()),
        nt - 1);
    double r1 = rng.uniform(), r2 = rng.uniform();
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const double r0 = 1.0 - r1 - r2;
    const auto& tri = mesh.triangles[t];
    SurfacePoint p;
    p.position = r0 * mesh.vertices[tri[0]] + r1 * mesh.vertices[tri[1]] + r2 * mesh.vertices[tri[2]];
    Vec3 n = r0 * vertex_normal[tri[0]] + r1 * vertex_normal[tri[1]] + r2 * vertex_normal[tri[2]];
    if (n.norm() < 1e-9) n = mesh.face_normal(t);
    p.normal = n.normalized();
    p.c = r0 * mesh.vertex_sigma[tri[0]] + r1 * mesh.vertex_sigma[tri[1]] +
          r2 * mesh.vertex_sigma[tri[2]];
    pool.push_back(p);
  }

  // Dart throwing with a shrinking exclusion radius until exactly `target`
  // points are accepted. The pool is 10x larger, so this always terminates.
  double radius = std::sqrt(2.0 * total / (std::sqrt(3.0) * static_cast<double>(target)));
  std::vector<std::uint8_t> taken(pool.size(), 0);
  std::vector<Vec3> accepted_pos;
  SurfaceCloud cloud;
  cloud.points.reserve(target);
  while (cloud.size() < target) {
    DiskGrid grid(radius);
    for (std::size_t i = 0; i < accepted_pos.size(); ++i) grid.insert(accepted_pos[i], i);
    for (std::size_t i = 0; i < pool.size() && cloud.size() < target; ++i) {
      if (taken[i] || !grid.clear_of(pool[i].position, accepted_pos)) continue;
      taken[i] = 1;
      grid.insert(pool[i].position, accepted_pos.size());
      accepted_pos.push_back(pool[i].position);
      cloud.points.push_back(pool[i]);
    }
    radius *= 0.85;
  }
  return cloud;
}

SurfaceCloud extract_surface(const fusion::FusedVolume& volume, const ExtractParams& params) {
  if (!volume.frozen()) fail(ErrorKind::InvalidInput, "extraction requires a frozen volume");
  const Mesh mesh = marching_cubes(volume);
  if (mesh.triangles.empty()) fail(ErrorKind::EmptySurface, "volume has no zero crossing");
  return resample_mesh(mesh, params);
}

VariationResult surface_variation(std::span<const Vec3> points, std::size_t k) {
  if (k < 3) fail(ErrorKind::InvalidInput, "neighbourhood size must be at least 3");
  if (points.size() < k) fail(ErrorKind::InvalidInput, "cloud smaller than neighbourhood size");
  Vec3 lo = points[0], hi = points[0];
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double diag = (hi - lo).norm();
  const double cell =
      diag > 0.0 ? std::max(diag * 2.0 / std::sqrt(static_cast<double>(points.size())), 1e-9) : 1.0;
  const SpatialGrid grid(points, cell);

  VariationResult out;
  out.u.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto nn = grid.knn(points[i], k);
    Vec3 mean = Vec3::Zero();
    for (auto j : nn) mean += points[j];
    mean /= static_cast<double>(nn.size());
    Mat3 cov = Mat3::Zero();
    for (auto j : nn) cov += (points[j] - mean) * (points[j] - mean).transpose();
    cov /= static_cast<double>(nn.size());
    const Eigen::SelfAdjointEigenSolver<Mat3> es(cov, Eigen::EigenvaluesOnly);
    const Vec3 ev = es.eigenvalues().cwiseMax(0.0);
    const double sum = ev.sum();
    if (!(sum > 1e-18 * std::max(1.0, mean.squaredNorm()))) {
      out.u[i] = 0.0;
      ++out.degenerate;
      continue;
    }
    out.u[i] = std::clamp(ev[0] / sum, 0.0, 1.0 / 3.0);
  }
  return out;
}

VariationResult annotate_surface_variation(SurfaceCloud& cloud, std::size_t k) {
  const auto pos = cloud.positions();
  auto res = surface_variation(pos, k);
  for (std::size_t i = 0; i < cloud.size(); ++i) cloud.points[i].u = res.u[i];
  return res;
}

}  // namespace taskgrasp::surface
