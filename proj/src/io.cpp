#include "taskgrasp/io.hpp"

#include "taskgrasp/error.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace taskgrasp::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

std::ifstream open_in(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot open " + path.string());
  return f;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
  return f;
}

template <class T>
void put(std::ostream& o, T v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const fs::path& path) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) fail(ErrorKind::InvalidInput, path.string() + ": truncated");
  return v;
}

// Next whitespace-delimited PGM header token, skipping # comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

std::string read_text(const fs::path& path) {
  auto f = open_in(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  auto f = open_out(path);
  f << text;
  if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidInput, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

Pgm read_pgm(const fs::path& path) {
  auto f = open_in(path);
  Pgm img;
  try {
    if (pgm_token(f) != "P5") fail(ErrorKind::InvalidInput, path.string() + ": not a binary PGM");
    img.width = std::stoi(pgm_token(f));
    img.height = std::stoi(pgm_token(f));
    img.maxval = std::stoi(pgm_token(f));
  } catch (const std::logic_error&) {
    fail(ErrorKind::InvalidInput, path.string() + ": malformed PGM header");
  }
  if (img.width <= 0 || img.height <= 0 || img.maxval <= 0 || img.maxval > 65535)
    fail(ErrorKind::InvalidInput, path.string() + ": bad PGM dimensions");
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  const bool wide = img.maxval > 255;
  std::vector<unsigned char> raw(n * (wide ? 2 : 1));
  if (!f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    fail(ErrorKind::InvalidInput, path.string() + ": truncated PGM data");
  img.data.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    img.data[i] = wide ? static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]) : raw[i];
  return img;
}

void write_pgm(const fs::path& path, const Pgm& img) {
  auto f = open_out(path);
  f << "P5\n" << img.width << " " << img.height << "\n" << img.maxval << "\n";
  const bool wide = img.maxval > 255;
  std::vector<unsigned char> raw;
  raw.reserve(img.data.size() * 2);
  for (std::uint16_t v : img.data) {
    if (wide) raw.push_back(static_cast<unsigned char>(v >> 8));
    raw.push_back(static_cast<unsigned char>(v & 0xff));
  }
  f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

fusion::DepthFrame read_frame(const fs::path& sidecar) {
  const auto j = read_json(sidecar);
  const fs::path base = sidecar.parent_path();
  fusion::DepthFrame fr;
  fs::path depth_path, mask_path;
  try {
    depth_path = resolve(base, j.at("depth").get<std::string>());
    mask_path = resolve(base, j.at("mask").get<std::string>());
    const auto pose = j.at("pose").get<std::vector<double>>();
    if (pose.size() != 16) fail(ErrorKind::InvalidPose, sidecar.string() + ": pose needs 16 entries");
    const Eigen::Matrix4d m = matrix_from_row_major(pose);
    if (!is_rigid(m)) fail(ErrorKind::InvalidPose, sidecar.string() + ": pose is not rigid");
    fr.pose.matrix() = m;
    fr.intrinsics = sensor::intrinsics_from_json(j.at("intrinsics"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidInput, sidecar.string() + ": " + e.what());
  }
  if (!fs::exists(depth_path)) fail(ErrorKind::Io, "missing depth file " + depth_path.string());
  if (!fs::exists(mask_path)) fail(ErrorKind::Io, "missing mask file " + mask_path.string());
  const Pgm depth = read_pgm(depth_path);
  const Pgm mask = read_pgm(mask_path);
  if (depth.width != mask.width || depth.height != mask.height)
    fail(ErrorKind::InvalidInput, mask_path.string() + ": mask size differs from depth");
  fr.width = depth.width;
  fr.height = depth.height;
  fr.depth.assign(depth.data.begin(), depth.data.end());
  fr.mask.resize(mask.data.size());
  for (std::size_t i = 0; i < mask.data.size(); ++i) fr.mask[i] = mask.data[i] ? 255 : 0;
  fr.validate();
  return fr;
}

void write_frame(const fs::path& dir, const std::string& stem, const fusion::DepthFrame& frame,
                 const nlohmann::json& metadata) {
  Pgm depth{frame.width, frame.height, 65535, {}};
  Pgm mask{frame.width, frame.height, 255, {}};
  depth.data.reserve(frame.depth.size());
  for (std::size_t i = 0; i < frame.depth.size(); ++i) {
    const double d = frame.depth[i];
    const double r = std::round(d);
    depth.data.push_back(d > 0.0 ? static_cast<std::uint16_t>(std::min(r, 65535.0)) : 0);
    mask.data.push_back(frame.mask[i] ? 255 : 0);
  }
  write_pgm(dir / (stem + "_depth.pgm"), depth);
  write_pgm(dir / (stem + "_mask.pgm"), mask);
  nlohmann::json j{{"depth", stem + "_depth.pgm"},
                   {"mask", stem + "_mask.pgm"},
                   {"pose", to_row_major(frame.pose)},
                   {"intrinsics", sensor::to_json(frame.intrinsics)}};
  if (!metadata.empty()) j["metadata"] = metadata;
  write_json(dir / (stem + ".json"), j);
}

void write_ply(const fs::path& path, const PlyCloud& ply) {
  const std::size_t n = ply.cloud.size();
  if (!ply.score.empty() && ply.score.size() != n) fail(ErrorKind::InvalidInput, "score count does not match cloud");
  if (!ply.color.empty() && ply.color.size() != n) fail(ErrorKind::InvalidInput, "color count does not match cloud");
  auto f = open_out(path);
  f << "ply\nformat binary_little_endian 1.0\n";
  for (const auto& c : ply.comments) f << "comment " << c << "\n";
  f << "element vertex " << n << "\n";
  for (const char* p : {"x", "y", "z", "nx", "ny", "nz", "c", "u"}) f << "property float " << p << "\n";
  if (!ply.score.empty()) f << "property float score\n";
  if (!ply.color.empty()) f << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  f << "end_header\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = ply.cloud.points[i];
    for (int k = 0; k < 3; ++k) put(f, static_cast<float>(p.position[k]));
    for (int k = 0; k < 3; ++k) put(f, static_cast<float>(p.normal[k]));
    put(f, static_cast<float>(p.c));
    put(f, static_cast<float>(p.u));
    if (!ply.score.empty()) put(f, ply.score[i]);
    if (!ply.color.empty())
      for (auto v : ply.color[i]) put(f, v);
  }
  if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
}

namespace {

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

PlyType ply_type(const std::string& s, const fs::path& path) {
  if (s == "char" || s == "int8") return PlyType::I8;
  if (s == "uchar" || s == "uint8") return PlyType::U8;
  if (s == "short" || s == "int16") return PlyType::I16;
  if (s == "ushort" || s == "uint16") return PlyType::U16;
  if (s == "int" || s == "int32") return PlyType::I32;
  if (s == "uint" || s == "uint32") return PlyType::U32;
  if (s == "float" || s == "float32") return PlyType::F32;
  if (s == "double" || s == "float64") return PlyType::F64;
  fail(ErrorKind::InvalidInput, path.string() + ": unknown PLY type " + s);
}

double read_binary(std::istream& in, PlyType t, const fs::path& path) {
  switch (t) {
    case PlyType::I8: return get<std::int8_t>(in, path);
    case PlyType::U8: return get<std::uint8_t>(in, path);
    case PlyType::I16: return get<std::int16_t>(in, path);
    case PlyType::U16: return get<std::uint16_t>(in, path);
    case PlyType::I32: return get<std::int32_t>(in, path);
    case PlyType::U32: return get<std::uint32_t>(in, path);
    case PlyType::F32: return get<float>(in, path);
    case PlyType::F64: return get<double>(in, path);
  }
  return 0.0;
}

}  // namespace

PlyCloud read_ply(const fs::path& path) {
  auto f = open_in(path);
  std::string line;
  if (!std::getline(f, line) || line != "ply") fail(ErrorKind::InvalidInput, path.string() + ": not a PLY file");
  bool binary = false, in_vertex = false, seen_vertex = false;
  std::size_t count = 0;
  std::vector<std::pair<std::string, PlyType>> props;
  PlyCloud out;
  while (std::getline(f, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") binary = true;
      else if (fmt != "ascii") fail(ErrorKind::InvalidInput, path.string() + ": unsupported PLY format " + fmt);
    } else if (tag == "comment") {
      out.comments.push_back(line.size() > 8 ? line.substr(8) : std::string());
    } else if (tag == "element") {
      // vertex data is read first and the rest ignored, so trailing elements
      // (faces from mesh tools) are fine; leading ones must be empty
      std::string name;
      std::size_t n = 0;
      ls >> name >> n;
      in_vertex = name == "vertex";
      if (in_vertex) {
        if (seen_vertex) fail(ErrorKind::InvalidInput, path.string() + ": more than one vertex element");
        count = n;
        seen_vertex = true;
      } else if (!seen_vertex && n > 0) {
        fail(ErrorKind::InvalidInput, path.string() + ": element '" + name + "' precedes vertex");
      }
    } else if (tag == "property") {
      std::string type, name;
      ls >> type;
      if (!in_vertex) continue;
      if (type == "list") fail(ErrorKind::InvalidInput, path.string() + ": list properties unsupported on vertex");
      ls >> name;
      props.emplace_back(name, ply_type(type, path));
    } else if (tag == "end_header") {
      break;
    }
  }
  if (!seen_vertex) fail(ErrorKind::InvalidInput, path.string() + ": no vertex element");
  const auto find = [&](const char* name) -> int {
    for (std::size_t i = 0; i < props.size(); ++i)
      if (props[i].first == name) return static_cast<int>(i);
    return -1;
  };
  const int ix = find("x"), iy = find("y"), iz = find("z");
  if (ix < 0 || iy < 0 || iz < 0) fail(ErrorKind::InvalidInput, path.string() + ": vertex needs x y z");
  const int inx = find("nx"), iny = find("ny"), inz = find("nz"), ic = find("c"), iu = find("u");
  const int is = find("score"), ir = find("red"), ig = find("green"), ib = find("blue");
  std::vector<double> row(props.size());
  out.cloud.points.reserve(count);
  for (std::size_t v = 0; v < count; ++v) {
    for (std::size_t k = 0; k < props.size(); ++k) {
      if (binary) {
        row[k] = read_binary(f, props[k].second, path);
      } else if (!(f >> row[k])) {
        fail(ErrorKind::InvalidInput, path.string() + ": truncated ASCII PLY");
      }
    }
    const auto at = [&](int i) { return i < 0 ? 0.0 : row[static_cast<std::size_t>(i)]; };
    out.cloud.points.push_back({Vec3(at(ix), at(iy), at(iz)), Vec3(at(inx), at(iny), at(inz)), at(ic), at(iu)});
    if (is >= 0) out.score.push_back(static_cast<float>(at(is)));
    if (ir >= 0 && ig >= 0 && ib >= 0)
      out.color.push_back({static_cast<std::uint8_t>(at(ir)), static_cast<std::uint8_t>(at(ig)),
                           static_cast<std::uint8_t>(at(ib))});
  }
  return out;
}

void write_volume(const fs::path& path, const fusion::FusedVolume& vol) {
  auto f = open_out(path);
  f.write("PSDFVOL1", 8);
  for (int k = 0; k < 3; ++k) put(f, vol.origin()[k]);
  put(f, vol.voxel_size());
  for (int k = 0; k < 3; ++k) put(f, static_cast<std::int32_t>(vol.dims()[k]));
  put(f, vol.truncation());
  const auto m = vol.means();
  const auto v = vol.variances();
  const auto o = vol.observed_flags();
  f.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size_bytes()));
  f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
  f.write(reinterpret_cast<const char*>(o.data()), static_cast<std::streamsize>(o.size_bytes()));
  if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
}

fusion::FusedVolume read_volume(const fs::path& path) {
  auto f = open_in(path);
  char magic[8];
  if (!f.read(magic, 8) || std::memcmp(magic, "PSDFVOL1", 8) != 0)
    fail(ErrorKind::InvalidInput, path.string() + ": not a volume file");
  Vec3 origin;
  for (int k = 0; k < 3; ++k) origin[k] = get<double>(f, path);
  const double vs = get<double>(f, path);
  std::array<int, 3> dims{};
  for (int k = 0; k < 3; ++k) dims[k] = get<std::int32_t>(f, path);
  const double tau = get<double>(f, path);
  if (!(vs > 0.0) || dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
    fail(ErrorKind::InvalidInput, path.string() + ": bad volume header");
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  std::vector<double> mean(n), var(n);
  std::vector<std::uint8_t> obs(n);
  if (!f.read(reinterpret_cast<char*>(mean.data()), static_cast<std::streamsize>(n * sizeof(double))) ||
      !f.read(reinterpret_cast<char*>(var.data()), static_cast<std::streamsize>(n * sizeof(double))) ||
      !f.read(reinterpret_cast<char*>(obs.data()), static_cast<std::streamsize>(n)))
    fail(ErrorKind::InvalidInput, path.string() + ": truncated volume data");
  auto vol = fusion::FusedVolume::from_raw(origin, vs, dims, tau, std::move(mean), std::move(var), std::move(obs));
  vol.freeze();
  return vol;
}

}  // namespace taskgrasp::io
