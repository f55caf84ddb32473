#include "wallkin/volume_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "wallkin/config.hpp"
#include "wallkin/error.hpp"

namespace wallkin {
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "raw volume I/O assumes a little-endian host");

namespace {

std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const fs::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_io("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw_io("write failed for " + path.string());
}

struct Sidecar {
  Geometry geom;
  fs::path data_file;
  int components = 1;
  std::string dtype = "float32";
};

Sidecar read_sidecar(const fs::path& path) {
  const auto kv = KeyValues::parse_file(path);
  Sidecar s;
  const auto dims = kv.get_ints("dims");
  if (dims.size() != 3) throw_io(path.string() + ": dims must have 3 entries");
  s.geom.dims = {dims[0], dims[1], dims[2]};
  s.geom.spacing = kv.get_vec3("spacing_mm");
  s.geom.origin = kv.get_vec3("origin_mm", Vec3::Zero());
  s.data_file = kv.get_string("data_file");
  s.components = kv.get_int("components", 1);
  s.dtype = kv.get_string("dtype", "float32");
  if (s.data_file.is_relative()) s.data_file = path.parent_path() / s.data_file;
  s.geom.validate();
  return s;
}

std::string fmt_vec(const Vec3& v) {
  std::ostringstream os;
  os.precision(17);
  os << v.x() << ' ' << v.y() << ' ' << v.z();
  return os.str();
}

void write_sidecar(const fs::path& path, const Geometry& g, const fs::path& data_name,
                   int components, const std::string& dtype) {
  std::ostringstream os;
  os << "# wallkin volume header\n";
  os << "dims = " << g.dims[0] << ' ' << g.dims[1] << ' ' << g.dims[2] << '\n';
  os << "spacing_mm = " << fmt_vec(g.spacing) << '\n';
  os << "origin_mm = " << fmt_vec(g.origin) << '\n';
  if (components != 1) os << "components = " << components << '\n';
  if (dtype != "float32") os << "dtype = " << dtype << '\n';
  os << "data_file = " << data_name.string() << '\n';
  const auto text = os.str();
  write_file(path, text.data(), text.size());
}

fs::path raw_path_for(const fs::path& header) {
  fs::path raw = header;
  raw.replace_extension(".raw");
  if (raw == header) raw += ".raw";
  return raw;
}

// --- NIfTI-1 ---------------------------------------------------------------

constexpr std::size_t kNiftiHeaderSize = 348;

template <typename T>
T read_at(const std::vector<char>& b, std::size_t off) {
  T v;
  std::memcpy(&v, b.data() + off, sizeof(T));
  return v;
}

template <typename T>
void write_at(std::vector<char>& b, std::size_t off, T v) {
  std::memcpy(b.data() + off, &v, sizeof(T));
}

}  // namespace

Volume3 load_nifti(const fs::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < kNiftiHeaderSize) throw_io(path.string() + ": truncated NIfTI header");
  const auto sizeof_hdr = read_at<std::int32_t>(bytes, 0);
  if (sizeof_hdr != 348) {
    const auto u = static_cast<std::uint32_t>(sizeof_hdr);
    const auto swapped = (u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24);
    if (swapped == 348u) throw_io(path.string() + ": big-endian NIfTI not supported");
    throw_io(path.string() + ": not a NIfTI-1 file");
  }
  if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0) {
    throw_io(path.string() + ": only single-file NIfTI-1 (.nii) is supported");
  }
  const auto ndim = read_at<std::int16_t>(bytes, 40);
  if (ndim != 3) throw_io(path.string() + ": only 3-D NIfTI volumes are supported (dim[0] = " +
                          std::to_string(ndim) + ")");
  Geometry g;
  for (int a = 0; a < 3; ++a) g.dims[a] = read_at<std::int16_t>(bytes, 42 + 2 * a);
  const auto datatype = read_at<std::int16_t>(bytes, 70);
  std::size_t bytes_per_voxel = 0;
  switch (datatype) {
    case 4: case 512: bytes_per_voxel = 2; break;
    case 16: bytes_per_voxel = 4; break;
    default:
      throw_io(path.string() + ": unsupported NIfTI datatype " + std::to_string(datatype) +
               " (int16, uint16, float32 only)");
  }
  Vec3 pixdim;
  for (int a = 0; a < 3; ++a) pixdim[a] = read_at<float>(bytes, 80 + 4 * a);
  const float vox_offset = read_at<float>(bytes, 108);
  float slope = read_at<float>(bytes, 112);
  const float inter = read_at<float>(bytes, 116);
  if (slope == 0.0f || !std::isfinite(slope)) slope = 1.0f;

  const auto qform_code = read_at<std::int16_t>(bytes, 252);
  const auto sform_code = read_at<std::int16_t>(bytes, 254);
  if (sform_code > 0) {
    double m[3][4];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) m[r][c] = read_at<float>(bytes, 280 + 16 * r + 4 * c);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        if (r != c && std::abs(m[r][c]) > 1e-6 * std::abs(m[r][r])) {
          throw_io(path.string() + ": oblique sform is not supported");
        }
      }
      if (!(m[r][r] > 0.0)) throw_io(path.string() + ": sform must be a positive axis-aligned scaling");
      g.spacing[r] = m[r][r];
      g.origin[r] = m[r][3];
    }
  } else if (qform_code > 0) {
    const float b = read_at<float>(bytes, 256), c = read_at<float>(bytes, 260),
                d = read_at<float>(bytes, 264);
    const float qfac = read_at<float>(bytes, 76);
    if (std::abs(b) > 1e-6f || std::abs(c) > 1e-6f || std::abs(d) > 1e-6f || qfac < 0.0f) {
      throw_io(path.string() + ": rotated qform is not supported");
    }
    g.spacing = pixdim;
    for (int a = 0; a < 3; ++a) g.origin[a] = read_at<float>(bytes, 268 + 4 * a);
  } else {
    g.spacing = pixdim;
    g.origin = Vec3::Zero();
  }
  g.validate();

  const std::size_t offset = static_cast<std::size_t>(vox_offset);
  const std::size_t need = g.voxel_count() * bytes_per_voxel;
  if (offset < kNiftiHeaderSize || bytes.size() < offset + need) {
    throw_io(path.string() + ": header/data size mismatch");
  }
  std::vector<float> data(g.voxel_count());
  const char* src = bytes.data() + offset;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double raw = 0.0;
    if (datatype == 4) {
      std::int16_t x; std::memcpy(&x, src + 2 * i, 2); raw = x;
    } else if (datatype == 512) {
      std::uint16_t x; std::memcpy(&x, src + 2 * i, 2); raw = x;
    } else {
      float x; std::memcpy(&x, src + 4 * i, 4); raw = x;
    }
    data[i] = static_cast<float>(raw * slope + inter);
  }
  return Volume3(g, std::move(data));
}

void save_nifti(const Volume3& v, const fs::path& path) {
  const auto& g = v.geometry();
  for (int a = 0; a < 3; ++a) {
    if (g.dims[a] > 32767) throw_io("volume too large for NIfTI-1 dims");
  }
  std::vector<char> hdr(352, 0);
  write_at<std::int32_t>(hdr, 0, 348);
  write_at<std::int16_t>(hdr, 40, 3);
  for (int a = 0; a < 3; ++a) write_at<std::int16_t>(hdr, 42 + 2 * a, static_cast<std::int16_t>(g.dims[a]));
  for (int a = 3; a < 7; ++a) write_at<std::int16_t>(hdr, 42 + 2 * a, 1);
  write_at<std::int16_t>(hdr, 70, 16);
  write_at<std::int16_t>(hdr, 72, 32);
  write_at<float>(hdr, 76, 1.0f);
  for (int a = 0; a < 3; ++a) write_at<float>(hdr, 80 + 4 * a, static_cast<float>(g.spacing[a]));
  write_at<float>(hdr, 108, 352.0f);
  write_at<float>(hdr, 112, 1.0f);
  hdr[123] = 2;  // xyzt_units: mm
  write_at<std::int16_t>(hdr, 252, 1);
  write_at<std::int16_t>(hdr, 254, 1);
  for (int a = 0; a < 3; ++a) write_at<float>(hdr, 268 + 4 * a, static_cast<float>(g.origin[a]));
  for (int r = 0; r < 3; ++r) {
    write_at<float>(hdr, 280 + 16 * r + 4 * r, static_cast<float>(g.spacing[r]));
    write_at<float>(hdr, 280 + 16 * r + 12, static_cast<float>(g.origin[r]));
  }
  std::memcpy(hdr.data() + 344, "n+1\0", 4);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_io("cannot write " + path.string());
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  out.write(reinterpret_cast<const char*>(v.data().data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (!out) throw_io("write failed for " + path.string());
}

Volume3 load_volume(const fs::path& path) {
  if (!fs::exists(path)) throw_io("no such file: " + path.string());
  if (path.extension() == ".nii") return load_nifti(path);
  const Sidecar s = read_sidecar(path);
  if (s.components != 1 || s.dtype != "float32") {
    throw_io(path.string() + ": scalar volumes must be float32 with one component");
  }
  const auto bytes = read_file(s.data_file);
  const std::size_t need = s.geom.voxel_count() * sizeof(float);
  if (bytes.size() != need) {
    throw_io(path.string() + ": header/data size mismatch (expected " + std::to_string(need) +
             " bytes, found " + std::to_string(bytes.size()) + ")");
  }
  std::vector<float> data(s.geom.voxel_count());
  std::memcpy(data.data(), bytes.data(), need);
  return Volume3(s.geom, std::move(data));
}

void save_volume(const Volume3& v, const fs::path& path) {
  if (path.extension() == ".nii") {
    save_nifti(v, path);
    return;
  }
  const auto raw = raw_path_for(path);
  write_file(raw, v.data().data(), v.size() * sizeof(float));
  write_sidecar(path, v.geometry(), raw.filename(), 1, "float32");
}

void save_vector_volume(const VectorVolume3& v, const fs::path& path) {
  const auto n = v.geometry.voxel_count();
  std::vector<double> inter(3 * n);
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) inter[3 * i + c] = v.channels[c][i];
  const auto raw = raw_path_for(path);
  write_file(raw, inter.data(), inter.size() * sizeof(double));
  write_sidecar(path, v.geometry, raw.filename(), 3, "float64");
}

VectorVolume3 load_vector_volume(const fs::path& path) {
  if (!fs::exists(path)) throw_io("no such file: " + path.string());
  const Sidecar s = read_sidecar(path);
  if (s.components != 3 || s.dtype != "float64") {
    throw_io(path.string() + ": vector volumes must be float64 with three components");
  }
  const auto bytes = read_file(s.data_file);
  const auto n = s.geom.voxel_count();
  if (bytes.size() != 3 * n * sizeof(double)) throw_io(path.string() + ": header/data size mismatch");
  VectorVolume3 v(s.geom);
  std::vector<double> inter(3 * n);
  std::memcpy(inter.data(), bytes.data(), bytes.size());
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) v.channels[c][i] = inter[3 * i + c];
  return v;
}

}  // namespace wallkin
