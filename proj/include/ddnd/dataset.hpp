#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ddnd/ssde.hpp"

namespace ddnd {

// Binary PGM (P5, maxval 255). Frames live in [0,1] and are stored as bytes.
inline void write_pgm(const std::string& path, const Tensor& img) {
    check(img.ndim() == 4 && img.dim(0) == 1 && img.dim(1) == 1,
          "write_pgm: image must be [1,1,H,W]");
    const int h = img.dim(2), w = img.dim(3);
    std::ofstream os(path, std::ios::binary);
    check(static_cast<bool>(os), "write_pgm: cannot open '" + path + "'");
    os << "P5\n" << w << " " << h << "\n255\n";
    for (double v : img.data()) {
        const double c = std::clamp(v, 0.0, 1.0);
        const auto byte = static_cast<unsigned char>(std::lround(c * 255.0));
        os.put(static_cast<char>(byte));
    }
    check(static_cast<bool>(os), "write_pgm: write failed for '" + path + "'");
}

inline Tensor read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    check(static_cast<bool>(is), "read_pgm: cannot open '" + path + "'");
    std::string magic;
    is >> magic;
    check(magic == "P5", "read_pgm: '" + path + "' is not binary PGM");
    int w = 0, h = 0, maxval = 0;
    is >> w >> h >> maxval;
    check(w >= 1 && h >= 1, "read_pgm: bad dimensions in '" + path + "'");
    check(maxval == 255, "read_pgm: only maxval 255 is supported");
    is.get();  // single whitespace after the header
    std::vector<double> data(size_t(w) * h);
    for (auto& v : data) {
        const int b = is.get();
        check(b != EOF, "read_pgm: truncated pixel data in '" + path + "'");
        v = b / 255.0;
    }
    return Tensor::from_vec({1, 1, h, w}, std::move(data));
}

inline void write_floats(const std::string& path, const std::vector<float>& v) {
    std::ofstream os(path, std::ios::binary);
    check(static_cast<bool>(os), "write_floats: cannot open '" + path + "'");
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(float)));
    check(static_cast<bool>(os), "write_floats: write failed for '" + path + "'");
}

inline std::vector<float> read_floats(const std::string& path, size_t expect_count) {
    std::ifstream is(path, std::ios::binary);
    check(static_cast<bool>(is), "read_floats: cannot open '" + path + "'");
    std::vector<float> v(expect_count);
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(expect_count * sizeof(float)));
    check(static_cast<bool>(is), "read_floats: '" + path + "' shorter than expected");
    return v;
}

inline void write_intrinsics(const std::string& path, const CameraIntrinsics& k) {
    std::ofstream os(path);
    check(static_cast<bool>(os), "write_intrinsics: cannot open '" + path + "'");
    os.precision(17);
    os << k.fx << " " << k.fy << " " << k.cx << " " << k.cy << "\n";
}

inline CameraIntrinsics read_intrinsics(const std::string& path) {
    std::ifstream is(path);
    check(static_cast<bool>(is), "read_intrinsics: cannot open '" + path + "'");
    CameraIntrinsics k;
    is >> k.fx >> k.fy >> k.cx >> k.cy;
    check(static_cast<bool>(is), "read_intrinsics: malformed '" + path + "'");
    check(k.fx > 0 && k.fy > 0, "read_intrinsics: focal lengths must be positive");
    return k;
}

inline std::string sample_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%05d", index);
    return buf;
}

// Layout per sample: prev/target/next.pgm, intrinsics.txt (fx fy cx cy) and
// oracle_depth.bin, f32 little-endian row-major depth of the target frame.
inline void save_triplet(const std::string& dir, const TripletSample& s) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_pgm(dir + "/prev.pgm", s.prev);
    write_pgm(dir + "/target.pgm", s.target);
    write_pgm(dir + "/next.pgm", s.next);
    write_intrinsics(dir + "/intrinsics.txt", s.K);
    if (!s.oracle_depth.empty()) write_floats(dir + "/oracle_depth.bin", s.oracle_depth);
}

inline TripletSample load_triplet(const std::string& dir) {
    TripletSample s;
    s.prev = read_pgm(dir + "/prev.pgm");
    s.target = read_pgm(dir + "/target.pgm");
    s.next = read_pgm(dir + "/next.pgm");
    s.K = read_intrinsics(dir + "/intrinsics.txt");
    s.validate();
    const std::string depth_path = dir + "/oracle_depth.bin";
    if (std::filesystem::exists(depth_path)) {
        const size_t n = size_t(s.target.dim(2)) * s.target.dim(3);
        s.oracle_depth = read_floats(depth_path, n);
    }
    return s;
}

inline std::vector<TripletSample> load_dataset(const std::string& root, int limit = 0) {
    namespace fs = std::filesystem;
    check(fs::is_directory(root), "load_dataset: '" + root + "' is not a directory");
    std::vector<std::string> dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory() && e.path().filename().string().rfind("sample_", 0) == 0)
            dirs.push_back(e.path().string());
    }
    check(!dirs.empty(), "load_dataset: no sample_* directories under '" + root + "'");
    std::sort(dirs.begin(), dirs.end());
    if (limit > 0 && int(dirs.size()) > limit) dirs.resize(limit);
    std::vector<TripletSample> out;
    out.reserve(dirs.size());
    for (const auto& d : dirs) out.push_back(load_triplet(d));
    return out;
}

}  // namespace ddnd
