#include "loopsift/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "loopsift/errors.hpp"

namespace fs = std::filesystem;

namespace loopsift {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::ifstream open_input(const std::string& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw IoError("cannot open " + path);
    return in;
}

std::ofstream open_output(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode);
    if (!out) throw IoError("cannot write " + path);
    return out;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(trim(f));
    return fields;
}

double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(where + ": expected a number, got '" + s + "'");
    }
}

int parse_int(const std::string& s, const std::string& where) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(where + ": expected an integer, got '" + s + "'");
    }
}

}  // namespace

Trajectory read_tum_trajectory(std::istream& in, const std::string& source_name, std::vector<std::string>* warnings) {
    Trajectory t;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        std::istringstream ss(s);
        double stamp, tx, ty, tz, qx, qy, qz, qw;
        std::string extra;
        if (!(ss >> stamp >> tx >> ty >> tz >> qx >> qy >> qz >> qw) || (ss >> extra)) {
            throw ParseError(source_name + ":" + std::to_string(line_no) +
                             ": expected 'timestamp tx ty tz qx qy qz qw'");
        }
        const Eigen::Quaterniond q(qw, qx, qy, qz);
        const double norm = q.norm();
        if (!(norm > 1e-12) || !std::isfinite(norm)) {
            throw ParseError(source_name + ":" + std::to_string(line_no) + ": degenerate quaternion");
        }
        if (std::abs(norm - 1.0) > 1e-3) {
            const std::string msg = source_name + ":" + std::to_string(line_no) + ": quaternion norm " +
                                    std::to_string(norm) + ", renormalized";
            if (warnings) {
                warnings->push_back(msg);
            } else {
                std::cerr << "warning: " << msg << '\n';
            }
        }
        t.poses.emplace_back(q, Vector3(tx, ty, tz));
    }
    if (t.size() == 0) throw ParseError(source_name + ": trajectory has no poses");
    return t;
}

Trajectory load_tum_trajectory(const std::string& path, std::vector<std::string>* warnings) {
    auto in = open_input(path);
    return read_tum_trajectory(in, path, warnings);
}

void write_tum_trajectory(std::ostream& out, const Trajectory& t, std::span<const double> timestamps) {
    const auto precision = out.precision();
    out << std::setprecision(17);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const Pose& p = t[i];
        const double stamp = i < timestamps.size() ? timestamps[i] : static_cast<double>(i);
        out << stamp << ' ' << p.translation().x() << ' ' << p.translation().y() << ' ' << p.translation().z() << ' '
            << p.rotation().x() << ' ' << p.rotation().y() << ' ' << p.rotation().z() << ' ' << p.rotation().w()
            << '\n';
    }
    out.precision(precision);
}

void write_tum_trajectory_file(const std::string& path, const Trajectory& t) {
    auto out = open_output(path);
    out << "# timestamp tx ty tz qx qy qz qw\n";
    write_tum_trajectory(out, t);
}

std::vector<LoopCandidate> read_match_log(std::istream& in, const std::string& source_name) {
    std::vector<LoopCandidate> loops;
    std::string line;
    auto next_line = [&](std::string& out) {
        while (std::getline(in, line)) {
            out = trim(line);
            if (!out.empty() && out[0] != '#') return true;
        }
        return false;
    };
    std::string header;
    int entry = 0;
    while (next_line(header)) {
        const std::string where = source_name + ": entry " + std::to_string(entry);
        std::istringstream hs(header);
        int i, j, total;
        if (!(hs >> i >> j >> total)) throw ParseError(where + ": expected header 'id_i id_j total'");
        Matrix4 m;
        for (int r = 0; r < 4; ++r) {
            std::string row;
            if (!next_line(row)) throw ParseError(where + ": truncated matrix, missing row " + std::to_string(r));
            std::istringstream rs(row);
            for (int c = 0; c < 4; ++c) {
                if (!(rs >> m(r, c))) throw ParseError(where + ": matrix row " + std::to_string(r) + " is incomplete");
            }
        }
        const Matrix3 rot = m.topLeftCorner<3, 3>();
        const double ortho = (rot.transpose() * rot - Matrix3::Identity()).cwiseAbs().maxCoeff();
        if (ortho > 1e-3 || rot.determinant() < 0.0) {
            throw ParseError(where + ": rotation block is not orthonormal (deviation " + std::to_string(ortho) + ")");
        }
        LoopCandidate c;
        c.id = entry;
        c.kind = LoopKind::Fragment;
        c.a = i;
        c.b = j;
        c.measurement = Pose::from_matrix(m);
        loops.push_back(c);
        ++entry;
    }
    return loops;
}

std::vector<LoopCandidate> load_match_log(const std::string& path) {
    auto in = open_input(path);
    return read_match_log(in, path);
}

void write_match_log(std::ostream& out, std::span<const LoopCandidate> loops, int total) {
    const auto precision = out.precision();
    out << std::setprecision(17);
    for (const LoopCandidate& c : loops) {
        out << c.a << ' ' << c.b << ' ' << total << '\n';
        const Matrix4 m = c.measurement.matrix();
        for (int r = 0; r < 4; ++r) {
            out << m(r, 0) << ' ' << m(r, 1) << ' ' << m(r, 2) << ' ' << m(r, 3) << '\n';
        }
    }
    out.precision(precision);
}

IntrinsicsFile load_intrinsics(const std::string& path) {
    auto in = open_input(path);
    std::string content, line;
    while (std::getline(in, line)) {
        const std::string s = trim(line);
        if (!s.empty() && s[0] != '#') content += s + ' ';
    }
    std::istringstream ss(content);
    IntrinsicsFile f;
    if (!(ss >> f.intrinsics.fx >> f.intrinsics.fy >> f.intrinsics.cx >> f.intrinsics.cy >> f.intrinsics.width >>
          f.intrinsics.height >> f.depth_scale)) {
        throw ParseError(path + ": expected 'fx fy cx cy width height depth-scale'");
    }
    try {
        f.intrinsics.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!(f.depth_scale > 0.0)) throw ParseError(path + ": depth scale must be positive");
    return f;
}

void write_intrinsics(const std::string& path, const Intrinsics& k, double depth_scale) {
    auto out = open_output(path);
    out << "# fx fy cx cy width height depth-scale\n"
        << std::setprecision(17) << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy << ' ' << k.width << ' '
        << k.height << ' ' << depth_scale << '\n';
}

DepthFrame load_depth_raw(const std::string& path, const Intrinsics& intrinsics, double depth_scale, int index) {
    auto in = open_input(path, std::ios::binary);
    const std::size_t count = static_cast<std::size_t>(intrinsics.width) * intrinsics.height;
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() != 2 * count) {
        throw ParseError(path + ": " + std::to_string(bytes.size()) + " bytes, expected " + std::to_string(2 * count) +
                         " for a " + std::to_string(intrinsics.width) + "x" + std::to_string(intrinsics.height) +
                         " 16-bit image");
    }
    DepthFrame f;
    f.intrinsics = intrinsics;
    f.index = index;
    f.depth.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint16_t raw = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
        f.depth[i] = static_cast<float>(raw / depth_scale);
    }
    return f;
}

void write_depth_raw(const std::string& path, const DepthFrame& frame, double depth_scale) {
    frame.validate();
    std::vector<unsigned char> bytes(frame.depth.size() * 2);
    for (std::size_t i = 0; i < frame.depth.size(); ++i) {
        const double scaled = std::round(static_cast<double>(frame.depth[i]) * depth_scale);
        const auto raw = static_cast<std::uint16_t>(std::clamp(scaled, 0.0, 65535.0));
        bytes[2 * i] = static_cast<unsigned char>(raw & 0xff);
        bytes[2 * i + 1] = static_cast<unsigned char>(raw >> 8);
    }
    auto out = open_output(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path);
}

DatasetManifest load_manifest(const std::string& path_in) {
    fs::path path(path_in);
    if (fs::is_directory(path)) path /= "manifest.txt";
    auto in = open_input(path.string());
    const fs::path root = path.parent_path();
    std::map<std::string, std::string> kv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
        }
        kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
    }
    auto require = [&](const std::string& key) {
        const auto it = kv.find(key);
        if (it == kv.end() || it->second.empty()) throw ParseError(path.string() + ": missing required key '" + key + "'");
        return it->second;
    };
    auto existing = [&](const std::string& rel) {
        const fs::path p = root / rel;
        if (!fs::exists(p)) throw IoError(path.string() + ": referenced file does not exist: " + p.string());
        return p.string();
    };
    auto optional_file = [&](const std::string& key) -> std::optional<std::string> {
        const auto it = kv.find(key);
        if (it == kv.end() || it->second.empty()) return std::nullopt;
        return existing(it->second);
    };

    DatasetManifest m;
    m.root = root.string();
    m.depth_scale = parse_double(require("depth_scale"), path.string() + ": depth_scale");
    if (!(m.depth_scale > 0.0)) throw ParseError(path.string() + ": depth_scale must be positive");
    m.intrinsics = load_intrinsics(existing(require("intrinsics")));
    if (std::abs(m.intrinsics.depth_scale - m.depth_scale) > 1e-9 * m.depth_scale) {
        throw ParseError(path.string() + ": depth_scale disagrees with the intrinsics file");
    }
    m.trajectory = existing(require("trajectory"));
    if (kv.count("depth_list")) {
        auto list = open_input(existing(kv["depth_list"]));
        while (std::getline(list, line)) {
            const std::string s = trim(line);
            if (!s.empty() && s[0] != '#') m.depth_files.push_back(existing(s));
        }
    } else {
        const std::string dir = existing(require("depth_dir"));
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".raw") {
                m.depth_files.push_back(entry.path().string());
            }
        }
        std::sort(m.depth_files.begin(), m.depth_files.end());
    }
    if (m.depth_files.empty()) throw ParseError(path.string() + ": no depth files");
    m.pose_graph = optional_file("pose_graph");
    m.match_log = optional_file("match_log");
    m.candidates = optional_file("candidates");
    m.ground_truth = optional_file("ground_truth");
    m.scene = optional_file("scene");
    return m;
}

std::vector<DepthFrame> load_depth_sequence(const DatasetManifest& manifest) {
    std::vector<DepthFrame> frames;
    frames.reserve(manifest.depth_files.size());
    for (std::size_t i = 0; i < manifest.depth_files.size(); ++i) {
        frames.push_back(load_depth_raw(manifest.depth_files[i], manifest.intrinsics.intrinsics, manifest.depth_scale,
                                        static_cast<int>(i)));
    }
    return frames;
}

std::vector<CandidateRecord> load_candidates_csv(const std::string& path) {
    auto in = open_input(path);
    std::vector<CandidateRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s.rfind("id,", 0) == 0) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        const auto f = split_csv(s);
        if (f.size() != 11 && f.size() != 12) throw ParseError(where + ": expected 11 or 12 fields");
        CandidateRecord r;
        LoopCandidate& c = r.candidate;
        c.id = parse_int(f[0], where);
        if (f[1] == "frame") {
            c.kind = LoopKind::Frame;
        } else if (f[1] == "fragment") {
            c.kind = LoopKind::Fragment;
        } else {
            throw ParseError(where + ": kind must be 'frame' or 'fragment'");
        }
        c.a = parse_int(f[2], where);
        c.b = parse_int(f[3], where);
        const Vector3 t(parse_double(f[4], where), parse_double(f[5], where), parse_double(f[6], where));
        const Eigen::Quaterniond q(parse_double(f[10], where), parse_double(f[7], where), parse_double(f[8], where),
                                   parse_double(f[9], where));
        if (!(q.norm() > 1e-12)) throw ParseError(where + ": degenerate quaternion");
        c.measurement = Pose(q, t);
        if (f.size() == 12 && !f[11].empty()) {
            if (f[11] == "1" || f[11] == "true") {
                r.label = true;
            } else if (f[11] == "0" || f[11] == "false") {
                r.label = false;
            } else {
                throw ParseError(where + ": label must be 0/1");
            }
        }
        records.push_back(r);
    }
    return records;
}

void write_candidates_csv(std::ostream& out, std::span<const CandidateRecord> records) {
    const bool labeled = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.label.has_value(); });
    const auto precision = out.precision();
    out << std::setprecision(17) << "id,kind,a,b,tx,ty,tz,qx,qy,qz,qw" << (labeled ? ",label" : "") << '\n';
    for (const CandidateRecord& r : records) {
        const LoopCandidate& c = r.candidate;
        const auto& t = c.measurement.translation();
        const auto& q = c.measurement.rotation();
        out << c.id << ',' << (c.kind == LoopKind::Frame ? "frame" : "fragment") << ',' << c.a << ',' << c.b << ','
            << t.x() << ',' << t.y() << ',' << t.z() << ',' << q.x() << ',' << q.y() << ',' << q.z() << ',' << q.w();
        if (labeled) {
            out << ',';
            if (r.label) out << (*r.label ? 1 : 0);
        }
        out << '\n';
    }
    out.precision(precision);
}

}  // namespace loopsift
