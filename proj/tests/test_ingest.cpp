#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "loopsift/errors.hpp"
#include "loopsift/ingest.hpp"
#include "oracles.hpp"

using namespace loopsift;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("loopsift_test_ingest_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Intrinsics camera(int w, int h) {
    Intrinsics k;
    k.fx = k.fy = 10.0;
    k.cx = (w - 1) / 2.0;
    k.cy = (h - 1) / 2.0;
    k.width = w;
    k.height = h;
    return k;
}

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

void write_u16(const fs::path& path, const std::vector<std::uint16_t>& values) {
    std::ofstream out(path, std::ios::binary);
    for (std::uint16_t v : values) {
        const char bytes[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
        out.write(bytes, 2);
    }
}

}  // namespace

TEST_CASE("TUM trajectory parsing") {
    std::istringstream one("0 0 0 0 0 0 0 1\n");
    const Trajectory t = read_tum_trajectory(one, "one.txt");
    REQUIRE(t.size() == 1);
    CHECK(t[0].translation().norm() == 0.0);
    CHECK(t[0].angle() == 0.0);

    std::istringstream comments("# only a comment\n\n# another\n");
    CHECK_THROWS_AS(read_tum_trajectory(comments, "c.txt"), ParseError);

    std::istringstream bad("0 0 0 0 0 0 0 1\n1 0 0 x 0 0 0 1\n");
    const std::string msg = message_of([&] { read_tum_trajectory(bad, "bad.txt"); });
    CHECK(msg.find("bad.txt:2") != std::string::npos);

    std::istringstream short_line("0 1 2 3\n");
    CHECK_THROWS_AS(read_tum_trajectory(short_line, "s.txt"), ParseError);

    // Slightly off-unit quaternion: warned and renormalized.
    std::istringstream off("0 1 2 3 0 0 0 1.01\n");
    std::vector<std::string> warnings;
    const Trajectory r = read_tum_trajectory(off, "off.txt", &warnings);
    CHECK(warnings.size() == 1);
    CHECK(std::abs(r[0].rotation().norm() - 1.0) < 1e-12);
    CHECK(r[0].translation() == Vector3(1, 2, 3));

    // File order gives node ids regardless of timestamps.
    std::istringstream order("5 1 0 0 0 0 0 1\n2 2 0 0 0 0 0 1\n");
    const Trajectory o = read_tum_trajectory(order, "o.txt");
    CHECK(o[0].translation().x() == 1.0);
    CHECK(o[1].translation().x() == 2.0);
}

TEST_CASE("TUM trajectory round trip") {
    std::mt19937_64 rng(3);
    Trajectory t;
    for (int i = 0; i < 50; ++i) t.poses.push_back(oracle::random_pose(rng));
    std::stringstream io;
    write_tum_trajectory(io, t);
    const Trajectory back = read_tum_trajectory(io, "rt.txt");
    REQUIRE(back.size() == t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        CHECK((back[i].matrix() - t[i].matrix()).cwiseAbs().maxCoeff() < 1e-9);
    }
    CHECK_THROWS_AS(load_tum_trajectory("/nonexistent/traj.txt"), IoError);
}

TEST_CASE("match log parsing") {
    std::istringstream identity("0 1 2\n1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n");
    const auto loops = read_match_log(identity, "m.log");
    REQUIRE(loops.size() == 1);
    CHECK(loops[0].kind == LoopKind::Fragment);
    CHECK(loops[0].a == 0);
    CHECK(loops[0].b == 1);
    CHECK(loops[0].id == 0);
    CHECK(loops[0].measurement.matrix() == Matrix4::Identity());

    std::istringstream truncated("0 1 3\n1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n0 2 3\n1 0 0 0\n0 1 0 0\n");
    const std::string msg = message_of([&] { read_match_log(truncated, "t.log"); });
    CHECK(msg.find("entry 1") != std::string::npos);
    CHECK(msg.find("t.log") != std::string::npos);

    std::istringstream sheared("0 1 2\n1 0.1 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n");
    const std::string shear_msg = message_of([&] { read_match_log(sheared, "s.log"); });
    CHECK(shear_msg.find("entry 0") != std::string::npos);
    CHECK(shear_msg.find("orthonormal") != std::string::npos);
}

TEST_CASE("match log round trip") {
    std::mt19937_64 rng(4);
    std::vector<LoopCandidate> loops;
    for (int i = 0; i < 20; ++i) {
        LoopCandidate c;
        c.id = i;
        c.kind = LoopKind::Fragment;
        c.a = i;
        c.b = i + 3;
        c.measurement = oracle::random_pose(rng);
        loops.push_back(c);
    }
    std::stringstream io;
    write_match_log(io, loops, 30);
    const auto back = read_match_log(io, "rt.log");
    REQUIRE(back.size() == loops.size());
    for (std::size_t i = 0; i < loops.size(); ++i) {
        CHECK(back[i].a == loops[i].a);
        CHECK(back[i].b == loops[i].b);
        CHECK((back[i].measurement.matrix() - loops[i].measurement.matrix()).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("raw depth loading") {
    const auto dir = scratch_dir("depth");
    const Intrinsics k = camera(4, 3);
    write_u16(dir / "zero.raw", std::vector<std::uint16_t>(12, 0));
    const DepthFrame zero = load_depth_raw((dir / "zero.raw").string(), k, 5000.0, 0);
    for (float z : zero.depth) CHECK(z == 0.0f);

    write_u16(dir / "five.raw", std::vector<std::uint16_t>(12, 5000));
    const DepthFrame one = load_depth_raw((dir / "five.raw").string(), k, 5000.0, 3);
    CHECK(one.index == 3);
    for (float z : one.depth) CHECK(z == 1.0f);

    write_u16(dir / "short.raw", std::vector<std::uint16_t>(11, 5000));
    CHECK_THROWS_AS(load_depth_raw((dir / "short.raw").string(), k, 5000.0, 0), ParseError);
    CHECK_THROWS_AS(load_depth_raw((dir / "missing.raw").string(), k, 5000.0, 0), IoError);

    // Write then read then write gives identical bytes.
    std::vector<std::uint16_t> values(12);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<std::uint16_t>(i * 4099 % 65535);
    write_u16(dir / "a.raw", values);
    const DepthFrame a = load_depth_raw((dir / "a.raw").string(), k, 1000.0, 0);
    write_depth_raw((dir / "b.raw").string(), a, 1000.0);
    std::ifstream fa(dir / "a.raw", std::ios::binary), fb(dir / "b.raw", std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(fa)), {});
    const std::string bb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(ba == bb);
    fs::remove_all(dir);
}

TEST_CASE("manifest loading") {
    const auto dir = scratch_dir("manifest");
    const Intrinsics k = camera(4, 3);
    fs::create_directories(dir / "depth");
    write_u16(dir / "depth" / "000001.raw", std::vector<std::uint16_t>(12, 1000));
    write_u16(dir / "depth" / "000000.raw", std::vector<std::uint16_t>(12, 2000));
    write_intrinsics((dir / "intrinsics.txt").string(), k, 1000.0);
    std::ofstream(dir / "traj.txt") << "0 0 0 0 0 0 0 1\n1 0.1 0 0 0 0 0 1\n";
    std::ofstream(dir / "manifest.txt") << "# test dataset\ndepth_dir=depth\ndepth_scale=1000\n"
                                           "intrinsics=intrinsics.txt\ntrajectory=traj.txt\n";

    const DatasetManifest m = load_manifest(dir.string());
    CHECK(m.depth_files.size() == 2);
    CHECK(m.intrinsics.intrinsics.width == 4);
    CHECK_FALSE(m.pose_graph.has_value());
    const auto frames = load_depth_sequence(m);
    REQUIRE(frames.size() == 2);
    CHECK(frames[0].index == 0);
    CHECK(frames[0].depth[0] == 2.0f);  // sorted by file name
    CHECK(frames[1].depth[0] == 1.0f);

    std::ofstream(dir / "no_scale.txt") << "depth_dir=depth\nintrinsics=intrinsics.txt\ntrajectory=traj.txt\n";
    CHECK(message_of([&] { load_manifest((dir / "no_scale.txt").string()); }).find("depth_scale") !=
          std::string::npos);
    std::ofstream(dir / "mismatch.txt") << "depth_dir=depth\ndepth_scale=5000\nintrinsics=intrinsics.txt\n"
                                           "trajectory=traj.txt\n";
    CHECK_THROWS_AS(load_manifest((dir / "mismatch.txt").string()), ParseError);
    std::ofstream(dir / "dangling.txt") << "depth_dir=depth\ndepth_scale=1000\nintrinsics=intrinsics.txt\n"
                                           "trajectory=nope.txt\n";
    CHECK_THROWS_AS(load_manifest((dir / "dangling.txt").string()), IoError);
    std::ofstream(dir / "garbage.txt") << "depth_dir=depth\nthis line has no equals\n";
    CHECK(message_of([&] { load_manifest((dir / "garbage.txt").string()); }).find(":2") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("candidate CSV round trip and errors") {
    const auto dir = scratch_dir("csv");
    std::mt19937_64 rng(5);
    std::vector<CandidateRecord> records;
    for (int i = 0; i < 5; ++i) {
        CandidateRecord r;
        r.candidate.id = 10 + i;
        r.candidate.kind = i % 2 ? LoopKind::Fragment : LoopKind::Frame;
        r.candidate.a = i;
        r.candidate.b = 100 + i;
        r.candidate.measurement = oracle::random_pose(rng);
        if (i != 2) r.label = i % 3 == 0;
        records.push_back(r);
    }
    {
        std::ofstream out(dir / "c.csv");
        write_candidates_csv(out, records);
    }
    const auto back = load_candidates_csv((dir / "c.csv").string());
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(back[i].candidate.id == records[i].candidate.id);
        CHECK(back[i].candidate.kind == records[i].candidate.kind);
        CHECK(back[i].label == records[i].label);
        CHECK((back[i].candidate.measurement.matrix() - records[i].candidate.measurement.matrix())
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
    }
    std::ofstream(dir / "bad.csv") << "id,kind,a,b,tx,ty,tz,qx,qy,qz,qw\n0,edge,1,2,0,0,0,0,0,0,1\n";
    CHECK_THROWS_AS(load_candidates_csv((dir / "bad.csv").string()), ParseError);
    fs::remove_all(dir);
}
