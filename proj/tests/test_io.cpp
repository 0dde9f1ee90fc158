#include <transplat/io.hpp>

#include <gtest/gtest.h>

#include <cstring>
#include <random>

using namespace transplat;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("transplat_io_" + tag + "_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

GaussianCloud random_cloud(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> deg(0, 3), chans(1, 5), count(1, 30);
    std::normal_distribution<double> n(0.0, 2.0);
    GaussianCloud c(ParameterLayout{deg(rng), deg(rng), chans(rng)}, static_cast<std::size_t>(count(rng)));
    for (ParamGroup g : kAllParamGroups) {
        for (double& v : c.data(g)) v = f32(n(rng));
    }
    return c;
}

bool same_params(const GaussianCloud& a, const GaussianCloud& b) {
    if (!(a.layout() == b.layout()) || a.size() != b.size()) return false;
    for (ParamGroup g : kAllParamGroups) {
        if (a.data(g) != b.data(g)) return false;
    }
    return true;
}

std::vector<char> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

Camera random_camera(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::uniform_int_distribution<int> size(1, 640);
    const Vec3 eye(u(rng), u(rng), u(rng));
    Vec3 target(u(rng), u(rng), u(rng));
    if ((target - eye).norm() < 0.1) target += Vec3(1, 0, 0);
    const int w = size(rng), h = size(rng);
    Camera c = Camera::look_at(eye, target, Vec3(0.1, 1.0, 0.2).normalized(), 50.0 + 10 * std::abs(u(rng)),
                               50.0 + 10 * std::abs(u(rng)), w, h);
    c.cx += 0.1 * u(rng);
    return c;
}

} // namespace

TEST(Ply, RoundTripIsBitExact) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const GaussianCloud c = random_cloud(rng);
        const std::string bytes = encode_ply(c);
        const GaussianCloud back = decode_ply(bytes_of(bytes));
        ASSERT_TRUE(same_params(c, back)) << "trial " << trial;
        EXPECT_EQ(encode_ply(back), bytes);
    }
}

TEST(Ply, RecordSizeForDegreeZero) {
    GaussianCloud c(ParameterLayout{0, 0, 3}, 1);
    const std::string bytes = encode_ply(c);
    EXPECT_EQ(ply_property_names(c.layout()).size(), 17u);
    const std::size_t header = bytes.find("end_header\n") + std::strlen("end_header\n");
    EXPECT_EQ(bytes.size() - header, 68u);
}

TEST(Ply, PropertyOrderFollowsReferenceLayout) {
    const auto names = ply_property_names(ParameterLayout{1, 0, 2});
    const std::vector<std::string> expect{"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "f_rest_0", "f_rest_1",
                                          "f_rest_2", "f_rest_3", "f_rest_4", "f_rest_5", "f_rest_6", "f_rest_7",
                                          "f_rest_8", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1",
                                          "rot_2", "rot_3", "surf_dc_0", "surf_dc_1"};
    EXPECT_EQ(names, expect);
}

TEST(Ply, VanillaFileLoadsWithZeroEmbeddingAndWarning) {
    GaussianCloud c(ParameterLayout{1, 0, 3}, 2);
    c.set_position(1, Vec3(1, 2, 3));
    c.sh_rgb(1)[4] = 0.25;
    std::string bytes = encode_ply(c);
    // Strip the surf_* declarations and their payload.
    const std::size_t header_end = bytes.find("end_header\n") + std::strlen("end_header\n");
    std::string header = bytes.substr(0, header_end);
    for (int k = 0; k < 3; ++k) {
        const std::string line = "property float surf_dc_" + std::to_string(k) + "\n";
        header.erase(header.find(line), line.size());
    }
    std::string body;
    const std::size_t record = (3 + 12 + 1 + 3 + 4 + 3) * 4;
    for (std::size_t i = 0; i < 2; ++i) body += bytes.substr(header_end + i * record, record - 12);
    std::vector<std::string> warnings;
    const GaussianCloud back = decode_ply(bytes_of(header + body), &warnings);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_FALSE(warnings.empty());
    for (double v : back.data(ParamGroup::sh_surf)) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(back.position(1), Vec3(1, 2, 3));
    EXPECT_EQ(back.sh_rgb(1)[4], 0.25);
}

TEST(Ply, MalformedInputsReportOffsets) {
    const GaussianCloud c(ParameterLayout{0, 0, 3}, 3);
    const std::string good = encode_ply(c);
    EXPECT_THROW(decode_ply(bytes_of("plx\n" + good.substr(4))), ParseError);
    EXPECT_THROW(decode_ply(bytes_of(good.substr(0, 40))), ParseError);
    try {
        decode_ply(bytes_of(good.substr(0, good.size() - 5)));
        FAIL() << "truncated payload accepted";
    } catch (const ParseError& e) {
        EXPECT_GT(e.offset(), 0u);
    }
    std::string ascii = good;
    ascii.replace(ascii.find("binary_little_endian"), std::strlen("binary_little_endian"), "ascii");
    EXPECT_THROW(decode_ply(bytes_of(ascii)), ParseError);
}

TEST(Pfm, HeaderAndRoundTrip) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    Image d(64, 64, 1);
    for (double& v : d.data) v = f32(u(rng));
    const std::string bytes = encode_pfm(d);
    EXPECT_EQ(bytes.substr(0, 14), "Pf\n64 64\n-1.0\n");
    EXPECT_EQ(decode_pfm(bytes_of(bytes)).data, d.data);
}

TEST(Pfm, PropertyRoundTrip) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> dim(1, 40);
    std::normal_distribution<double> n(0.0, 100.0);
    for (int trial = 0; trial < 100; ++trial) {
        Image d(dim(rng), dim(rng), 1);
        for (double& v : d.data) v = f32(n(rng));
        const std::string bytes = encode_pfm(d);
        const Image back = decode_pfm(bytes_of(bytes));
        ASSERT_EQ(back.width, d.width);
        ASSERT_EQ(back.height, d.height);
        ASSERT_EQ(back.data, d.data);
        EXPECT_EQ(encode_pfm(back), bytes);
    }
}

TEST(Pfm, BigEndianAndErrors) {
    std::string be = "Pf\n2 1\n1.0\n";
    for (float f : {1.5f, -2.0f}) {
        char b[4];
        std::memcpy(b, &f, 4);
        for (int k = 3; k >= 0; --k) be.push_back(b[k]);
    }
    const Image img = decode_pfm(bytes_of(be));
    EXPECT_EQ(img.at(0, 0), 1.5);
    EXPECT_EQ(img.at(1, 0), -2.0);
    EXPECT_THROW(decode_pfm(bytes_of("PF\n2 1\n-1.0\n" + std::string(24, '\0'))), ParseError);
    EXPECT_THROW(decode_pfm(bytes_of("Pf\n2 2\n-1.0\n" + std::string(12, '\0'))), ParseError);
    EXPECT_THROW(decode_pfm(bytes_of("Pf\nx 2\n-1.0\n")), ParseError);
}

TEST(Cameras, IdentityAndTranslation) {
    json j = {{"fx", 100.0}, {"fy", 90.0}, {"cx", 32.0}, {"cy", 24.0}, {"width", 64}, {"height", 48},
              {"transform", {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}}}};
    const Camera id = camera_from_json(j);
    EXPECT_TRUE(id.rotation.isIdentity(0.0));
    EXPECT_TRUE(id.center.isZero(0.0));
    j["transform"] = {{1, 0, 0, 1.5}, {0, 1, 0, -2.0}, {0, 0, 1, 0.25}, {0, 0, 0, 1}};
    const Camera t = camera_from_json(j);
    const Vec3 translation = -(t.rotation * t.center);
    EXPECT_EQ(translation, Vec3(-1.5, 2.0, -0.25));
    j["transform"] = {1, 0, 0, 1.5, 0, 1, 0, -2.0, 0, 0, 1, 0.25, 0, 0, 0, 1};
    EXPECT_EQ(camera_from_json(j).center, t.center);
}

TEST(Cameras, NonRigidRejected) {
    json j = {{"fx", 100.0}, {"fy", 90.0}, {"cx", 32.0}, {"cy", 24.0}, {"width", 64}, {"height", 48},
              {"transform", {{1.001, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}}}};
    EXPECT_THROW(camera_from_json(j), ValidationError);
    j["transform"] = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, -1, 0}, {0, 0, 0, 1}};
    EXPECT_THROW(camera_from_json(j), ValidationError);
    j["transform"] = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0.5, 1}};
    EXPECT_THROW(camera_from_json(j), ValidationError);
    j.erase("fx");
    j["transform"] = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
    EXPECT_THROW(camera_from_json(j), ValidationError);
}

TEST(Cameras, CanonicalJsonRoundTrip) {
    std::mt19937_64 rng(4);
    TempDir dir("cams");
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Camera> cams;
        for (int k = 0; k < 1 + trial % 4; ++k) cams.push_back(random_camera(rng));
        const fs::path p = dir.path / "cameras.json";
        write_cameras(cams, p);
        const std::vector<char> first = read_file_bytes(p);
        const auto back = read_cameras(p);
        ASSERT_EQ(back.size(), cams.size());
        for (std::size_t i = 0; i < cams.size(); ++i) {
            EXPECT_EQ(back[i].rotation, cams[i].rotation);
            EXPECT_EQ(back[i].center, cams[i].center);
            EXPECT_EQ(back[i].fx, cams[i].fx);
            EXPECT_EQ(back[i].cx, cams[i].cx);
            EXPECT_EQ(back[i].width, cams[i].width);
        }
        write_cameras(back, p);
        ASSERT_EQ(read_file_bytes(p), first) << "trial " << trial;
    }
}

TEST(Json, ParseErrorCarriesOffset) {
    TempDir dir("json");
    write_file_bytes(dir.path / "bad.json", "{\"a\": [1, 2,, 3]}");
    try {
        read_json(dir.path / "bad.json");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_GT(e.offset(), 0u);
    }
}

TEST(Png, SurfQuantizationBound) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image surf(17, 9, 3);
    for (double& v : surf.data) v = u(rng);
    TempDir dir("png");
    write_png(surf, dir.path / "s.png");
    const Image back = read_png(dir.path / "s.png");
    ASSERT_TRUE(back.same_shape(surf));
    for (std::size_t i = 0; i < surf.data.size(); ++i) EXPECT_LE(std::abs(back.data[i] - surf.data[i]), 0.5 / 255.0 + 1e-12);
}

TEST(Png, MaskRoundTrip) {
    Mask m(5, 4);
    m.set(1, 2, true);
    m.set(4, 0, true);
    TempDir dir("mask");
    write_png(m, dir.path / "m.png");
    EXPECT_EQ(read_mask_png(dir.path / "m.png").data, m.data);
    write_file_bytes(dir.path / "junk.png", "not a png");
    EXPECT_THROW(read_png(dir.path / "junk.png"), ParseError);
}

TEST(RawPlanar, RoundTripAndErrors) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n(0.0, 1.0);
    Image img(7, 3, 5);
    for (double& v : img.data) v = f32(n(rng));
    const std::string bytes = encode_raw_planar(img);
    EXPECT_EQ(bytes.size(), 16u + 7 * 3 * 5 * 4);
    EXPECT_EQ(decode_raw_planar(bytes_of(bytes)).data, img.data);
    EXPECT_THROW(decode_raw_planar(bytes_of(bytes.substr(0, bytes.size() - 1))), ParseError);
    EXPECT_THROW(decode_raw_planar(bytes_of("XXXX" + bytes.substr(4))), ParseError);
}

TEST(Dataset, WriteReadAndExhaustiveErrors) {
    SceneSpec spec = default_scene_spec();
    spec.orbit.count = 4;
    spec.width = spec.height = 24;
    Dataset ds;
    ds.views = generate_views(spec);
    ds.train = train_view_indices(4);
    ds.test = test_view_indices(4);
    TempDir dir("ds");
    write_dataset(dir.path, ds, scene_to_json(spec));
    const Dataset back = read_dataset(dir.path);
    ASSERT_EQ(back.views.size(), 4u);
    EXPECT_EQ(back.train, ds.train);
    EXPECT_EQ(back.test, ds.test);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(back.views[i].object_mask.data, ds.views[i].object_mask.data);
        for (std::size_t p = 0; p < ds.views[i].depth.data.size(); ++p) {
            EXPECT_EQ(back.views[i].depth.data[p], f32(ds.views[i].depth.data[p]));
        }
    }
    const SceneSpec spec_back = scene_from_json(read_json(dir.path / "scene.json"));
    EXPECT_EQ(scene_to_json(spec_back), scene_to_json(spec));

    fs::remove(dir.path / "rgb" / "0001.png");
    fs::remove(dir.path / "depth_gt" / "0003.pfm");
    try {
        read_dataset(dir.path);
        FAIL() << "broken dataset accepted";
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("0001"), std::string::npos);
        EXPECT_NE(msg.find("0003"), std::string::npos);
    }
}

TEST(Dataset, NonThreeChannelSurfUsesRawFiles) {
    SceneSpec spec = default_scene_spec();
    spec.orbit.count = 2;
    spec.width = spec.height = 16;
    spec.surf_channels = 5;
    Dataset ds;
    ds.views = generate_views(spec);
    ds.train = {0};
    ds.test = {1};
    TempDir dir("raw");
    write_dataset(dir.path, ds);
    EXPECT_TRUE(fs::exists(dir.path / "surf" / "0000.f32"));
    const Dataset back = read_dataset(dir.path);
    ASSERT_EQ(back.views[1].surf.channels, 5);
    for (std::size_t p = 0; p < ds.views[1].surf.data.size(); ++p) {
        EXPECT_EQ(back.views[1].surf.data[p], f32(ds.views[1].surf.data[p]));
    }
}
