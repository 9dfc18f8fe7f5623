#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "msseg/data.hpp"
#include "support/tempdir.hpp"

using namespace msseg;

namespace {

Volume ramp_volume(VolumeDims d) {
    Volume v = make_volume(d);
    for (std::size_t i = 0; i < v.voxels.size(); ++i) v.voxels[i] = static_cast<float>(i % 97) / 7.0f;
    return v;
}

std::vector<std::uint8_t> bytes_of(const std::filesystem::path& p) { return read_file(p); }

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) { write_file_atomic(p, b); }

FormatErrc load_error(const std::filesystem::path& p, bool mask) {
    try {
        if (mask) {
            load_mask(p);
        } else {
            load_volume(p);
        }
    } catch (const FormatError& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error";
    return FormatErrc::io_error;
}

TEST(VolumeIo, RoundTripIsByteExact) {
    TempDir dir;
    const Volume v = ramp_volume({3, 5, 4});
    MaskVolume m = make_mask(v.dims);
    for (std::size_t i = 0; i < m.labels.size(); i += 3) m.labels[i] = 1;
    save_volume(v, dir / "a.vol");
    save_mask(m, dir / "a.msk");
    const Volume v2 = load_volume(dir / "a.vol");
    const MaskVolume m2 = load_mask(dir / "a.msk");
    EXPECT_EQ(v2.dims, v.dims);
    EXPECT_EQ(v2.voxels, v.voxels);
    EXPECT_EQ(m2.labels, m.labels);
    save_volume(v2, dir / "b.vol");
    save_mask(m2, dir / "b.msk");
    EXPECT_EQ(bytes_of(dir / "a.vol"), bytes_of(dir / "b.vol"));
    EXPECT_EQ(bytes_of(dir / "a.msk"), bytes_of(dir / "b.msk"));
    EXPECT_EQ(bytes_of(dir / "a.vol").size(), kVolumeHeaderBytes + 4 * 60);
    EXPECT_FALSE(std::filesystem::exists(dir / "a.vol.tmp"));
}

TEST(VolumeIo, HeaderLayoutIsLittleEndian) {
    TempDir dir;
    save_mask(make_mask({2, 3, 258}), dir / "m.msk");
    const auto b = bytes_of(dir / "m.msk");
    EXPECT_EQ(std::string(b.begin(), b.begin() + 6), "MSMSK1");
    EXPECT_EQ(b[6], kVolumeFormatVersion);
    EXPECT_EQ(b[7], 2);
    EXPECT_EQ(b[11], 3);
    EXPECT_EQ(b[15], 2);  // 258 = 0x0102
    EXPECT_EQ(b[16], 1);
}

TEST(VolumeIo, CorruptFilesAreRejectedWithCodes) {
    TempDir dir;
    save_volume(ramp_volume({2, 2, 2}), dir / "v.vol");
    const auto good = bytes_of(dir / "v.vol");

    auto bad = good;
    bad[0] = 'X';
    write_bytes(dir / "bad.vol", bad);
    EXPECT_EQ(load_error(dir / "bad.vol", false), FormatErrc::bad_magic);

    bad = good;
    bad[6] = 9;
    write_bytes(dir / "bad.vol", bad);
    EXPECT_EQ(load_error(dir / "bad.vol", false), FormatErrc::unsupported_version);

    bad.assign(good.begin(), good.end() - 1);
    write_bytes(dir / "bad.vol", bad);
    EXPECT_EQ(load_error(dir / "bad.vol", false), FormatErrc::truncated);

    bad.assign(good.begin(), good.begin() + 10);
    write_bytes(dir / "bad.vol", bad);
    EXPECT_EQ(load_error(dir / "bad.vol", false), FormatErrc::truncated);

    bad = good;
    bad.push_back(0);
    write_bytes(dir / "bad.vol", bad);
    EXPECT_EQ(load_error(dir / "bad.vol", false), FormatErrc::trailing_data);

    bad = good;
    for (int i = 7; i < 19; ++i) bad[i] = 0xFF;
    write_bytes(dir / "bad.vol", bad);
    EXPECT_EQ(load_error(dir / "bad.vol", false), FormatErrc::dim_overflow);

    bad = good;
    bad[19 + 3] = 0xFF;  // sign bit and exponent all ones: NaN
    bad[19 + 2] = 0xFF;
    write_bytes(dir / "bad.vol", bad);
    EXPECT_EQ(load_error(dir / "bad.vol", false), FormatErrc::invalid_payload);

    MaskVolume m = make_mask({1, 2, 2});
    save_mask(m, dir / "m.msk");
    auto mb = bytes_of(dir / "m.msk");
    mb.back() = 2;
    write_bytes(dir / "m.msk", mb);
    EXPECT_EQ(load_error(dir / "m.msk", true), FormatErrc::invalid_payload);
    EXPECT_EQ(load_error(dir / "missing.msk", true), FormatErrc::io_error);
}

TEST(VolumeIo, SavingInvalidDataFails) {
    TempDir dir;
    Volume v = ramp_volume({1, 2, 2});
    v.voxels[0] = -1.0f;
    EXPECT_THROW(save_volume(v, dir / "v.vol"), FormatError);
    MaskVolume m = make_mask({1, 2, 2});
    m.labels[0] = 3;
    EXPECT_THROW(save_mask(m, dir / "m.msk"), FormatError);
    EXPECT_THROW(save_mask(make_mask({0, 2, 2}), dir / "z.msk"), FormatError);
}

// A volume whose slices 0, 2 and 5 are black.
std::pair<Volume, MaskVolume> striped(std::size_t h, std::size_t w) {
    const VolumeDims d{6, static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w)};
    Volume v = make_volume(d);
    MaskVolume m = make_mask(d);
    for (std::size_t s : {1, 3, 4}) {
        for (std::size_t y = h / 4; y < h / 2; ++y)
            for (std::size_t x = w / 3; x < w / 2; ++x) {
                v.voxels[(s * h + y) * w + x] = 10.0f + static_cast<float>(s + y + x);
                if ((y + x) % 5 == 0) m.labels[(s * h + y) * w + x] = 1;
            }
    }
    return {v, m};
}

TEST(Preprocess, RemovesExactlyTheBlackSlices) {
    const auto [v, m] = striped(8, 8);
    const auto [kv, km] = remove_black_slices(v, m);
    ASSERT_EQ(kv.dims.slices, 3u);
    const std::size_t kept[] = {1, 3, 4};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto a = kv.slice(i), b = v.slice(kept[i]);
        EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
        const auto ma = km.slice(i), mb = m.slice(kept[i]);
        EXPECT_TRUE(std::equal(ma.begin(), ma.end(), mb.begin()));
    }
    EXPECT_THROW(remove_black_slices(make_volume({2, 2, 2}), make_mask({2, 2, 2})), std::invalid_argument);
    EXPECT_THROW(remove_black_slices(v, make_mask({6, 8, 7})), std::invalid_argument);
}

TEST(Preprocess, CropKeepsAllContentAndCentresIt) {
    const auto [v, m] = striped(40, 30);
    const auto win = roi_window(v, 16, 16);
    EXPECT_FALSE(win.content.empty);
    EXPECT_LE(win.top, win.content.top);
    EXPECT_GE(win.top + 16, win.content.bottom + 1);
    EXPECT_LE(win.left, win.content.left);
    EXPECT_GE(win.left + 16, win.content.right + 1);
    const auto [cv, cm] = crop_to_roi(v, m, 16, 16);
    EXPECT_EQ(cv.dims, (VolumeDims{6, 16, 16}));
    double before = 0, after = 0;
    for (float f : v.voxels) before += f;
    for (float f : cv.voxels) after += f;
    EXPECT_EQ(before, after);
    std::size_t lesions_before = std::count(m.labels.begin(), m.labels.end(), 1);
    std::size_t lesions_after = std::count(cm.labels.begin(), cm.labels.end(), 1);
    EXPECT_EQ(lesions_before, lesions_after);
}

TEST(Preprocess, CropErrors) {
    const auto [v, m] = striped(40, 30);
    EXPECT_THROW(crop_to_roi(v, m, 50, 10), std::invalid_argument);  // larger than volume
    EXPECT_THROW(crop_to_roi(v, m, 4, 4), std::invalid_argument);    // content does not fit
}

TEST(Preprocess, WindowClampsAtBorders) {
    Volume v = make_volume({1, 10, 10});
    v.voxels[0] = 1.0f;  // content at the top-left corner
    const auto win = roi_window(v, 6, 6);
    EXPECT_EQ(win.top, 0u);
    EXPECT_EQ(win.left, 0u);
    Volume e = make_volume({1, 10, 10});
    const auto centred = roi_window(e, 6, 6);
    EXPECT_EQ(centred.top, 2u);
    EXPECT_EQ(centred.left, 2u);
}

TEST(Preprocess, NormalisesToUnitRange) {
    const auto [v, m] = striped(8, 8);
    const Volume n = normalize_intensity(v);
    const auto [mn, mx] = std::minmax_element(n.voxels.begin(), n.voxels.end());
    EXPECT_EQ(*mn, 0.0f);
    EXPECT_EQ(*mx, 1.0f);
    EXPECT_THROW(normalize_intensity(make_volume({1, 2, 2}, 3.0f)), std::invalid_argument);
}

TEST(Preprocess, FullChainAndIdempotence) {
    const auto [v, m] = striped(40, 30);
    const auto r = preprocess(v, m, 16);
    EXPECT_EQ(r.slices_in, 6u);
    EXPECT_EQ(r.slices_dropped, 3u);
    EXPECT_EQ(r.volume.dims, (VolumeDims{3, 16, 16}));
    const auto again = preprocess(r.volume, r.mask, 16);
    EXPECT_EQ(again.slices_dropped, 0u);
    EXPECT_EQ(again.volume.voxels, r.volume.voxels);
    EXPECT_EQ(again.mask.labels, r.mask.labels);
}

TEST(Triplets, ClampAtVolumeEnds) {
    const Volume v = ramp_volume({4, 2, 2});
    const auto t = make_triplets(v, make_mask(v.dims));
    ASSERT_EQ(t.size(), 4u);
    EXPECT_EQ(t[0].slices, (std::array<std::size_t, 3>{0, 0, 1}));
    EXPECT_EQ(t[2].slices, (std::array<std::size_t, 3>{1, 2, 3}));
    EXPECT_EQ(t[3].slices, (std::array<std::size_t, 3>{2, 3, 3}));
    EXPECT_EQ(t[2].centre(), 2u);
    const Volume single = ramp_volume({1, 2, 2});
    EXPECT_EQ(make_triplets(single, make_mask(single.dims))[0].slices, (std::array<std::size_t, 3>{0, 0, 0}));
}

TEST(Triplets, PackingOrdersTimeStepsThenBatch) {
    Volume v = make_volume({3, 1, 2});
    for (std::size_t s = 0; s < 3; ++s) v.voxels[s * 2] = v.voxels[s * 2 + 1] = static_cast<float>(s + 1);
    MaskVolume m = make_mask(v.dims);
    m.labels[1 * 2 + 1] = 1;
    const auto t = make_triplets(v, m);
    const SampleRef batch[] = {{&v, &m, t[1]}, {&v, &m, t[2]}};
    const Tensor x = pack_inputs(batch);
    ASSERT_EQ(x.shape(), (Shape{6, 1, 1, 2}));
    // previous: 1, 2 | centre: 2, 3 | next: 3, 3
    const double want[] = {1, 2, 2, 3, 3, 3};
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(x.at(i, 0, 0, 0), want[i]);
    const Tensor y = pack_targets(batch);
    ASSERT_EQ(y.shape(), (Shape{2, 1, 1, 2}));
    EXPECT_EQ(y.at(0, 0, 0, 1), 1.0);
    EXPECT_EQ(y.at(1, 0, 0, 1), 0.0);
}

std::vector<ManifestEntry> isbi_manifest() {
    std::vector<ManifestEntry> out;
    const int tps[] = {4, 4, 4, 4, 5};
    for (int p = 0; p < 5; ++p)
        for (int t = 1; t <= tps[p]; ++t) {
            const std::string id = "p" + std::to_string(p + 1) + "_t" + std::to_string(t);
            out.push_back({id, "p" + std::to_string(p + 1), t, id + ".vol", id + ".msk"});
        }
    return out;
}

TEST(Folds, IsbiShapedManifest) {
    const auto manifest = isbi_manifest();
    const auto folds = make_folds(manifest, [](const ManifestEntry&) { return std::size_t{10}; });
    ASSERT_EQ(folds.size(), 5u);
    std::set<std::string> tests;
    for (std::size_t k = 0; k < 5; ++k) {
        const auto& f = folds[k];
        EXPECT_EQ(f.fold_id, static_cast<int>(k + 1));
        ASSERT_EQ(f.test.size(), 1u);
        EXPECT_EQ(f.test[0], "p" + std::to_string(k + 1) + "_t4");
        tests.insert(f.test[0]);
        EXPECT_EQ(f.val.size(), kValidationScans);
        std::set<std::string> all;
        for (const auto* part : {&f.train, &f.val, &f.test})
            for (const auto& id : *part) EXPECT_TRUE(all.insert(id).second) << id << " in two splits";
        EXPECT_EQ(all.size(), manifest.size());
        EXPECT_EQ(f.n_train + f.n_val + f.n_test, 210u);
        EXPECT_EQ(f.n_test, 10u);
        for (const auto& id : f.val) EXPECT_NE(id.substr(0, 2), "p" + std::to_string(k + 1)) << id;
    }
    EXPECT_EQ(tests.size(), 5u);
    // Fold 1 validates on the latest scans of patients 2, 3, 4.
    EXPECT_EQ(folds[0].val, (std::vector<std::string>{"p2_t4", "p3_t4", "p4_t4"}));
    EXPECT_EQ(folds[4].val, (std::vector<std::string>{"p1_t4", "p2_t4", "p3_t4"}));
}

TEST(Folds, PatientWithoutTimepointFourTestsItsLastScan) {
    std::vector<ManifestEntry> m = {{"a1", "a", 1, "", ""}, {"a2", "a", 2, "", ""}, {"b1", "b", 1, "", ""},
                                    {"b2", "b", 2, "", ""}, {"b3", "b", 3, "", ""}};
    const auto folds = make_folds(m);
    EXPECT_EQ(folds[0].test, (std::vector<std::string>{"a2"}));
    EXPECT_EQ(folds[1].test, (std::vector<std::string>{"b3"}));
    // Every patient keeps a training scan, so fewer than three validation scans are possible.
    EXPECT_EQ(folds[0].val, (std::vector<std::string>{"b3", "b2"}));
    EXPECT_EQ(folds[0].train, (std::vector<std::string>{"a1", "b1"}));
}

TEST(Folds, Errors) {
    EXPECT_THROW(make_folds({{"a1", "a", 1, "", ""}, {"b1", "b", 1, "", ""}, {"b2", "b", 2, "", ""}}),
                 std::invalid_argument);
    EXPECT_THROW(make_folds({{"a1", "a", 1, "", ""}, {"a1", "a", 2, "", ""}}), std::invalid_argument);
    EXPECT_THROW(make_folds({{"a1", "a", 1, "", ""}, {"a2", "a", 1, "", ""}}), std::invalid_argument);
}

TEST(Manifest, RoundTripWithRelativePaths) {
    TempDir dir;
    std::filesystem::create_directories(dir / "data");
    const std::vector<ManifestEntry> m = {{"x", "p", 1, dir / "data" / "x.vol", dir / "data" / "x.msk"},
                                          {"y", "p", 2, dir / "data" / "y.vol", dir / "data" / "y.msk"}};
    save_manifest(m, dir / "manifest.tsv");
    std::ifstream in(dir / "manifest.tsv");
    std::string first;
    std::getline(in, first);
    EXPECT_EQ(first, "x\tp\t1\tdata/x.vol\tdata/x.msk");
    const auto back = load_manifest(dir / "manifest.tsv");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].id, "y");
    EXPECT_EQ(back[1].timepoint, 2);
    EXPECT_EQ(back[1].image.lexically_normal(), m[1].image.lexically_normal());
}

TEST(Manifest, MalformedLinesNameTheLine) {
    TempDir dir;
    {
        std::ofstream out(dir / "m.tsv");
        out << "# comment\n\na\tp\t1\ta.vol\ta.msk\nb\tp\tx\tb.vol\tb.msk\n";
    }
    try {
        load_manifest(dir / "m.tsv");
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find(":4:"), std::string::npos) << e.what();
    }
}

TEST(Phantom, DeterministicAndWellFormed) {
    PhantomSpec spec;
    spec.seed = 7;
    const auto [v, m] = generate_phantom(spec);
    const auto [v2, m2] = generate_phantom(spec);
    EXPECT_EQ(v.voxels, v2.voxels);
    EXPECT_EQ(m.labels, m2.labels);
    spec.seed = 8;
    EXPECT_NE(generate_phantom(spec).first.voxels, v.voxels);

    EXPECT_EQ(v.dims, (VolumeDims{8, 32, 32}));
    for (std::size_t s : {0u, 7u}) {
        const auto sl = v.slice(s);
        EXPECT_TRUE(std::all_of(sl.begin(), sl.end(), [](float f) { return f == 0.0f; })) << s;
    }
    for (std::size_t s = 1; s < 7; ++s) {
        const auto sl = v.slice(s);
        EXPECT_TRUE(std::any_of(sl.begin(), sl.end(), [](float f) { return f != 0.0f; })) << s;
    }
    std::size_t lesion = 0;
    for (std::size_t i = 0; i < v.voxels.size(); ++i) {
        const float f = v.voxels[i];
        if (m.labels[i]) {
            ++lesion;
            EXPECT_GE(f, kLesionBandLow);
            EXPECT_LE(f, kLesionBandHigh);
        } else if (f != 0.0f) {
            EXPECT_GE(f, kBrainBandLow);
            EXPECT_LE(f, kBrainBandHigh);
        }
    }
    EXPECT_GT(lesion, 0u);
}

TEST(Phantom, InfeasibleSpecsFail) {
    PhantomSpec spec;
    spec.lesions_min = spec.lesions_max = 1;
    spec.radius_min = spec.radius_max = 30.0;
    EXPECT_THROW(generate_phantom(spec), std::invalid_argument);
    spec.radius_min = spec.radius_max = 3.9;  // fits the plane but not the slab of brain
    spec.dims = {8, 64, 64};
    EXPECT_THROW(generate_phantom(spec), std::runtime_error);
    spec = PhantomSpec{};
    spec.blank_slices = 4;
    EXPECT_THROW(generate_phantom(spec), std::invalid_argument);
}

}  // namespace
