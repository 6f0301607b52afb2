#include "unicon/phantom.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <vector>

#include "unicon/image_io.hpp"
#include "unicon/rng.hpp"

namespace fs = std::filesystem;

namespace unicon::phantom {

PhantomSpec PhantomSpec::for_age(int age_index, std::uint64_t seed) {
    if (age_index < 0 || age_index >= data::kNumAges)
        throw Error(ErrorCode::BadAgeIndex, std::to_string(age_index));
    PhantomSpec spec;
    spec.age_index = age_index;
    spec.seed = seed;
    spec.shell_thickness = 1.0 + age_index;
    spec.porosity = 0.3 - 0.08 * age_index;
    return spec;
}

namespace {

struct Grid3 {
    int Z, H, W;
    std::vector<double> v;
    Grid3(int z, int h, int w) : Z(z), H(h), W(w), v(static_cast<std::size_t>(z) * h * w) {}
    double& at(int z, int y, int x) {
        return v[(static_cast<std::size_t>(z) * H + y) * W + x];
    }
    double at(int z, int y, int x) const {
        return v[(static_cast<std::size_t>(z) * H + y) * W + x];
    }
};

void blur_axis(Grid3& g, int axis, double sigma) {
    const int radius = 3;
    double kern[2 * radius + 1];
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kern[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        norm += kern[i + radius];
    }
    for (double& k : kern) k /= norm;

    Grid3 out(g.Z, g.H, g.W);
    for (int z = 0; z < g.Z; ++z)
        for (int y = 0; y < g.H; ++y)
            for (int x = 0; x < g.W; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    int zz = z, yy = y, xx = x;
                    if (axis == 0) zz = std::clamp(z + i, 0, g.Z - 1);
                    if (axis == 1) yy = std::clamp(y + i, 0, g.H - 1);
                    if (axis == 2) xx = std::clamp(x + i, 0, g.W - 1);
                    acc += kern[i + radius] * g.at(zz, yy, xx);
                }
                out.at(z, y, x) = acc;
            }
    g = std::move(out);
}

}  // namespace

data::VolumeRecord generate_volume(const PhantomSpec& spec, const std::string& out_dir) {
    if (spec.Z < 4 || spec.H < 16 || spec.W < 16)
        throw Error(ErrorCode::BadSpec, "phantom volume too small");
    if (spec.porosity + spec.porosity_shift < 0.0 ||
        spec.porosity + spec.porosity_shift >= 1.0)
        throw Error(ErrorCode::BadSpec, "porosity outside [0,1)");
    if (spec.shell_thickness * spec.thickness_scale < 0.5)
        throw Error(ErrorCode::BadSpec, "shell thinner than half a voxel");
    if (spec.annotated_fraction <= 0.0 || spec.annotated_fraction > 1.0)
        throw Error(ErrorCode::BadSpec, "annotated_fraction outside (0,1]");

    Rng rng(spec.seed);

    // layout
    const double cz = spec.Z * (0.5 + 0.05 * (rng.uniform() - 0.5));
    const double cy = spec.H * (0.5 + 0.05 * (rng.uniform() - 0.5));
    const double cx = spec.W * (0.5 + 0.05 * (rng.uniform() - 0.5));
    const double jr = 1.0 + 0.06 * (rng.uniform() - 0.5);
    const double rz = 0.36 * spec.Z * jr;
    const double ry = 0.34 * spec.H * jr * (1.0 + spec.axis_warp);
    const double rx = 0.34 * spec.W * jr * (1.0 - spec.axis_warp);
    const double rbar = (rz + ry + rx) / 3.0;
    const double thickness = spec.shell_thickness * spec.thickness_scale;
    const double shell_lo = 1.0 - thickness / rbar;
    const double porosity = spec.porosity + spec.porosity_shift;

    struct Tube {
        double y, x, radius, z_lo, z_hi;
    };
    std::vector<Tube> tubes;
    const double band_center = spec.Z * (0.22 + 0.16 * spec.age_index);
    const double band_half = 0.13 * spec.Z;
    for (int k = 0; k < 3; ++k) {
        Tube t;
        t.y = spec.H * (0.25 + 0.5 * rng.uniform());
        t.x = spec.W * (0.25 + 0.5 * rng.uniform());
        t.radius = (1.5 + 0.45 * spec.age_index) * spec.thickness_scale;
        const double wobble = 0.04 * spec.Z * (rng.uniform() - 0.5);
        t.z_lo = std::max(0.0, band_center - band_half + wobble);
        t.z_hi = std::min<double>(spec.Z - 1, band_center + band_half + wobble);
        tubes.push_back(t);
    }
    const double g0 = 0.18 + 0.04 * rng.uniform();
    const double gx = 0.16 * (rng.uniform() - 0.5);
    const double gy = 0.16 * (rng.uniform() - 0.5);
    const double gz = 0.16 * (rng.uniform() - 0.5);

    // structure mask; tubes render fainter than the shell so their
    // age-keyed z-band is genuinely ambiguous from appearance alone
    Grid3 mask(spec.Z, spec.H, spec.W);
    Grid3 weight(spec.Z, spec.H, spec.W);
    for (int z = 0; z < spec.Z; ++z)
        for (int y = 0; y < spec.H; ++y)
            for (int x = 0; x < spec.W; ++x) {
                const double dz = (z - cz) / rz, dy = (y - cy) / ry, dx = (x - cx) / rx;
                const double rho = std::sqrt(dz * dz + dy * dy + dx * dx);
                double w = 0.0;
                if (rho >= shell_lo && rho <= 1.0 && rng.uniform() >= porosity) w = 1.0;
                if (w == 0.0)
                    for (const Tube& t : tubes)
                        if (z >= t.z_lo && z <= t.z_hi) {
                            const double ddy = y - t.y, ddx = x - t.x;
                            if (ddy * ddy + ddx * ddx <= t.radius * t.radius) {
                                w = spec.tube_contrast;
                                break;
                            }
                        }
                mask.at(z, y, x) = w > 0.0 ? 1.0 : 0.0;
                weight.at(z, y, x) = w;
            }

    // intensity
    Grid3 intensity = weight;
    blur_axis(intensity, 0, 1.1);
    blur_axis(intensity, 1, 1.1);
    blur_axis(intensity, 2, 1.1);
    for (int z = 0; z < spec.Z; ++z)
        for (int y = 0; y < spec.H; ++y)
            for (int x = 0; x < spec.W; ++x) {
                double v = 0.62 * intensity.at(z, y, x) + g0 +
                           gx * (static_cast<double>(x) / spec.W - 0.5) +
                           gy * (static_cast<double>(y) / spec.H - 0.5) +
                           gz * (static_cast<double>(z) / spec.Z - 0.5) +
                           spec.noise_sigma * rng.normal();
                intensity.at(z, y, x) = std::clamp(v, 0.0, 1.0);
            }

    // annotated slice selection: evenly spaced over the slices that contain
    // structure, so sparse annotation still sees every growth stage
    std::vector<int> nonempty;
    for (int z = 0; z < spec.Z; ++z) {
        bool any = false;
        for (int y = 0; y < spec.H && !any; ++y)
            for (int x = 0; x < spec.W; ++x)
                if (mask.at(z, y, x) != 0.0) {
                    any = true;
                    break;
                }
        if (any) nonempty.push_back(z);
    }
    if (nonempty.empty()) throw Error(ErrorCode::BadSpec, "phantom produced an empty mask");
    const int n_ann = std::max(
        1, static_cast<int>(std::lround(spec.annotated_fraction * spec.Z)));
    std::vector<int> annotated;
    for (int i = 0; i < n_ann; ++i) {
        const auto idx = static_cast<std::size_t>(
            (i + 0.5) * static_cast<double>(nonempty.size()) / n_ann);
        annotated.push_back(nonempty[std::min(idx, nonempty.size() - 1)]);
    }
    annotated.erase(std::unique(annotated.begin(), annotated.end()), annotated.end());

    // write files
    const std::string vid =
        spec.volume_id.empty() ? ("vol_" + std::to_string(spec.seed)) : spec.volume_id;
    const fs::path dir = fs::path(out_dir) / vid;
    fs::create_directories(dir);

    data::VolumeRecord rec;
    rec.volume_id = vid;
    rec.age_index = spec.age_index;
    rec.cohort_tag = spec.cohort_tag;
    rec.Z = spec.Z;
    rec.H = spec.H;
    rec.W = spec.W;

    char buf[32];
    for (int z = 0; z < spec.Z; ++z) {
        Tensor slice({spec.H, spec.W});
        for (int y = 0; y < spec.H; ++y)
            for (int x = 0; x < spec.W; ++x) slice.at(y, x) = intensity.at(z, y, x);
        std::snprintf(buf, sizeof(buf), "slice_%04d.png", z);
        const std::string path = (dir / buf).string();
        io::write_slice16(path, slice);
        rec.slice_paths.push_back(path);
    }
    for (int z : annotated) {
        Tensor m({spec.H, spec.W});
        for (int y = 0; y < spec.H; ++y)
            for (int x = 0; x < spec.W; ++x) m.at(y, x) = mask.at(z, y, x);
        std::snprintf(buf, sizeof(buf), "mask_%04d.png", z);
        const std::string path = (dir / buf).string();
        io::write_mask(path, m);
        rec.annotations.push_back({z, path});
    }
    return rec;
}

namespace {
void apply_cohort_dims(PhantomSpec& spec, const CohortConfig& cfg) {
    spec.Z = cfg.Z;
    spec.H = cfg.H;
    spec.W = cfg.W;
    spec.noise_sigma = cfg.noise_sigma;
    spec.annotated_fraction = cfg.annotated_fraction;
}
}  // namespace

std::pair<data::DatasetManifest, data::DatasetManifest> generate_cohort(
    const CohortConfig& cfg, const std::string& out_dir) {
    if (cfg.volumes_per_age < 1)
        throw Error(ErrorCode::BadSpec, "need at least one volume per age");

    const Rng root(cfg.seed);
    auto make_split = [&](const char* split, int stream_base) {
        data::DatasetManifest m;
        m.name = std::string("phantom_c57_") + split;
        m.split = split;
        for (int age = 0; age < data::kNumAges; ++age)
            for (int v = 0; v < cfg.volumes_per_age; ++v) {
                PhantomSpec spec = PhantomSpec::for_age(
                    age, root.spawn(static_cast<std::uint64_t>(stream_base + age * 100 + v))
                             .seed());
                apply_cohort_dims(spec, cfg);
                spec.volume_id = std::string("c57_") + split + "_a" + std::to_string(age) +
                                 "_v" + std::to_string(v);
                m.volumes.push_back(
                    generate_volume(spec, (fs::path(out_dir) / "volumes").string()));
            }
        return m;
    };

    data::DatasetManifest train = make_split("train", 10000);
    data::DatasetManifest test = make_split("test", 50000);
    data::save_manifest(train, (fs::path(out_dir) / "train_manifest.json").string());
    data::save_manifest(test, (fs::path(out_dir) / "test_manifest.json").string());
    // reload so callers get exactly what validation sees
    return {data::load_manifest((fs::path(out_dir) / "train_manifest.json").string()),
            data::load_manifest((fs::path(out_dir) / "test_manifest.json").string())};
}

std::pair<data::DatasetManifest, data::DatasetManifest> generate_cohort(
    int num_volumes_per_age, std::uint64_t seed, const std::string& out_dir) {
    CohortConfig cfg;
    cfg.volumes_per_age = num_volumes_per_age;
    cfg.seed = seed;
    return generate_cohort(cfg, out_dir);
}

data::DatasetManifest generate_mutation(const CohortConfig& cfg, char mutation_kind,
                                        const std::string& out_dir) {
    double thickness_scale, porosity_shift, axis_warp;
    switch (mutation_kind) {
        case 'A':
            thickness_scale = 1.3;
            porosity_shift = 0.0;
            axis_warp = 0.04;
            break;
        case 'B':
            thickness_scale = 0.8;
            porosity_shift = 0.08;
            axis_warp = 0.0;
            break;
        case 'C':
            thickness_scale = 1.25;
            porosity_shift = 0.04;
            axis_warp = -0.04;
            break;
        default:
            throw Error(ErrorCode::BadSpec,
                        std::string("unknown mutation kind '") + mutation_kind + "'");
    }

    const Rng root(cfg.seed);
    const std::string kind_lower(1, static_cast<char>(std::tolower(mutation_kind)));
    data::DatasetManifest m;
    m.name = "phantom_mut_" + kind_lower;
    m.split = "test";
    for (int age = 0; age < data::kNumAges; ++age) {
        // same layout seed as the matching base test volume, so the shift in
        // morphology is the only difference
        PhantomSpec spec = PhantomSpec::for_age(
            age, root.spawn(static_cast<std::uint64_t>(50000 + age * 100)).seed());
        apply_cohort_dims(spec, cfg);
        spec.noise_sigma = cfg.noise_sigma * 1.2;  // scanner-style domain shift
        spec.thickness_scale = thickness_scale;
        spec.porosity_shift = porosity_shift;
        spec.axis_warp = axis_warp;
        spec.cohort_tag = std::string("Mut") + mutation_kind;
        spec.volume_id = "mut_" + kind_lower + "_a" + std::to_string(age);
        m.volumes.push_back(generate_volume(
            spec, (fs::path(out_dir) / ("volumes_mut_" + kind_lower)).string()));
    }
    const std::string mpath =
        (fs::path(out_dir) / ("mut_" + kind_lower + "_manifest.json")).string();
    data::save_manifest(m, mpath);
    return data::load_manifest(mpath);
}

data::DatasetManifest generate_mutation(std::uint64_t base_seed, char mutation_kind,
                                        const std::string& out_dir) {
    CohortConfig cfg;
    cfg.seed = base_seed;
    return generate_mutation(cfg, mutation_kind, out_dir);
}

double mean_mask_run_length(const data::VolumeRecord& record) {
    double total = 0.0;
    std::int64_t runs = 0;
    for (const auto& ann : record.annotations) {
        const Tensor mask = data::load_mask(record, ann.z);
        for (int y = 0; y < mask.dim(0); ++y) {
            int run = 0;
            for (int x = 0; x < mask.dim(1); ++x) {
                if (mask.at(y, x) != 0.0) {
                    ++run;
                } else if (run > 0) {
                    total += run;
                    ++runs;
                    run = 0;
                }
            }
            if (run > 0) {
                total += run;
                ++runs;
            }
        }
    }
    return runs == 0 ? 0.0 : total / static_cast<double>(runs);
}

}  // namespace unicon::phantom
