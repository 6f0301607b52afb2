#pragma once

#include <string>
#include <utility>

#include "unicon/data_model.hpp"

namespace unicon::phantom {

/// Synthetic multi-age volume description. Age drives the morphology: shell
/// thickness grows with age while porosity shrinks, and the tubular elements
/// drift along z, so both the age index and the crop location carry signal.
struct PhantomSpec {
    int Z = 64, H = 96, W = 96;
    int age_index = 0;
    std::uint64_t seed = 0;
    double shell_thickness = 1.0;   // set from age unless overridden
    double porosity = 0.3;          // idem
    double noise_sigma = 0.05;
    double annotated_fraction = 0.026;
    double tube_contrast = 0.55;    // tube intensity relative to the shell
    // mutation knobs, 1.0 / 0.0 = the base cohort
    double thickness_scale = 1.0;
    double porosity_shift = 0.0;
    double axis_warp = 0.0;         // relative deformation of the ellipsoid axes
    std::string cohort_tag = "C57";
    std::string volume_id;

    static PhantomSpec for_age(int age_index, std::uint64_t seed);
};

/// Renders the volume and its masks to <out_dir>/<volume_id>/ and returns a
/// validated record. Fully determined by the spec (including seed).
data::VolumeRecord generate_volume(const PhantomSpec& spec, const std::string& out_dir);

struct CohortConfig {
    int volumes_per_age = 2;
    std::uint64_t seed = 7;
    int Z = 64, H = 96, W = 96;
    double noise_sigma = 0.05;
    double annotated_fraction = 0.026;
};

/// Train/test cohort with `volumes_per_age` volumes per age in each split.
/// Manifests are written to <out_dir>/{train,test}_manifest.json.
std::pair<data::DatasetManifest, data::DatasetManifest> generate_cohort(
    const CohortConfig& cfg, const std::string& out_dir);
std::pair<data::DatasetManifest, data::DatasetManifest> generate_cohort(
    int num_volumes_per_age, std::uint64_t seed, const std::string& out_dir);

/// Perturbed unseen cohort (one volume per age) emulating a morphology
/// shift; mutation_kind is one of 'A', 'B', 'C'. The manifest is written to
/// <out_dir>/mut_<kind>_manifest.json.
data::DatasetManifest generate_mutation(const CohortConfig& cfg, char mutation_kind,
                                        const std::string& out_dir);
data::DatasetManifest generate_mutation(std::uint64_t base_seed, char mutation_kind,
                                        const std::string& out_dir);

/// Test oracle helper: mean foreground run length across mask rows, a cheap
/// monotone proxy for structure thickness.
double mean_mask_run_length(const data::VolumeRecord& record);

}  // namespace unicon::phantom
