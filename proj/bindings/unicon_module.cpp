#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "unicon/backbones.hpp"
#include "unicon/cli.hpp"
#include "unicon/losses.hpp"
#include "unicon/phantom.hpp"
#include "unicon/train.hpp"

namespace py = pybind11;
using namespace unicon;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int> shape;
    for (py::ssize_t i = 0; i < a.ndim(); ++i)
        shape.push_back(static_cast<int>(a.shape(i)));
    Tensor t(shape);
    std::copy(a.data(), a.data() + a.size(), t.data());
    return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape;
    for (int i = 0; i < t.ndim(); ++i) shape.push_back(t.dim(i));
    py::array_t<double> a(shape);
    std::copy(t.data(), t.data() + t.numel(), a.mutable_data());
    return a;
}

using NpArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

sampling::CropBox box_from_tuple(const std::tuple<int, int, int, int, int>& b) {
    return {std::get<0>(b), std::get<1>(b), std::get<2>(b), std::get<3>(b), std::get<4>(b)};
}

// Thin wrapper so python callers get a stable handle on a built model.
class PyModel {
public:
    PyModel(const std::string& backbone, const std::string& mode,
            const std::vector<int>& stage_channels, int hid_dim, int heads,
            std::uint64_t seed) {
        model::BackboneSpec spec;
        if (backbone == "res2") {
            spec.encoder_kind = model::EncoderKind::cnn_res2;
            spec.skip_mode = model::SkipMode::sum;
        } else if (backbone == "unet") {
            spec.encoder_kind = model::EncoderKind::cnn_plain;
            spec.skip_mode = model::SkipMode::concat;
        } else {
            throw Error(ErrorCode::BadConfig, "backbone must be res2 or unet");
        }
        if (!stage_channels.empty()) spec.stage_channels = stage_channels;
        model::ConditioningSpec cond = model::parse_mode(mode);
        cond.hid_dim = hid_dim;
        cond.heads = heads;
        model_ = std::make_unique<model::SegModel>(spec, cond, seed);
    }

    explicit PyModel(const std::string& checkpoint_path) {
        auto loaded = ckpt::load_checkpoint(checkpoint_path);
        model_ = std::move(loaded.model);
    }

    py::array_t<double> forward(const NpArray& image, int age_index,
                                const std::tuple<int, int, int, int, int>& box,
                                const std::tuple<int, int, int>& volume_dims) {
        sampling::CropSample s;
        s.image = tensor_from_array(image);
        s.box = box_from_tuple(box);
        s.age_index = age_index;
        std::tie(s.vol_z, s.vol_h, s.vol_w) = volume_dims;
        s.rel_center = sampling::relative_center(s.box, s.vol_h, s.vol_w, s.vol_z);
        return array_from_tensor(model_->forward(s, false, nullptr));
    }

    std::int64_t param_count() { return model_->param_count(); }
    std::string mode() const { return model::mode_name(model_->conditioning()); }

    model::SegModel& ref() { return *model_; }

private:
    std::unique_ptr<model::SegModel> model_;
};

}  // namespace

PYBIND11_MODULE(_unicon, m) {
    m.doc() = "Conditional multi-age segmentation core (ConSA + HDSC)";

    py::register_exception<Error>(m, "UniconError");

    m.def(
        "relative_center",
        [](const std::tuple<int, int, int, int, int>& box, int H, int W, int Z) {
            const auto c = sampling::relative_center(box_from_tuple(box), H, W, Z);
            return py::make_tuple(c[0], c[1], c[2]);
        },
        py::arg("box"), py::arg("H"), py::arg("W"), py::arg("Z"),
        "Relative central coordinates (x*, y*, z*) of a crop box (t, b, l, r, z).");

    m.def(
        "dense_coords",
        [](const std::tuple<int, int, int, int, int>& box, int H, int W, int Z, int out_h,
           int out_w) {
            const auto g = hdsc::dense_coords(box_from_tuple(box), H, W, Z, out_h, out_w);
            return py::make_tuple(array_from_tensor(g.i_plane), array_from_tensor(g.j_plane),
                                  array_from_tensor(g.k_plane));
        },
        py::arg("box"), py::arg("H"), py::arg("W"), py::arg("Z"), py::arg("out_h"),
        py::arg("out_w"), "Relative i/j/k coordinate planes for a crop at a resolution.");

    m.def(
        "tile_plan",
        [](int H, int W, int Z, int z, int crop_h, int crop_w, double overlap) {
            data::VolumeRecord rec;
            rec.H = H;
            rec.W = W;
            rec.Z = Z;
            std::vector<std::tuple<int, int, int, int, int>> out;
            for (const auto& b : sampling::tile_plan(rec, z, crop_h, crop_w, overlap))
                out.emplace_back(b.t, b.b, b.l, b.r, b.z);
            return out;
        },
        py::arg("H"), py::arg("W"), py::arg("Z"), py::arg("z"), py::arg("crop_h"),
        py::arg("crop_w"), py::arg("overlap") = 0.25);

    m.def(
        "bezier_intensity",
        [](const NpArray& image, double x1, double y1, double x2, double y2) {
            return array_from_tensor(
                sampling::bezier_intensity_with(tensor_from_array(image), x1, y1, x2, y2));
        },
        py::arg("image"), py::arg("x1"), py::arg("y1"), py::arg("x2"), py::arg("y2"));

    m.def(
        "dice_loss",
        [](const NpArray& probs, const NpArray& truth, double smooth) {
            return loss::dice_loss(tensor_from_array(probs), tensor_from_array(truth),
                                   smooth);
        },
        py::arg("probs"), py::arg("truth"), py::arg("smooth") = 1e-5);

    m.def(
        "ce_loss",
        [](const NpArray& probs, const NpArray& truth, bool literal) {
            return loss::ce_loss(tensor_from_array(probs), tensor_from_array(truth), literal);
        },
        py::arg("probs"), py::arg("truth"), py::arg("literal") = false);

    m.def(
        "segmentation_loss",
        [](const NpArray& probs, const NpArray& truth, double alpha, double smooth) {
            loss::LossConfig cfg;
            cfg.alpha = alpha;
            cfg.dice_smooth = smooth;
            return loss::segmentation_loss(tensor_from_array(probs), tensor_from_array(truth),
                                           cfg);
        },
        py::arg("probs"), py::arg("truth"), py::arg("alpha") = 0.5,
        py::arg("smooth") = 1e-5);

    m.def(
        "dice_score",
        [](const NpArray& pred, const NpArray& truth) {
            return loss::dice_score(tensor_from_array(pred), tensor_from_array(truth));
        },
        py::arg("pred"), py::arg("truth"));

    m.def(
        "generate_cohort",
        [](const std::string& out_dir, int volumes_per_age, std::uint64_t seed, int Z, int H,
           int W, double annotated_fraction) {
            phantom::CohortConfig cfg;
            cfg.volumes_per_age = volumes_per_age;
            cfg.seed = seed;
            cfg.Z = Z;
            cfg.H = H;
            cfg.W = W;
            cfg.annotated_fraction = annotated_fraction;
            const auto [train_m, test_m] = phantom::generate_cohort(cfg, out_dir);
            return py::make_tuple(out_dir + "/train_manifest.json",
                                  out_dir + "/test_manifest.json");
        },
        py::arg("out_dir"), py::arg("volumes_per_age") = 2, py::arg("seed") = 7,
        py::arg("Z") = 64, py::arg("H") = 96, py::arg("W") = 96,
        py::arg("annotated_fraction") = 0.026);

    m.def(
        "manifest_summary",
        [](const std::string& path) {
            const auto man = data::load_manifest(path);
            py::list vols;
            for (const auto& v : man.volumes) {
                py::dict d;
                d["volume_id"] = v.volume_id;
                d["age_index"] = v.age_index;
                d["cohort_tag"] = v.cohort_tag;
                d["shape"] = py::make_tuple(v.Z, v.H, v.W);
                d["annotated"] = v.annotations.size();
                vols.append(d);
            }
            py::dict out;
            out["name"] = man.name;
            out["split"] = man.split;
            out["volumes"] = vols;
            return out;
        },
        py::arg("path"), "Validates a manifest and returns a summary dict.");

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<const char*> argv{"unicon"};
            for (const auto& a : args) argv.push_back(a.c_str());
            return cli::run(static_cast<int>(argv.size()), argv.data());
        },
        py::arg("args"), "Invokes the command-line interface in-process.");

    py::class_<PyModel>(m, "SegModel")
        .def(py::init<const std::string&, const std::string&, const std::vector<int>&, int,
                      int, std::uint64_t>(),
             py::arg("backbone") = "res2", py::arg("mode") = "none",
             py::arg("stage_channels") = std::vector<int>{}, py::arg("hid_dim") = 64,
             py::arg("heads") = 4, py::arg("seed") = 1)
        .def(py::init<const std::string&>(), py::arg("checkpoint"))
        .def("forward", &PyModel::forward, py::arg("image"), py::arg("age_index"),
             py::arg("box"), py::arg("volume_dims"),
             "Eval-mode logits [2,h,w] for one crop; volume_dims is (Z, H, W).")
        .def("param_count", &PyModel::param_count)
        .def_property_readonly("mode", &PyModel::mode);
}
