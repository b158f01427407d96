#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sim2xray/cli_app.hpp"
#include "sim2xray/data.hpp"
#include "sim2xray/errors.hpp"
#include "sim2xray/frechet.hpp"
#include "sim2xray/image.hpp"
#include "sim2xray/matching.hpp"

namespace py = pybind11;
using namespace sim2xray;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Image image_from_array(const FloatArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("image must be H x W or H x W x C");
  Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1);
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

FeatureStack stack_from(const std::vector<TokenMatrix>& blocks) {
  FeatureStack s;
  int id = 1;
  for (const auto& b : blocks) s.sets.push_back(TokenSet{b, id++});
  return s;
}

LossConfig loss_config(double alpha, double lambda, const std::vector<double>& weights) {
  LossConfig c;
  c.alpha = alpha;
  c.lambda = lambda;
  c.block_weights = weights;
  c.validate();
  return c;
}

py::dict report_dict(const LossReport& r) {
  py::dict d;
  d["l_self"] = r.l_self;
  d["l_cross"] = r.l_cross;
  d["l_sem"] = r.l_sem;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Semantic token matching, Fréchet distance and the sim2xray command line";
  m.attr("__version__") = version_string();

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "patchify",
      [](const FloatArray& image, int patch_size) {
        const auto p = patchify(image_from_array(image), patch_size);
        py::array_t<float> out({p.rows(), p.cols()});
        std::copy(p.data(), p.data() + p.size(), out.mutable_data());
        return out;
      },
      py::arg("image"), py::arg("patch_size"), "Row-major non-overlapping patches, one flattened patch per row.");

  m.def(
      "self_domain_matrix", [](const TokenMatrix& tokens) { return self_domain_matrix(TokenSet{tokens, 1}).values; },
      py::arg("tokens"));
  m.def(
      "cross_domain_matrices",
      [](const TokenMatrix& s, const TokenMatrix& t) {
        const auto [a, b] = cross_domain_matrices(TokenSet{s, 1}, TokenSet{t, 1});
        return py::make_tuple(a.values, b.values);
      },
      py::arg("x_tokens"), py::arg("yhat_tokens"));
  m.def(
      "semantic_loss",
      [](const std::vector<TokenMatrix>& x, const std::vector<TokenMatrix>& yhat, double alpha,
         const std::vector<double>& weights) {
        return report_dict(semantic_loss(stack_from(x), stack_from(yhat), loss_config(alpha, 8.0, weights)));
      },
      py::arg("x_blocks"), py::arg("yhat_blocks"), py::arg("alpha") = 0.5,
      py::arg("block_weights") = std::vector<double>{});
  m.def(
      "semantic_loss_gradient",
      [](const std::vector<TokenMatrix>& x, const std::vector<TokenMatrix>& yhat, double alpha) {
        const auto g = semantic_loss_gradient(stack_from(x), stack_from(yhat), loss_config(alpha, 8.0, {}));
        return py::make_tuple(report_dict(g.report), g.d_sem);
      },
      py::arg("x_blocks"), py::arg("yhat_blocks"), py::arg("alpha") = 0.5);

  m.def(
      "feature_stats",
      [](const Eigen::MatrixXd& features) {
        const auto s = compute_stats(features);
        return py::make_tuple(s.mean, s.cov);
      },
      py::arg("features"), "Mean and unbiased covariance of a (count x m) feature matrix.");
  m.def(
      "frechet_distance",
      [](const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& cov_a, const Eigen::VectorXd& mu_b,
         const Eigen::MatrixXd& cov_b) {
        FeatureStats a{mu_a, cov_a, 2}, b{mu_b, cov_b, 2};
        return frechet_distance(a, b);
      },
      py::arg("mu_a"), py::arg("cov_a"), py::arg("mu_b"), py::arg("cov_b"));

  m.def(
      "synth_corpus",
      [](const std::string& out, std::uint64_t seed, int nx, int ny, int size) {
        SynthOptions o;
        o.seed = seed;
        o.n_x = nx;
        o.n_y = ny;
        o.image_size = size;
        return synth_corpus(o, out).manifest.string();
      },
      py::arg("out"), py::arg("seed") = 1, py::arg("nx") = 8, py::arg("ny") = 8, py::arg("size") = 64);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> full = {"sim2xray"};
        full.insert(full.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : full) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a sim2xray subcommand in process; returns (exit code, stdout, stderr).");
}
