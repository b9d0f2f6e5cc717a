#include "bvlab/data/synthetic.hpp"

#include <numeric>
#include <sstream>

#include "bvlab/common/error.hpp"
#include "bvlab/common/rng.hpp"

namespace bvlab::data {

namespace {
std::string describe_list(const std::vector<double>& values) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < values.size(); ++i) out << (i ? ";" : "") << values[i];
  return out.str();
}
}  // namespace

LabeledDataset gen_linear_regression(const LinearRegressionParams& params) {
  if (params.noise_halfwidth < 0.0) throw ConfigError("noise half-width must be >= 0");
  if (params.weights.empty()) throw ConfigError("linear target needs at least one weight");
  if (params.n == 0) throw ConfigError("dataset size must be >= 1");
  const std::size_t d = params.weights.size();

  CounterRng input_rng(params.seed, 1);
  CounterRng noise_rng(params.seed, 2);
  LinearTarget truth{params.weights, params.intercept};

  std::vector<double> xs(params.n * d);
  std::vector<double> ys(params.n);
  for (std::size_t i = 0; i < params.n; ++i) {
    const std::span<double> row(xs.data() + i * d, d);
    for (double& v : row) v = input_rng.uniform(-params.box, params.box);
    const double gamma =
        params.noise_halfwidth > 0.0
            ? noise_rng.uniform(-params.noise_halfwidth, params.noise_halfwidth)
            : 0.0;
    ys[i] = truth(row) + gamma;
  }

  LabeledDataset out;
  out.inputs = grad::Tensor::matrix(params.n, d, std::move(xs));
  out.targets.values = std::move(ys);
  out.noise_halfwidth = params.noise_halfwidth;
  out.truth = std::move(truth);
  std::ostringstream prov;
  prov << "linear-regression(n=" << params.n << ",w=" << describe_list(params.weights)
       << ",intercept=" << params.intercept << ",b=" << params.noise_halfwidth
       << ",box=" << params.box << ",seed=" << params.seed << ",rng=" << CounterRng::kName << ")";
  out.provenance = prov.str();
  return out;
}

LabeledDataset gen_two_gaussians(const TwoGaussiansParams& params) {
  if (params.n == 0 || params.n % 2 != 0) {
    throw ConfigError("two-gaussian dataset size must be even and positive");
  }
  if (params.dim == 0) throw ConfigError("dimension must be >= 1");
  if (!(params.sd > 0.0)) throw ConfigError("standard deviation must be positive");

  CounterRng sample_rng(params.seed, 1);
  CounterRng order_rng(params.seed, 2);

  const std::size_t d = params.dim;
  std::vector<double> xs(params.n * d);
  std::vector<std::size_t> labels(params.n);
  for (std::size_t i = 0; i < params.n; ++i) {
    const std::size_t label = i < params.n / 2 ? 0 : 1;
    const double center = label == 0 ? params.mean0 : params.mean1;
    labels[i] = label;
    for (std::size_t c = 0; c < d; ++c) xs[i * d + c] = center + params.sd * sample_rng.normal();
  }

  std::vector<std::size_t> order(params.n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  order_rng.shuffle(order);

  LabeledDataset unshuffled;
  unshuffled.inputs = grad::Tensor::matrix(params.n, d, std::move(xs));
  unshuffled.targets.labels = std::move(labels);
  unshuffled.targets.num_classes = 2;

  LabeledDataset out = unshuffled.subset(order);
  std::ostringstream prov;
  prov << "two-gaussians(n=" << params.n << ",d=" << d << ",mean0=" << params.mean0
       << ",mean1=" << params.mean1 << ",sd=" << params.sd << ",seed=" << params.seed
       << ",rng=" << CounterRng::kName << ")";
  out.provenance = prov.str();
  return out;
}

}  // namespace bvlab::data
