#include "llmpoet/policy.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>

#include <fmt/format.h>

namespace llmpoet::ppo {

using Eigen::Map;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using CMap = Map<const MatrixXd>;
using CVec = Map<const VectorXd>;

ParamLayout::ParamLayout(int obs_dim, int act_dim, int hidden) : o(obs_dim), a(act_dim), h(hidden) {
  std::size_t off = 0;
  auto take = [&](std::size_t n) {
    const std::size_t at = off;
    off += n;
    return at;
  };
  const std::size_t O = o, A = a, H = h;
  W1 = take(H * O);
  b1 = take(H);
  W2 = take(H * H);
  b2 = take(H);
  W3 = take(A * H);
  b3 = take(A);
  log_std = take(A);
  V1 = take(H * O);
  c1 = take(H);
  V2 = take(H * H);
  c2 = take(H);
  V3 = take(H);
  c3 = take(1);
  total = off;
}

std::size_t PolicyParams::param_count(int obs_dim, int act_dim, int hidden) {
  return ParamLayout(obs_dim, act_dim, hidden).total;
}

PolicyParams PolicyParams::zeros(int obs_dim, int act_dim, int hidden) {
  if (obs_dim < 1 || act_dim < 1 || hidden < 1)
    throw PolicyError(PolicyErrc::ShapeMismatch,
                      fmt::format("bad policy shape obs={} act={} hidden={}", obs_dim, act_dim, hidden));
  PolicyParams p;
  p.obs_dim = obs_dim;
  p.act_dim = act_dim;
  p.hidden = hidden;
  p.theta = VectorXd::Zero(static_cast<Eigen::Index>(param_count(obs_dim, act_dim, hidden)));
  return p;
}

namespace {

void orthogonal(double* out, int rows, int cols, double gain, Rng& rng) {
  const bool tall = rows >= cols;
  const int m = tall ? rows : cols;
  const int n = tall ? cols : rows;
  MatrixXd g(m, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < m; ++i) g(i, j) = gaussian(rng);
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(m, n);
  const MatrixXd r = qr.matrixQR().topLeftCorner(n, n);
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  Map<MatrixXd> w(out, rows, cols);
  w = gain * (tall ? q : MatrixXd(q.transpose()));
}

}  // namespace

PolicyParams PolicyParams::init(int obs_dim, int act_dim, Rng& rng, int hidden, double log_std) {
  PolicyParams p = zeros(obs_dim, act_dim, hidden);
  const ParamLayout L(p);
  double* t = p.theta.data();
  const double g = std::numbers::sqrt2;
  orthogonal(t + L.W1, hidden, obs_dim, g, rng);
  orthogonal(t + L.W2, hidden, hidden, g, rng);
  orthogonal(t + L.W3, act_dim, hidden, 0.01, rng);
  orthogonal(t + L.V1, hidden, obs_dim, g, rng);
  orthogonal(t + L.V2, hidden, hidden, g, rng);
  orthogonal(t + L.V3, 1, hidden, 1.0, rng);
  p.theta.segment(static_cast<Eigen::Index>(L.log_std), act_dim).setConstant(log_std);
  return p;
}

ForwardCache forward_batch(const PolicyParams& p, const MatrixXd& obs) {
  if (obs.rows() != p.obs_dim)
    throw PolicyError(PolicyErrc::ShapeMismatch,
                      fmt::format("observation has {} entries, policy expects {}", obs.rows(), p.obs_dim));
  const ParamLayout L(p);
  const double* t = p.theta.data();
  const int o = L.o, a = L.a, h = L.h;
  ForwardCache c;
  c.x = obs;
  c.a1 = ((CMap(t + L.W1, h, o) * obs).colwise() + CVec(t + L.b1, h)).array().tanh();
  c.a2 = ((CMap(t + L.W2, h, h) * c.a1).colwise() + CVec(t + L.b2, h)).array().tanh();
  c.mean = (CMap(t + L.W3, a, h) * c.a2).colwise() + CVec(t + L.b3, a);
  c.c1 = ((CMap(t + L.V1, h, o) * obs).colwise() + CVec(t + L.c1, h)).array().tanh();
  c.c2 = ((CMap(t + L.V2, h, h) * c.c1).colwise() + CVec(t + L.c2, h)).array().tanh();
  c.value = (CMap(t + L.V3, 1, h) * c.c2).array() + t[L.c3];
  return c;
}

VectorXd backward_batch(const PolicyParams& p, const ForwardCache& c, const MatrixXd& d_mean,
                        const VectorXd& d_log_std, const Eigen::RowVectorXd& d_value) {
  const ParamLayout L(p);
  const double* t = p.theta.data();
  const int o = L.o, a = L.a, h = L.h;
  VectorXd grad = VectorXd::Zero(static_cast<Eigen::Index>(L.total));
  double* g = grad.data();

  // Actor.
  Map<MatrixXd>(g + L.W3, a, h) = d_mean * c.a2.transpose();
  Map<VectorXd>(g + L.b3, a) = d_mean.rowwise().sum();
  MatrixXd dz2 = (CMap(t + L.W3, a, h).transpose() * d_mean).array() * (1.0 - c.a2.array().square());
  Map<MatrixXd>(g + L.W2, h, h) = dz2 * c.a1.transpose();
  Map<VectorXd>(g + L.b2, h) = dz2.rowwise().sum();
  MatrixXd dz1 = (CMap(t + L.W2, h, h).transpose() * dz2).array() * (1.0 - c.a1.array().square());
  Map<MatrixXd>(g + L.W1, h, o) = dz1 * c.x.transpose();
  Map<VectorXd>(g + L.b1, h) = dz1.rowwise().sum();
  Map<VectorXd>(g + L.log_std, a) = d_log_std;

  // Critic.
  Map<MatrixXd>(g + L.V3, 1, h) = d_value * c.c2.transpose();
  g[L.c3] = d_value.sum();
  MatrixXd dv2 = (CMap(t + L.V3, 1, h).transpose() * d_value).array() * (1.0 - c.c2.array().square());
  Map<MatrixXd>(g + L.V2, h, h) = dv2 * c.c1.transpose();
  Map<VectorXd>(g + L.c2, h) = dv2.rowwise().sum();
  MatrixXd dv1 = (CMap(t + L.V2, h, h).transpose() * dv2).array() * (1.0 - c.c1.array().square());
  Map<MatrixXd>(g + L.V1, h, o) = dv1 * c.x.transpose();
  Map<VectorXd>(g + L.c1, h) = dv1.rowwise().sum();
  return grad;
}

PolicyOutput policy_forward(const PolicyParams& p, std::span<const double> obs) {
  if (static_cast<int>(obs.size()) != p.obs_dim)
    throw PolicyError(PolicyErrc::ShapeMismatch,
                      fmt::format("observation has {} entries, policy expects {}", obs.size(), p.obs_dim));
  const ParamLayout L(p);
  MatrixXd x = CMap(obs.data(), p.obs_dim, 1);
  ForwardCache c = forward_batch(p, x);
  PolicyOutput out;
  out.mean = c.mean.col(0);
  out.log_std = p.theta.segment(static_cast<Eigen::Index>(L.log_std), p.act_dim);
  out.value = c.value(0);
  return out;
}

double gaussian_log_prob(const VectorXd& mean, const VectorXd& log_std, std::span<const double> action) {
  constexpr double half_log_2pi = 0.91893853320467274178;
  double lp = 0.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double z = (action[static_cast<std::size_t>(i)] - mean(i)) * std::exp(-log_std(i));
    lp += -0.5 * z * z - log_std(i) - half_log_2pi;
  }
  return lp;
}

std::vector<double> sample_action(const PolicyOutput& out, Rng& rng) {
  std::vector<double> a(static_cast<std::size_t>(out.mean.size()));
  for (Eigen::Index i = 0; i < out.mean.size(); ++i)
    a[static_cast<std::size_t>(i)] = out.mean(i) + std::exp(out.log_std(i)) * gaussian(rng);
  return a;
}

nlohmann::json to_json(const PolicyParams& p) {
  return {{"obs_dim", p.obs_dim},
          {"act_dim", p.act_dim},
          {"hidden", p.hidden},
          {"theta", std::vector<double>(p.theta.data(), p.theta.data() + p.theta.size())}};
}

PolicyParams policy_from_json(const nlohmann::json& j) {
  try {
    PolicyParams p = PolicyParams::zeros(j.at("obs_dim").get<int>(), j.at("act_dim").get<int>(),
                                         j.at("hidden").get<int>());
    const auto theta = j.at("theta").get<std::vector<double>>();
    if (theta.size() != static_cast<std::size_t>(p.theta.size()))
      throw PolicyError(PolicyErrc::BadCheckpoint,
                        fmt::format("checkpoint has {} weights, shape needs {}", theta.size(), p.theta.size()));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (!std::isfinite(theta[i])) throw PolicyError(PolicyErrc::BadCheckpoint, "non-finite weight in checkpoint");
      p.theta(static_cast<Eigen::Index>(i)) = theta[i];
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw PolicyError(PolicyErrc::BadCheckpoint, std::string("malformed policy checkpoint: ") + e.what());
  }
}

static_assert(std::endian::native == std::endian::little, "binary checkpoints assume a little-endian host");

std::string to_binary(const PolicyParams& p) {
  const std::int32_t shape[3] = {p.obs_dim, p.act_dim, p.hidden};
  const auto count = static_cast<std::uint64_t>(p.theta.size());
  std::string out = "LPAG";
  out.append(reinterpret_cast<const char*>(shape), sizeof shape);
  out.append(reinterpret_cast<const char*>(&count), sizeof count);
  out.append(reinterpret_cast<const char*>(p.theta.data()), count * sizeof(double));
  return out;
}

PolicyParams policy_from_binary(std::string_view bytes) {
  constexpr std::size_t header = 4 + 3 * sizeof(std::int32_t) + sizeof(std::uint64_t);
  if (bytes.size() < header || bytes.substr(0, 4) != "LPAG")
    throw PolicyError(PolicyErrc::BadCheckpoint, "not a binary policy checkpoint");
  std::int32_t shape[3];
  std::uint64_t count = 0;
  std::memcpy(shape, bytes.data() + 4, sizeof shape);
  std::memcpy(&count, bytes.data() + 4 + sizeof shape, sizeof count);
  PolicyParams p = PolicyParams::zeros(shape[0], shape[1], shape[2]);
  if (count != static_cast<std::uint64_t>(p.theta.size()) || bytes.size() != header + count * sizeof(double))
    throw PolicyError(PolicyErrc::BadCheckpoint, "binary policy checkpoint has the wrong size");
  std::memcpy(p.theta.data(), bytes.data() + header, count * sizeof(double));
  if (!p.theta.allFinite()) throw PolicyError(PolicyErrc::BadCheckpoint, "non-finite weight in checkpoint");
  return p;
}

}  // namespace llmpoet::ppo
