#pragma once

#include <span>
#include <string>
#include <string_view>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "llmpoet/error.hpp"
#include "llmpoet/rng.hpp"

namespace llmpoet::ppo {

enum class PolicyErrc { ShapeMismatch, BadCheckpoint };

class PolicyError : public Error {
 public:
  PolicyError(PolicyErrc code, std::string message) : Error(std::move(message)), code_(code) {}
  PolicyErrc code() const { return code_; }

 private:
  PolicyErrc code_;
};

/// Actor and critic MLPs (obs -> hidden -> hidden, tanh) stored in one flat
/// vector. The actor emits one mean per actuator and shares a state-free
/// log-std vector; the critic emits a scalar.
///
/// Flat layout, each matrix column-major:
///   actor  W1 (h x o), b1 (h), W2 (h x h), b2 (h), W3 (a x h), b3 (a), log_std (a)
///   critic V1 (h x o), c1 (h), V2 (h x h), c2 (h), V3 (1 x h), c3 (1)
struct PolicyParams {
  int obs_dim = 0;
  int act_dim = 0;
  int hidden = 64;
  Eigen::VectorXd theta;

  static std::size_t param_count(int obs_dim, int act_dim, int hidden);
  static PolicyParams zeros(int obs_dim, int act_dim, int hidden = 64);
  /// Orthogonal weights (gain sqrt(2) on hidden layers, 0.01 on the action
  /// head, 1 on the value head), zero biases, constant log-std.
  static PolicyParams init(int obs_dim, int act_dim, Rng& rng, int hidden = 64,
                           double log_std = -0.5);

  bool operator==(const PolicyParams& o) const {
    return obs_dim == o.obs_dim && act_dim == o.act_dim && hidden == o.hidden && theta == o.theta;
  }
};

/// Offsets into PolicyParams::theta.
struct ParamLayout {
  int o, a, h;
  std::size_t W1, b1, W2, b2, W3, b3, log_std;
  std::size_t V1, c1, V2, c2, V3, c3, total;

  ParamLayout(int obs_dim, int act_dim, int hidden);
  explicit ParamLayout(const PolicyParams& p) : ParamLayout(p.obs_dim, p.act_dim, p.hidden) {}
};

struct PolicyOutput {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_std;
  double value = 0.0;
};

PolicyOutput policy_forward(const PolicyParams& params, std::span<const double> obs);

/// Batched forward pass keeping the activations needed by backward_batch.
struct ForwardCache {
  Eigen::MatrixXd x;   // o x B
  Eigen::MatrixXd a1;  // actor hidden activations
  Eigen::MatrixXd a2;
  Eigen::MatrixXd c1;  // critic hidden activations
  Eigen::MatrixXd c2;
  Eigen::MatrixXd mean;        // a x B
  Eigen::RowVectorXd value;    // 1 x B
};

ForwardCache forward_batch(const PolicyParams& params, const Eigen::MatrixXd& obs);

/// Gradient of a scalar loss with respect to theta, given the loss gradient
/// with respect to the batch means, the shared log-std and the values.
Eigen::VectorXd backward_batch(const PolicyParams& params, const ForwardCache& cache,
                               const Eigen::MatrixXd& d_mean, const Eigen::VectorXd& d_log_std,
                               const Eigen::RowVectorXd& d_value);

double gaussian_log_prob(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                         std::span<const double> action);

std::vector<double> sample_action(const PolicyOutput& out, Rng& rng);

nlohmann::json to_json(const PolicyParams& p);
PolicyParams policy_from_json(const nlohmann::json& j);

/// Compact checkpoint form: "LPAG", three int32 shape fields, uint64 count,
/// then the weights as little-endian IEEE doubles.
std::string to_binary(const PolicyParams& p);
PolicyParams policy_from_binary(std::string_view bytes);

}  // namespace llmpoet::ppo
