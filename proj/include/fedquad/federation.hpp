#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedquad/adam.hpp"
#include "fedquad/data.hpp"
#include "fedquad/losses.hpp"
#include "fedquad/metrics.hpp"
#include "fedquad/model.hpp"
#include "fedquad/sampler.hpp"

namespace fedquad {

enum class Method { kFedAvg, kFedQuad, kTripletFL, kQuadrupletFL, kSupConFL };

std::string_view method_name(Method method);
Method parse_method(std::string_view name);

// Local objective: (use_ce ? ce : 0) + beta * metric, where the metric term is
// chosen by the method (none for FedAvg).
struct LocalObjective {
  Method method = Method::kFedQuad;
  QuadLossConfig quad;       // beta, m1, m2, distance mode
  double margin = 1.0;       // triplet margin
  double temperature = 0.1;  // supervised contrastive temperature
  bool use_ce = true;

  bool operator==(const LocalObjective&) const = default;
};

struct FedConfig {
  std::size_t num_clients = 10;
  std::size_t rounds = 20;
  std::size_t local_epochs = 5;
  std::size_t batch_size = 128;
  double participation = 1.0;
  LocalObjective objective;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  // Test hook: when false, batch norm running statistics stay frozen.
  bool update_bn_stats = true;

  bool operator==(const FedConfig&) const = default;
};

// Throws ConfigError naming the offending field.
void validate(const FedConfig& cfg);

struct LossSummary {
  double loss = 0.0;
  double ce = 0.0;
  double metric = 0.0;
  std::size_t batches = 0;
};

struct ClientUpdate {
  std::size_t client_id = 0;
  ModelParams params;
  std::size_t num_samples = 0;
  LossSummary losses;  // means over the client's batches
  SamplerStats sampler;
  std::size_t steps = 0;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;  // NaN for classes absent from the test set
  std::vector<std::size_t> per_class_count;
};

struct RoundRecord {
  std::size_t round = 0;  // 1-based: state after the round's aggregation
  std::vector<std::size_t> participants;
  std::vector<std::size_t> client_samples;
  std::vector<double> weights;
  EvalResult eval;
  VarianceReport variance;
  LossSummary losses;  // sample-weighted means over participants
  SamplerStats sampler;
  double wall_time_seconds = 0.0;
};

// Entrywise weighted mean of aligned snapshots, buffers included. Weights must
// be non-negative and sum to 1 within 1e-12; they are renormalized. Each
// output entry is clamped to the range spanned by the inputs so identical
// inputs reproduce exactly. The step counter of the result is 0.
ModelParams aggregate(std::span<const ModelParams> params, std::span<const double> weights);

// ceil(fraction * num_clients) distinct clients, sorted; every client when the
// fraction is 1.
std::vector<std::size_t> select_participants(std::size_t num_clients, double fraction,
                                             std::uint64_t master_seed, std::size_t round);

// Runs E local epochs from `global` on the client's samples with a fresh
// optimizer. Deterministic in (seed, client_id, round).
ClientUpdate train_client(std::size_t client_id, std::size_t round, const ModelParams& global,
                          const EncoderModel& prototype, const Dataset& train,
                          std::span<const std::size_t> local_indices, const FedConfig& cfg);

// Evaluation-mode argmax accuracy; `model` must hold the parameters to score.
EvalResult evaluate_global(EncoderModel& model, const Dataset& test);
EvalResult evaluate_global(const EncoderModel& prototype, const ModelParams& params, const Dataset& test);

// Variance diagnostics are computed on at most this many test samples.
inline constexpr std::size_t kVarianceSampleCap = 5000;

struct FederationResult {
  ModelParams final_params;
  RoundRecord initial;  // evaluation of the initial model, round 0
  std::vector<RoundRecord> history;
};

using RoundCallback = std::function<void(const RoundRecord&, const ModelParams&)>;

// Initial model seeded from derive_seed(cfg.seed, "model-init").
EncoderModel initial_model(const ModelSpec& spec, std::uint64_t master_seed);

FederationResult run_federation(const FedConfig& cfg, const ModelSpec& spec, const Dataset& train,
                                const Dataset& test, const PartitionPlan& plan,
                                const RoundCallback& on_round = {});

// Single-model training on the whole training split: `rounds` blocks of
// `local_epochs` epochs as client 0, with the optimizer reset between blocks.
FederationResult run_centralized(const FedConfig& cfg, const ModelSpec& spec, const Dataset& train,
                                 const Dataset& test, const RoundCallback& on_round = {});

}  // namespace fedquad
