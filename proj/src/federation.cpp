#include "fedquad/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include "fedquad/error.hpp"
#include "fedquad/io.hpp"
#include "fedquad/rng.hpp"

namespace fedquad {
namespace {

std::size_t metric_segments(Method method) {
  switch (method) {
    case Method::kFedAvg:
      return 1;
    case Method::kSupConFL:
      return 2;
    case Method::kTripletFL:
      return 3;
    case Method::kFedQuad:
    case Method::kQuadrupletFL:
      return 4;
  }
  return 1;
}

void copy_rows(const Tensor& src, Tensor& dst, std::size_t first_row) {
  std::copy(src.storage().begin(), src.storage().end(),
            dst.storage().begin() + static_cast<std::ptrdiff_t>(first_row * dst.row_size()));
}

struct StepLoss {
  double loss = 0.0;
  double ce = 0.0;
  double metric = 0.0;
};

// Losses and upstream gradients for one quadruplet batch already forwarded
// through the model as `segments` stacked groups [a; p; n1; n2].
StepLoss local_loss(const LocalObjective& obj, const QuadrupletBatch& batch, std::size_t segments,
                    const ForwardResult& fwd, Tensor& g_emb, Tensor& g_logits) {
  const std::size_t b = batch.size();
  StepLoss out;
  const bool metric = segments > 1;
  const double beta = obj.quad.beta;
  auto seg = [&](std::size_t s) { return fwd.embeddings.slice_rows(s * b, (s + 1) * b); };

  if (metric && obj.method == Method::kFedQuad && obj.use_ce) {
    const Tensor anchor_logits = fwd.logits.slice_rows(0, b);
    LossOutput l = combined_loss(anchor_logits, batch.anchor_labels, seg(0), seg(1), seg(2), seg(3), obj.quad);
    copy_rows(l.grads[0], g_logits, 0);
    for (std::size_t s = 0; s < 4; ++s) copy_rows(l.grads[1 + s], g_emb, s * b);
    out.loss = l.value;
    out.ce = l.component("ce");
    out.metric = l.component("quad_star");
    return out;
  }

  if (obj.use_ce) {
    LossOutput ce = cross_entropy(segments == 1 ? fwd.logits : fwd.logits.slice_rows(0, b), batch.anchor_labels);
    copy_rows(ce.grads[0], g_logits, 0);
    out.ce = ce.value;
  }
  if (metric) {
    LossOutput m;
    switch (obj.method) {
      case Method::kFedQuad:
        m = quad_star(seg(0), seg(1), seg(2), seg(3), obj.quad);
        break;
      case Method::kQuadrupletFL:
        m = quadruplet_traditional(seg(0), seg(1), seg(2), seg(3), obj.quad.m1, obj.quad.m2,
                                   obj.quad.squared_distance);
        break;
      case Method::kTripletFL:
        m = triplet_loss(seg(0), seg(1), seg(2), obj.margin, obj.quad.squared_distance);
        break;
      case Method::kSupConFL: {
        std::vector<int> labels = batch.anchor_labels;
        labels.insert(labels.end(), batch.anchor_labels.begin(), batch.anchor_labels.end());
        m = supcon_loss(fwd.embeddings, labels, obj.temperature);
        break;
      }
      case Method::kFedAvg:
        break;
    }
    for (auto& g : m.grads) {
      for (auto& x : g.storage()) x *= beta;
    }
    if (m.grads.size() == 1) {
      copy_rows(m.grads[0], g_emb, 0);
    } else {
      for (std::size_t s = 0; s < m.grads.size(); ++s) copy_rows(m.grads[s], g_emb, s * b);
    }
    out.metric = m.value;
  }
  out.loss = out.ce + beta * out.metric;
  return out;
}

}  // namespace

std::string_view method_name(Method method) {
  switch (method) {
    case Method::kFedAvg:
      return "fedavg";
    case Method::kFedQuad:
      return "fedquad";
    case Method::kTripletFL:
      return "tripletfl";
    case Method::kQuadrupletFL:
      return "quadrupletfl";
    case Method::kSupConFL:
      return "supconfl";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::kFedAvg, Method::kFedQuad, Method::kTripletFL, Method::kQuadrupletFL,
                   Method::kSupConFL}) {
    if (method_name(m) == name) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) +
                    "' (expected fedavg, fedquad, tripletfl, quadrupletfl or supconfl)");
}

void validate(const FedConfig& cfg) {
  if (cfg.num_clients < 1) throw ConfigError("federation.num_clients must be >= 1");
  if (cfg.rounds < 1) throw ConfigError("federation.rounds must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("federation.batch_size must be >= 1");
  if (!(cfg.participation > 0.0 && cfg.participation <= 1.0)) {
    throw ConfigError("federation.participation must be in (0, 1]");
  }
  if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
  const auto& o = cfg.objective;
  if (!(o.quad.beta >= 0.0) || !std::isfinite(o.quad.beta)) throw ConfigError("method.beta must be >= 0");
  if (!(o.quad.m1 >= 0.0) || !(o.quad.m2 >= 0.0)) throw ConfigError("method.m1 and method.m2 must be >= 0");
  if (!(o.margin >= 0.0)) throw ConfigError("method.margin must be >= 0");
  if (!(o.temperature > 0.0)) throw ConfigError("method.temperature must be > 0");
  if (!o.use_ce && o.method == Method::kFedAvg) throw ConfigError("method.use_ce=false needs a metric method");
  if (!(cfg.adam.lr >= 0.0)) throw ConfigError("optimizer.lr must be >= 0");
  if (!(cfg.adam.beta1 >= 0.0 && cfg.adam.beta1 < 1.0)) throw ConfigError("optimizer.beta1 must be in [0, 1)");
  if (!(cfg.adam.beta2 >= 0.0 && cfg.adam.beta2 < 1.0)) throw ConfigError("optimizer.beta2 must be in [0, 1)");
  if (!(cfg.adam.eps > 0.0)) throw ConfigError("optimizer.eps must be > 0");
  if (!(cfg.adam.weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay must be >= 0");
}

ModelParams aggregate(std::span<const ModelParams> params, std::span<const double> weights) {
  if (params.empty()) throw InputError("aggregate: no client models");
  if (params.size() != weights.size()) {
    throw InputError("aggregate: " + std::to_string(params.size()) + " models but " +
                     std::to_string(weights.size()) + " weights");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("aggregate: weights must be finite and >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw InputError("aggregate: weights sum to " + format_double(total) + ", expected 1");
  }
  for (std::size_t k = 1; k < params.size(); ++k) {
    if (!params[k].same_layout(params[0])) {
      throw InputError("aggregate: client " + std::to_string(k) + " parameter layout differs from client 0");
    }
  }
  std::vector<double> w(weights.begin(), weights.end());
  for (auto& x : w) x /= total;

  ModelParams out = params[0];
  out.step_count = 0;
  for (std::size_t e = 0; e < out.entries.size(); ++e) {
    auto& dst = out.entries[e].value.storage();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      double acc = 0.0;
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t k = 0; k < params.size(); ++k) {
        const double v = params[k].entries[e].value.storage()[i];
        acc += w[k] * v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      dst[i] = std::clamp(acc, lo, hi);
    }
  }
  return out;
}

std::vector<std::size_t> select_participants(std::size_t num_clients, double fraction,
                                             std::uint64_t master_seed, std::size_t round) {
  std::size_t k = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(num_clients) * (1.0 - 1e-12)));
  k = std::clamp<std::size_t>(k, 1, num_clients);
  std::vector<std::size_t> ids(num_clients);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  if (k == num_clients) return ids;
  Rng rng(derive_seed(master_seed, "participation", {round}));
  for (std::size_t i = 0; i < k; ++i) std::swap(ids[i], ids[i + rng.index(num_clients - i)]);
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

ClientUpdate train_client(std::size_t client_id, std::size_t round, const ModelParams& global,
                          const EncoderModel& prototype, const Dataset& train,
                          std::span<const std::size_t> local_indices, const FedConfig& cfg) {
  if (local_indices.empty()) {
    throw DataError("client " + std::to_string(client_id) + " has no local data");
  }
  EncoderModel model = prototype;
  model.load(global);
  Adam adam(cfg.adam);
  auto slots = model.slots();

  std::vector<int> local_labels;
  local_labels.reserve(local_indices.size());
  for (std::size_t i : local_indices) local_labels.push_back(train.labels.at(i));
  const ClassIndex index = build_class_index(local_labels);

  const LocalObjective& obj = cfg.objective;
  const bool wants_metric = obj.method != Method::kFedAvg && obj.quad.beta != 0.0;

  ClientUpdate update;
  update.client_id = client_id;
  update.num_samples = local_indices.size();
  std::vector<std::size_t> gather_idx;
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    const auto rows = sample_epoch_quadruplets(index, derive_seed(cfg.seed, "quadruplets", {client_id, round, epoch}));
    const SamplerStats st = summarize(rows);
    update.sampler.rows += st.rows;
    update.sampler.degenerate_positive += st.degenerate_positive;
    update.sampler.degenerate_negative += st.degenerate_negative;
    update.sampler.skipped_metric += st.skipped_metric;
    const auto batches = batch_iter(rows, cfg.batch_size);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      const std::size_t segments = wants_metric && batch.any_metric() ? metric_segments(obj.method) : 1;
      const std::vector<std::size_t>* groups[4] = {&batch.anchor_idx, &batch.positive_idx, &batch.neg1_idx,
                                                   &batch.neg2_idx};
      gather_idx.clear();
      for (std::size_t s = 0; s < segments; ++s) {
        for (std::size_t local : *groups[s]) gather_idx.push_back(local_indices[local]);
      }
      const std::string where = "client " + std::to_string(client_id) + " round " + std::to_string(round) +
                                " epoch " + std::to_string(epoch) + " batch " + std::to_string(bi);
      try {
        ForwardContext ctx;
        ctx.training = true;
        ctx.segments = segments;
        ctx.update_running_stats = cfg.update_bn_stats;
        const ForwardResult fwd = model.forward(train.gather(gather_idx), ctx);
        Tensor g_emb(fwd.embeddings.shape());
        Tensor g_logits(fwd.logits.shape());
        const StepLoss l = local_loss(obj, batch, segments, fwd, g_emb, g_logits);
        if (!std::isfinite(l.loss)) throw NumericError("non-finite loss");
        model.backward(g_emb, g_logits);
        adam.step(slots);
        update.losses.loss += l.loss;
        update.losses.ce += l.ce;
        update.losses.metric += l.metric;
        ++update.losses.batches;
        ++update.steps;
      } catch (const NumericError& e) {
        throw NumericError(where + ": " + e.what());
      }
    }
  }
  if (update.losses.batches > 0) {
    const double n = static_cast<double>(update.losses.batches);
    update.losses.loss /= n;
    update.losses.ce /= n;
    update.losses.metric /= n;
  }
  update.params = model.params();
  update.params.step_count = global.step_count + update.steps;
  return update;
}

EvalResult evaluate_global(EncoderModel& model, const Dataset& test) {
  if (test.size() == 0) throw DataError("evaluation set is empty");
  const ForwardResult out = embed_dataset(model, test);
  const std::size_t k = model.num_classes();
  EvalResult r;
  std::vector<std::size_t> correct(k, 0);
  r.per_class_count.assign(k, 0);
  std::size_t total_correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const double* row = out.logits.data() + i * k;
    const std::size_t pred = static_cast<std::size_t>(std::max_element(row, row + k) - row);
    const auto y = static_cast<std::size_t>(test.labels[i]);
    if (y >= k) throw DataError("test label " + std::to_string(y) + " exceeds model classes");
    ++r.per_class_count[y];
    if (pred == y) {
      ++correct[y];
      ++total_correct;
    }
  }
  r.accuracy = static_cast<double>(total_correct) / static_cast<double>(test.size());
  r.per_class_accuracy.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    r.per_class_accuracy[c] = r.per_class_count[c] == 0
                                  ? std::numeric_limits<double>::quiet_NaN()
                                  : static_cast<double>(correct[c]) / static_cast<double>(r.per_class_count[c]);
  }
  return r;
}

EvalResult evaluate_global(const EncoderModel& prototype, const ModelParams& params, const Dataset& test) {
  EncoderModel model = prototype;
  model.load(params);
  return evaluate_global(model, test);
}

EncoderModel initial_model(const ModelSpec& spec, std::uint64_t master_seed) {
  return EncoderModel(spec, derive_seed(master_seed, "model-init"));
}

namespace {

void score_round(RoundRecord& rec, const EncoderModel& prototype, const ModelParams& params, const Dataset& test) {
  EncoderModel model = prototype;
  model.load(params);
  rec.eval = evaluate_global(model, test);
  const std::size_t n = std::min(test.size(), kVarianceSampleCap);
  const ForwardResult emb = embed_dataset(model, test, n);
  std::vector<int> labels(test.labels.begin(), test.labels.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<int> distinct = labels;
  std::sort(distinct.begin(), distinct.end());
  if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() >= 2) {
    rec.variance = variance_report(emb.embeddings, labels);
  }
}

std::vector<ClientUpdate> train_cohort(const FedConfig& cfg, std::size_t round, const ModelParams& global,
                                       const EncoderModel& prototype, const Dataset& train,
                                       const PartitionPlan& plan, const std::vector<std::size_t>& cohort) {
  std::vector<ClientUpdate> updates(cohort.size());
  std::vector<std::exception_ptr> errors(cohort.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < cohort.size(); i = next++) {
      try {
        const std::size_t c = cohort[i];
        updates[i] = train_client(c, round, global, prototype, train, plan.client_indices[c], cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(cfg.workers, cohort.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return updates;
}

RoundRecord summarize_round(std::size_t round, const std::vector<std::size_t>& cohort,
                            const std::vector<ClientUpdate>& updates, const std::vector<double>& weights) {
  RoundRecord rec;
  rec.round = round;
  rec.participants = cohort;
  rec.weights = weights;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    const auto& u = updates[i];
    rec.client_samples.push_back(u.num_samples);
    rec.losses.loss += weights[i] * u.losses.loss;
    rec.losses.ce += weights[i] * u.losses.ce;
    rec.losses.metric += weights[i] * u.losses.metric;
    rec.losses.batches += u.losses.batches;
    rec.sampler.rows += u.sampler.rows;
    rec.sampler.degenerate_positive += u.sampler.degenerate_positive;
    rec.sampler.degenerate_negative += u.sampler.degenerate_negative;
    rec.sampler.skipped_metric += u.sampler.skipped_metric;
  }
  return rec;
}

}  // namespace

FederationResult run_federation(const FedConfig& cfg, const ModelSpec& spec, const Dataset& train,
                                const Dataset& test, const PartitionPlan& plan, const RoundCallback& on_round) {
  validate(cfg);
  if (plan.num_clients() != cfg.num_clients) {
    throw ConfigError("partition has " + std::to_string(plan.num_clients()) + " clients, config expects " +
                      std::to_string(cfg.num_clients));
  }
  const EncoderModel prototype = initial_model(spec, cfg.seed);
  FederationResult result;
  result.final_params = prototype.params();
  score_round(result.initial, prototype, result.final_params, test);

  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const auto cohort = select_participants(cfg.num_clients, cfg.participation, cfg.seed, t);
    std::vector<ClientUpdate> updates;
    try {
      updates = train_cohort(cfg, t, result.final_params, prototype, train, plan, cohort);
    } catch (const Error& e) {
      rethrow_with_context(e, "round " + std::to_string(t + 1));
    }
    std::size_t n = 0;
    for (const auto& u : updates) n += u.num_samples;
    std::vector<double> weights;
    std::vector<ModelParams> snapshots;
    for (auto& u : updates) {
      weights.push_back(static_cast<double>(u.num_samples) / static_cast<double>(n));
      snapshots.push_back(u.params);
    }
    result.final_params = aggregate(snapshots, weights);
    RoundRecord rec = summarize_round(t + 1, cohort, updates, weights);
    score_round(rec, prototype, result.final_params, test);
    rec.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_round) on_round(rec, result.final_params);
    result.history.push_back(std::move(rec));
  }
  return result;
}

FederationResult run_centralized(const FedConfig& cfg, const ModelSpec& spec, const Dataset& train,
                                 const Dataset& test, const RoundCallback& on_round) {
  validate(cfg);
  const EncoderModel prototype = initial_model(spec, cfg.seed);
  std::vector<std::size_t> all(train.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  FederationResult result;
  result.final_params = prototype.params();
  score_round(result.initial, prototype, result.final_params, test);
  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    const auto start = std::chrono::steady_clock::now();
    ClientUpdate u;
    try {
      u = train_client(0, t, result.final_params, prototype, train, all, cfg);
    } catch (const Error& e) {
      rethrow_with_context(e, "epoch block " + std::to_string(t + 1));
    }
    result.final_params = std::move(u.params);
    result.final_params.step_count = 0;
    std::vector<ClientUpdate> one;
    one.push_back(std::move(u));
    RoundRecord rec = summarize_round(t + 1, {0}, one, {1.0});
    score_round(rec, prototype, result.final_params, test);
    rec.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_round) on_round(rec, result.final_params);
    result.history.push_back(std::move(rec));
  }
  return result;
}

}  // namespace fedquad
