#include "quatrec/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace quatrec {

NegativeSampler::NegativeSampler(const UserItemSets& train_items, std::size_t n_items)
    : train_items_(train_items), n_items_(n_items) {}

std::uint32_t NegativeSampler::sample(std::uint32_t user, std::mt19937_64& rng) const {
  static const std::vector<std::uint32_t> kNone;
  const auto& seen = user < train_items_.size() ? train_items_[user] : kNone;
  const auto in_range = std::count_if(seen.begin(), seen.end(), [&](std::uint32_t i) {
    return i >= 1 && i <= n_items_;
  });
  if (static_cast<std::size_t>(in_range) >= n_items_)
    throw SamplingExhaustedError("user " + std::to_string(user) + " has interacted with all " +
                                 std::to_string(n_items_) + " items");
  std::uniform_int_distribution<std::uint32_t> dist(1, static_cast<std::uint32_t>(n_items_));
  for (;;) {
    const std::uint32_t item = dist(rng);
    if (!std::binary_search(seen.begin(), seen.end(), item)) return item;
  }
}

// ---------------------------------------------------------------------------

Var bpr_data_term(Tape& tape, Model& model, std::span<const ScoringInstance> instances,
                  std::span<const Triplet> triplets, bool noisy) {
  if (triplets.empty()) throw ContractError("bpr_loss on an empty batch");
  struct Encoded {
    Model::Encoding enc;
    Var positive;
  };
  std::unordered_map<std::uint32_t, Encoded> cache;
  std::vector<Var> terms;
  terms.reserve(triplets.size());
  for (const auto& t : triplets) {
    if (t.instance >= instances.size())
      throw LookupError("triplet refers to instance " + std::to_string(t.instance) + " of " +
                        std::to_string(instances.size()));
    const ScoringInstance& inst = instances[t.instance];
    auto it = cache.find(t.instance);
    if (it == cache.end()) {
      Encoded e;
      e.enc = model.encode(tape, inst, noisy);
      e.positive = model.score(tape, e.enc, inst.target, noisy);
      it = cache.emplace(t.instance, e).first;
    }
    Var negative = model.score(tape, it->second.enc, t.negative, noisy);
    terms.push_back(ag::log_sigmoid(ag::sub(it->second.positive, negative)));
  }
  return ag::scale(ag::add_n(terms), -1.0);
}

Var bpr_loss(Tape& tape, Model& model, std::span<const ScoringInstance> instances,
             std::span<const Triplet> triplets, const BprWeights& weights, bool noisy) {
  Var loss = bpr_data_term(tape, model, instances, triplets, noisy);
  auto add_group = [&](ParamGroup group, double lambda) {
    if (lambda == 0) return;
    std::vector<Var> squares;
    for (const auto& name : model.params().names(group))
      squares.push_back(ag::sum_squares(tape.param(model.params().get(name))));
    if (!squares.empty()) loss = ag::add(loss, ag::scale(ag::add_n(squares), lambda));
  };
  add_group(ParamGroup::kWeight, weights.reg_weight);
  add_group(ParamGroup::kEmbedding, weights.reg_embedding);
  return loss;
}

Var qabpr_loss(Tape& tape, Model& model, std::span<const ScoringInstance> instances,
               std::span<const Triplet> triplets, const BprWeights& weights,
               double adv_weight) {
  Var loss = bpr_loss(tape, model, instances, triplets, weights);
  if (adv_weight == 0) return loss;
  return ag::add(loss,
                 ag::scale(bpr_loss(tape, model, instances, triplets, weights, true), adv_weight));
}

std::vector<std::vector<double>> fgm_noise(const std::vector<std::vector<double>>& grads,
                                           double epsilon) {
  double sq = 0;
  for (const auto& g : grads)
    for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  std::vector<std::vector<double>> out;
  out.reserve(grads.size());
  for (const auto& g : grads) {
    std::vector<double> d(g.size(), 0.0);
    if (norm > 0)
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = epsilon * (g[i] / norm);
    out.push_back(std::move(d));
  }
  return out;
}

void adam_step(AdamState& opt, ParamStore& params) {
  ++opt.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < params.count(); ++i) {
    Parameter& p = params.at(i);
    if (p.group == ParamGroup::kNoise || params.is_frozen(p.name)) continue;
    auto& m = opt.m[p.name];
    auto& v = opt.v[p.name];
    if (m.size() != p.size()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    for (std::size_t e = 0; e < p.size(); ++e) {
      const double g = p.grad[e];
      m[e] = opt.beta1 * m[e] + (1.0 - opt.beta1) * g;
      v[e] = opt.beta2 * v[e] + (1.0 - opt.beta2) * g * g;
      const double mhat = m[e] / c1;
      const double vhat = v[e] / c2;
      p.value[e] -= opt.learning_rate * mhat / (std::sqrt(vhat) + opt.eps);
    }
    p.clear_padding_row();
  }
}

std::string to_string(LossKind kind) { return kind == LossKind::kBpr ? "bpr" : "qabpr"; }

LossKind parse_loss_kind(const std::string& name) {
  if (name == "bpr") return LossKind::kBpr;
  if (name == "qabpr") return LossKind::kQabpr;
  throw ContractError("unknown loss '" + name + "' (expected bpr or qabpr)");
}

// ---------------------------------------------------------------------------

std::vector<Triplet> sample_triplets(std::span<const ScoringInstance> instances,
                                     std::span<const std::uint32_t> order, std::size_t begin,
                                     std::size_t end, std::size_t negatives,
                                     const NegativeSampler& sampler, std::mt19937_64& rng) {
  std::vector<Triplet> out;
  out.reserve((end - begin) * negatives);
  for (std::size_t i = begin; i < end; ++i) {
    const std::uint32_t idx = order[i];
    for (std::size_t n = 0; n < negatives; ++n)
      out.push_back({idx, sampler.sample(instances[idx].user, rng)});
  }
  return out;
}

namespace {

void require_data(const TrainingData& data) {
  if (!data.train_items || !data.interacted)
    throw ContractError("training data lacks the user item sets");
  if (data.train.empty()) throw DataError("no training instances");
}

void require_finite(double loss, std::size_t batch) {
  if (!std::isfinite(loss))
    throw NumericError("non-finite training loss (" + std::to_string(loss) + ") at batch " +
                       std::to_string(batch));
}

std::vector<std::uint32_t> shuffled_order(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::set<std::string> model_parameters(const ParamStore& params) {
  auto out = params.names(ParamGroup::kEmbedding);
  auto w = params.names(ParamGroup::kWeight);
  out.insert(w.begin(), w.end());
  return out;
}

}  // namespace

EpochStats bpr_epoch(Model& model, AdamState& opt, const TrainingData& data,
                     const TrainConfig& config, std::mt19937_64& rng) {
  require_data(data);
  NegativeSampler sampler(*data.train_items, data.n_items);
  const BprWeights weights{config.reg_weight, config.reg_embedding};
  const auto order = shuffled_order(data.train.size(), rng);
  EpochStats stats;
  Tape tape;
  for (std::size_t begin = 0, batch = 0; begin < order.size();
       begin += config.batch_size, ++batch) {
    const std::size_t end = std::min(order.size(), begin + config.batch_size);
    const auto triplets =
        sample_triplets(data.train, order, begin, end, config.negatives, sampler, rng);
    model.params().zero_grad();
    tape.reset();
    Var loss = bpr_loss(tape, model, data.train, triplets, weights);
    require_finite(loss.scalar(), batch);
    tape.backward(loss);
    adam_step(opt, model.params());
    stats.loss += loss.scalar();
    stats.triplets += triplets.size();
  }
  return stats;
}

double adversarial_step(Model& model, std::span<const ScoringInstance> instances,
                        std::span<const Triplet> triplets, double epsilon, double noise_reg) {
  Tape tape;
  return adversarial_step(tape, model, instances, triplets, epsilon, noise_reg);
}

double adversarial_step(Tape& tape, Model& model, std::span<const ScoringInstance> instances,
                        std::span<const Triplet> triplets, double epsilon, double noise_reg) {
  model.enable_noise();
  ParamStore& params = model.params();
  const auto noise = model.noise_tables();
  const auto fixed = model_parameters(params);
  params.freeze(fixed);
  params.zero_grad();
  tape.reset();
  Var adv = bpr_data_term(tape, model, instances, triplets, true);
  if (noise_reg != 0) {
    std::vector<Var> squares;
    for (const auto& name : noise) squares.push_back(ag::sum_squares(tape.param(params.get(name))));
    adv = ag::sub(adv, ag::scale(ag::add_n(squares), noise_reg));
  }
  tape.backward(adv);
  std::vector<std::vector<double>> grads;
  double sq = 0;
  for (const auto& name : noise) {
    grads.push_back(params.get(name).grad);
    for (double g : grads.back()) sq += g * g;
  }
  auto delta = fgm_noise(grads, epsilon);
  for (std::size_t i = 0; i < noise.size(); ++i) {
    Parameter& p = params.get(noise[i]);
    p.value = std::move(delta[i]);
    p.clear_padding_row();
  }
  params.unfreeze(fixed);
  params.zero_grad();
  return std::sqrt(sq);
}

EpochStats qabpr_epoch(Model& model, AdamState& opt, const TrainingData& data,
                       const TrainConfig& config, std::mt19937_64& rng) {
  require_data(data);
  model.enable_noise();
  NegativeSampler sampler(*data.train_items, data.n_items);
  const BprWeights weights{config.reg_weight, config.reg_embedding};
  const auto noise = model.noise_tables();
  const std::set<std::string> noise_set(noise.begin(), noise.end());
  const auto order = shuffled_order(data.train.size(), rng);
  EpochStats stats;
  Tape tape;
  for (std::size_t begin = 0, batch = 0; begin < order.size();
       begin += config.batch_size, ++batch) {
    const std::size_t end = std::min(order.size(), begin + config.batch_size);
    const auto triplets =
        sample_triplets(data.train, order, begin, end, config.negatives, sampler, rng);

    if (config.adv_weight != 0)
      adversarial_step(tape, model, data.train, triplets, config.epsilon, config.noise_reg);

    ParamStore& params = model.params();
    params.freeze(noise_set);
    params.zero_grad();
    tape.reset();
    Var loss = qabpr_loss(tape, model, data.train, triplets, weights, config.adv_weight);
    require_finite(loss.scalar(), batch);
    tape.backward(loss);
    adam_step(opt, params);
    params.unfreeze(noise_set);
    stats.loss += loss.scalar();
    stats.triplets += triplets.size();
  }
  return stats;
}

// ---------------------------------------------------------------------------

TrainResult train(Model& model, const TrainingData& data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  require_data(data);
  if (config.batch_size == 0 || config.negatives == 0)
    throw ContractError("batch size and negatives must be positive");
  AdamState opt;
  opt.learning_rate = config.learning_rate;
  std::mt19937_64 rng(config.seed);

  EvalOptions val_options = config.validation;
  if (std::find(val_options.cutoffs.begin(), val_options.cutoffs.end(), 100) ==
      val_options.cutoffs.end())
    val_options.cutoffs.push_back(100);
  auto validate = [&]() -> MetricReport {
    if (data.validation.empty()) {
      MetricReport empty = summarize({}, val_options.cutoffs);
      return empty;
    }
    ModelScorer scorer(model);
    return evaluate(scorer, data.validation, *data.interacted, data.n_items, val_options);
  };

  TrainResult result;
  const MetricReport initial = validate();
  result.initial_val_ndcg100 = initial.ndcg_at(100);
  result.best_val_ndcg100 = result.initial_val_ndcg100;
  ParamStore best = model.params();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const EpochStats stats = config.loss == LossKind::kBpr
                                 ? bpr_epoch(model, opt, data, config, rng)
                                 : qabpr_epoch(model, opt, data, config, rng);
    const MetricReport val = validate();
    EpochLog log;
    log.epoch = epoch;
    log.loss = stats.loss / static_cast<double>(std::max<std::size_t>(1, stats.triplets));
    log.val_hit100 = val.hit_at(100);
    log.val_ndcg100 = val.ndcg_at(100);
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (log.val_ndcg100 > result.best_val_ndcg100) {
      result.best_val_ndcg100 = log.val_ndcg100;
      result.best_epoch = epoch;
      best = model.params();
    }
  }
  if (config.select_best && result.best_epoch != config.epochs) {
    // Restore values only, so noise tables and freeze state stay as they are.
    for (std::size_t i = 0; i < best.count(); ++i) {
      const Parameter& b = best.at(i);
      if (b.group == ParamGroup::kNoise) continue;
      model.params().get(b.name).value = b.value;
    }
  }
  return result;
}

}  // namespace quatrec
