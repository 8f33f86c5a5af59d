// Acceptance gate: runs criteria 1-8 and prints one PASS/FAIL line each.
// Usage: acceptance [criterion ...]   (no arguments runs all eight)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracle/fixtures.hpp"
#include "oracle/gradcheck.hpp"
#include "oracle/metric_fixture.hpp"
#include "oracle/oracle.hpp"
#include "oracle/peel.hpp"
#include "oracle/primitives.hpp"
#include "oracle/toy.hpp"
#include "quatrec/data.hpp"
#include "quatrec/eval.hpp"
#include "quatrec/models.hpp"
#include "quatrec/qtensor.hpp"
#include "quatrec/quaternion.hpp"
#include "quatrec/synthetic.hpp"
#include "quatrec/training.hpp"

namespace {

using namespace quatrec;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Collects failed checks; the criterion passes when none failed.
class Verdict {
 public:
  void check(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& text) { notes_.push_back(text); }
  bool passed() const { return failures_.empty(); }
  std::string summary() const {
    std::string out;
    for (const auto& n : notes_) out += (out.empty() ? "" : "; ") + n;
    for (const auto& f : failures_) out += (out.empty() ? "FAILED " : "; FAILED ") + f;
    return out;
  }

 private:
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

// ---------------------------------------------------------------------------

void algebra(Verdict& v) {
  const auto t0 = Clock::now();
  const Quat one = Quat::identity(), i = Quat::i(), j = Quat::j(), k = Quat::k();
  v.check(hamilton(i, j) == k, "i j = k");
  v.check(hamilton(j, i) == -k, "j i = -k");
  v.check(hamilton(j, k) == i, "j k = i");
  v.check(hamilton(k, j) == -i, "k j = -i");
  v.check(hamilton(k, i) == j, "k i = j");
  v.check(hamilton(i, k) == -j, "i k = -j");
  v.check(hamilton(i, i) == -one && hamilton(j, j) == -one && hamilton(k, k) == -one,
          "squares are -1");
  v.check(hamilton(Quat{1, 2, 3, 4}, Quat{5, 6, 7, 8}) == Quat{-60, 12, 30, 24},
          "worked product");

  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-2, 2);
  auto draw = [&] { return Quat{u(rng), u(rng), u(rng), u(rng)}; };
  auto dist = [](const Quat& x, const Quat& y) { return (x - y).norm(); };
  double assoc = 0, left = 0, right = 0, norm = 0;
  for (int t = 0; t < 10000; ++t) {
    const Quat x = draw(), y = draw(), z = draw();
    assoc = std::max(assoc, dist(hamilton(hamilton(x, y), z), hamilton(x, hamilton(y, z))));
    left = std::max(left, dist(hamilton(x, y + z), hamilton(x, y) + hamilton(x, z)));
    right = std::max(right, dist(hamilton(x + y, z), hamilton(x, z) + hamilton(y, z)));
    norm = std::max(norm, std::abs(hamilton(x, y).norm() - x.norm() * y.norm()));
  }
  v.check(assoc < 1e-9, "associativity " + fmt("%.2e", assoc));
  v.check(left < 1e-9 && right < 1e-9, "distributivity " + fmt("%.2e", std::max(left, right)));
  v.check(norm < 1e-9, "norm multiplicativity " + fmt("%.2e", norm));
  v.note("10^4 triples, worst law error " + fmt("%.2e", std::max({assoc, left, right, norm})));
  const double s = seconds_since(t0);
  v.check(s < 5, "runtime " + fmt("%.2f s", s));
}

void gradients(Verdict& v) {
  const auto t0 = Clock::now();
  double worst = 0;
  std::string worst_at;
  auto record = [&](const oracle::GradReport& r, const std::string& what) {
    if (r.max_rel > worst) {
      worst = r.max_rel;
      worst_at = what + " " + r.worst;
    }
    v.check(r.max_rel < 1e-4, what + " rel " + fmt("%.2e", r.max_rel));
  };
  std::size_t primitives = 0;
  for (const auto& prim : oracle::kPrimitives) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      ParamStore ps = oracle::primitive_store(seed);
      record(oracle::check_gradients(ps, oracle::all_names(ps),
                                     [&](Tape& t) { return oracle::readout(prim.build(t, ps), 99); }),
             prim.name);
    }
    ++primitives;
  }
  const ModelKind kinds[] = {ModelKind::kQuale, ModelKind::kQuaseLstm, ModelKind::kQuaseGru,
                             ModelKind::kQualse};
  for (ModelKind kind : kinds) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      std::mt19937_64 rng(seed);
      Model model(oracle::small_config(kind, 8, 4, 3), seed);
      oracle::randomize(model, rng);
      const auto inst = oracle::random_instance(rng, 4, 7, 4, 3, 1 + seed);
      const auto r = oracle::check_gradients(
          model.params(), oracle::all_names(model.params()), [&](Tape& t) {
            return model.score(t, model.encode(t, inst), inst.target);
          });
      v.check(r.checked > 100, to_string(kind) + " checked too few entries");
      record(r, to_string(kind));
    }
  }
  v.note(std::to_string(primitives) + " primitives and 4 models, max rel " + fmt("%.2e", worst) +
         " at " + worst_at);
  const double s = seconds_since(t0);
  v.check(s < 60, "runtime " + fmt("%.2f s", s));
}

void parameter_count(Verdict& v) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t d : {32u, 64u}) {
    const std::size_t q = d / 4;
    v.check(hamilton_linear_parameter_count(d, d) == d * d / 4, "count for d=" + std::to_string(d));
    QTensor w(q, q), x(q);
    v.check(w.size() == d * d / 4, "weight tensor size for d=" + std::to_string(d));
    for (double& e : w.flat()) e = u(rng);
    for (double& e : x.flat()) e = u(rng);

    // The d x d real matrix spanned by those reals reproduces the layer.
    std::vector<double> real(d * d);
    for (std::size_t o = 0; o < q; ++o)
      for (std::size_t in = 0; in < q; ++in) {
        oracle::Q4 wq;
        for (std::size_t p = 0; p < 4; ++p) wq[p] = w.flat()[p * q * q + o * q + in];
        for (std::size_t pin = 0; pin < 4; ++pin) {
          oracle::Q4 basis{0, 0, 0, 0};
          basis[pin] = 1;
          const auto col = oracle::hmul(wq, basis);
          for (std::size_t pout = 0; pout < 4; ++pout)
            real[(pout * q + o) * d + pin * q + in] = col[pout];
        }
      }
    const QTensor z = hamilton_linear(w, x);
    double err = 0;
    for (std::size_t r = 0; r < d; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < d; ++c) s += real[r * d + c] * x.flat()[c];
      err = std::max(err, std::abs(s - z.flat()[r]));
    }
    v.check(err < 1e-12, "real expansion for d=" + std::to_string(d));

    // The model's own d -> d weights register exactly d^2/4 reals each.
    ModelConfig config = oracle::small_config(ModelKind::kQualse, d, 4, 3);
    Model model(config, 1);
    std::size_t square = 0;
    for (std::size_t p = 0; p < model.params().count(); ++p) {
      const auto& param = model.params().at(p);
      if (param.group != ParamGroup::kWeight || param.rows != q || param.cols != q) continue;
      ++square;
      v.check(param.size() == d * d / 4, param.name + " size");
    }
    v.check(square > 0, "no d x d weights in the model");
    v.note("d=" + std::to_string(d) + ": " + std::to_string(d * d / 4) + " of " +
           std::to_string(d * d) + " reals, " + std::to_string(square) + " model layers");
  }
}

void oracle_equivalence(Verdict& v) {
  const ModelKind kinds[] = {ModelKind::kQuale, ModelKind::kQuaseLstm, ModelKind::kQuaseGru,
                             ModelKind::kQualse};
  double worst = 0;
  std::size_t compared = 0;
  for (ModelKind kind : kinds) {
    double kind_worst = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed);
      Model model(oracle::small_config(kind), seed);
      oracle::randomize(model, rng);
      const auto inst = oracle::random_instance(rng, 4, 7, 4, 3, 1 + seed % 6);
      for (std::uint32_t item = 1; item <= 7; ++item) {
        const double got = model.score(inst, item);
        const double want = oracle::reference_score(model, inst, item);
        kind_worst = std::max(kind_worst, std::abs(got - want));
        ++compared;
      }
    }
    v.check(kind_worst < 1e-9, to_string(kind) + " " + fmt("%.2e", kind_worst));
    worst = std::max(worst, kind_worst);
  }
  v.note(std::to_string(compared) + " scores over 100 seeds, max |diff| " + fmt("%.2e", worst));
}

void metric_oracle(Verdict& v) {
  oracle::FiveInstanceFixture f;
  const auto report = evaluate(f.scorer, f.instances, f.interacted, 20, f.options);
  const std::vector<std::size_t> ranks{1, 2, 6, 13, 20};
  std::vector<std::size_t> got;
  for (const auto& r : report.rankings) got.push_back(r.rank);
  v.check(got == ranks, "fixture ranks");
  for (std::size_t cutoff : {1u, 5u, 10u, 20u}) {
    double hit = 0, ndcg = 0;
    for (std::size_t r : ranks)
      if (r <= cutoff) {
        hit += 1;
        ndcg += 1 / std::log2(static_cast<double>(r) + 1);
      }
    hit /= 5;
    ndcg /= 5;
    v.check(std::abs(report.hit_at(cutoff) - hit) < 1e-12, "HIT@" + std::to_string(cutoff));
    v.check(std::abs(report.ndcg_at(cutoff) - ndcg) < 1e-12, "NDCG@" + std::to_string(cutoff));
  }
  v.check(std::abs(report.ndcg_at(10) - 0.3974274) < 1e-7, "NDCG@10 literal");
  v.check(std::abs(ndcg_at(2, 10) - 0.6309) < 5e-5, "rank 2 gives 0.6309");

  const std::size_t n = 10000, n_items = 3000;
  const auto instances = oracle::random_instances(n, n_items);
  UserItemSets interacted(n + 1);
  for (const auto& inst : instances) interacted[inst.user] = {inst.target};
  const auto random = evaluate(oracle::random_scorer(), instances, interacted, n_items,
                               {1000, {100}, 9, 1, 0});
  const double p = 100.0 / 1001.0;
  const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
  const double z = (random.hit_at(100) - p) / sigma;
  v.check(std::abs(z) <= 3, "random HIT@100 at " + fmt("%.2f sigma", z));
  v.note("fixture matches; random HIT@100 " + fmt("%.4f", random.hit_at(100)) + " vs " +
         fmt("%.4f", p) + " (" + fmt("%+.2f sigma", z) + ")");
}

void adversarial(Verdict& v) {
  // Norm after every max step of a real minimax run.
  {
    const auto toy = oracle::clustered_toy(50, 30, 3, 8, 5, 3, 4);
    auto config = oracle::small_config(ModelKind::kQualse);
    config.n_users = toy.n_users;
    config.n_items = toy.n_items;
    config.long_window = 5;
    Model model(config, 17);
    model.enable_noise();
    const auto noise = model.noise_tables();
    const std::set<std::string> noise_set(noise.begin(), noise.end());
    AdamState opt;
    std::mt19937_64 rng(17);
    NegativeSampler sampler(toy.train_items, toy.n_items);
    std::vector<std::uint32_t> order(toy.instances.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    double worst = 0;
    std::size_t steps = 0;
    for (int epoch = 0; epoch < 5; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t begin = 0; begin < order.size(); begin += 32, ++steps) {
        const std::size_t end = std::min(order.size(), begin + 32);
        const auto triplets = sample_triplets(toy.instances, order, begin, end, 4, sampler, rng);
        adversarial_step(model, toy.instances, triplets, 0.5, 0.0);
        worst = std::max(worst, std::abs(oracle::noise_norm(model) - 0.5));
        model.params().freeze(noise_set);
        model.params().zero_grad();
        Tape tape;
        tape.backward(qabpr_loss(tape, model, toy.instances, triplets, {}, 1.0));
        adam_step(opt, model.params());
        model.params().unfreeze(noise_set);
      }
    }
    v.check(worst <= 1e-9, "norm error " + fmt("%.2e", worst));
    v.note(std::to_string(steps) + " max steps, max | ||delta|| - eps | " + fmt("%.1e", worst));
  }

  // Zero noise: the minimax objective is (1 + lambda) times BPR.
  {
    Model model(oracle::small_config(ModelKind::kQualse), 12);
    std::mt19937_64 rng(12);
    oracle::randomize(model, rng);
    model.enable_noise();
    std::vector<ScoringInstance> instances;
    for (int i = 0; i < 4; ++i) instances.push_back(oracle::random_instance(rng, 4, 7, 4, 3, 6));
    const std::vector<Triplet> triplets{{0, 1}, {1, 3}, {2, 5}, {3, 7}, {1, 2}};
    const BprWeights w{0.01, 0.001};
    for (double lambda : {1.0, 0.5, 2.0, 0.25}) {
      Tape tape;
      const double bpr = bpr_loss(tape, model, instances, triplets, w).scalar();
      const double game = qabpr_loss(tape, model, instances, triplets, w, lambda).scalar();
      v.check(game == (1 + lambda) * bpr, "delta=0 identity at lambda " + fmt("%g", lambda));
    }
  }

  // FGM against random directions of the same norm.
  {
    const auto toy = oracle::clustered_toy(50, 30, 3, 8, 5, 3, 5);
    auto config = oracle::small_config(ModelKind::kQualse);
    config.n_users = toy.n_users;
    config.n_items = toy.n_items;
    config.long_window = 5;
    Model model(config, 18);
    const auto tally = oracle::fgm_versus_random(model, toy, 100, 16, 0.5, 18);
    v.check(tally.batches == 100, "batch count");
    v.check(tally.fgm_wins >= 90, "FGM wins " + std::to_string(tally.fgm_wins) + "/100");
    v.check(tally.max_norm_error <= 1e-9, "toy norm error");
    v.note("delta=0 identity exact; FGM >= random on " + std::to_string(tally.fgm_wins) +
           "/100 batches");
  }
}

void learning_behavior(Verdict& v) {
  const auto t0 = Clock::now();
  const auto data = prepare(generate_synthetic(SyntheticConfig{}), 5, 5);
  const auto& m = data.manifest;
  const auto train_items = user_items(data.split, {Split::kTrain});
  const auto interacted = user_items(data.split, {Split::kTrain, Split::kValidation, Split::kTest});
  const TrainingData training{data.instances.train, data.instances.validation, &train_items,
                              &interacted, m.n_items};
  EvalOptions test_options;
  test_options.cutoffs = {10};
  test_options.seed = 11;
  auto test_ndcg = [&](const Scorer& scorer) {
    return evaluate(scorer, data.instances.test, interacted, m.n_items, test_options).ndcg_at(10);
  };
  TrainConfig tc;
  tc.epochs = 30;
  tc.reg_weight = 0;
  tc.reg_embedding = 0;
  tc.validation.max_instances = 500;

  std::printf("  synthetic: %zu users, %zu items, l=%zu, %zu/%zu/%zu instances\n", m.n_users,
              m.n_items, m.l, data.instances.train.size(), data.instances.validation.size(),
              data.instances.test.size());
  const double popularity = test_ndcg(PopularityScorer(item_popularity(data.split)));
  std::printf("  popularity      NDCG@10 %.4f\n", popularity);
  std::fflush(stdout);

  std::map<ModelKind, double> bpr;
  std::unique_ptr<Model> qualse;
  const ModelKind kinds[] = {ModelKind::kQuale, ModelKind::kQuaseLstm, ModelKind::kQuaseGru,
                             ModelKind::kQualse};
  for (ModelKind kind : kinds) {
    const auto t = Clock::now();
    auto model = std::make_unique<Model>(ModelConfig{kind, m.n_users, m.n_items, 32, m.l, m.s}, 1);
    const auto result = train(*model, training, tc);
    bpr[kind] = test_ndcg(ModelScorer(*model));
    std::printf("  %-10s bpr   NDCG@10 %.4f (best epoch %zu, %.0f s)\n", to_string(kind).c_str(),
                bpr[kind], result.best_epoch, seconds_since(t));
    std::fflush(stdout);
    if (kind == ModelKind::kQualse) qualse = std::move(model);
  }
  const auto t = Clock::now();
  TrainConfig adv = tc;
  adv.loss = LossKind::kQabpr;
  const auto result = train(*qualse, training, adv);
  const double qabpr = test_ndcg(ModelScorer(*qualse));
  std::printf("  %-10s qabpr NDCG@10 %.4f (best epoch %zu, %.0f s)\n", "qualse", qabpr,
              result.best_epoch, seconds_since(t));

  for (const auto& [kind, ndcg] : bpr)
    v.check(ndcg >= 1.2 * popularity, "(a) " + to_string(kind) + " vs popularity");
  const double best_single = std::max(
      {bpr[ModelKind::kQuale], bpr[ModelKind::kQuaseLstm], bpr[ModelKind::kQuaseGru]});
  v.check(bpr[ModelKind::kQualse] >= best_single - 0.005, "(b) fused below single models");
  v.check(qabpr >= bpr[ModelKind::kQualse] - 0.005, "(c) qabpr below bpr");
  const double s = seconds_since(t0);
  v.note("min model/popularity " +
         fmt("%.2f", std::min({bpr[ModelKind::kQuale], bpr[ModelKind::kQuaseLstm],
                               bpr[ModelKind::kQuaseGru], bpr[ModelKind::kQualse]}) /
                         popularity) +
         "x; qualse - best single " + fmt("%+.4f", bpr[ModelKind::kQualse] - best_single) +
         "; qabpr - bpr " + fmt("%+.4f", qabpr - bpr[ModelKind::kQualse]) + "; " +
         fmt("%.0f s", s));
  v.check(s < 15 * 60, "runtime " + fmt("%.0f s", s));
}

void data_pipeline(Verdict& v) {
  std::mt19937_64 rng(50);
  std::uniform_int_distribution<std::size_t> size(5, 60), k(1, 5);
  std::uniform_real_distribution<double> density(0.03, 0.3);
  std::size_t nonempty = 0;
  for (int g = 0; g < 50; ++g) {
    const auto graph = oracle::random_graph(rng, size(rng), size(rng), density(rng));
    const std::size_t kk = k(rng);
    const auto expected = oracle::peel(graph, kk);
    const auto log = oracle::from_raw(graph);
    if (expected.empty()) {
      bool threw = false;
      try {
        k_core(log, kk);
      } catch (const DataError&) {
        threw = true;
      }
      v.check(threw, "graph " + std::to_string(g) + " should empty out");
      continue;
    }
    ++nonempty;
    const auto core = k_core(log, kk);
    v.check(oracle::raw_records(core) == expected, "graph " + std::to_string(g) + " records");
    std::vector<std::size_t> du(core.n_users() + 1), di(core.n_items() + 1);
    for (const auto& r : core.records) {
      ++du[r.user];
      ++di[r.item];
    }
    bool fixpoint = true;
    for (std::size_t u = 1; u < du.size(); ++u) fixpoint = fixpoint && du[u] >= kk;
    for (std::size_t i = 1; i < di.size(); ++i) fixpoint = fixpoint && di[i] >= kk;
    v.check(fixpoint, "graph " + std::to_string(g) + " fixpoint");
  }
  v.check(nonempty >= 25, "too few non-empty cores");

  const std::vector<std::size_t> lengths{1, 2, 3, 4, 100};
  v.check(compute_l(lengths) == 7, "boxplot l = " + std::to_string(compute_l(lengths)));

  std::vector<oracle::RawRecord> ten;
  for (int t = 0; t < 10; ++t) ten.emplace_back("u" + std::to_string(t % 3), "i" + std::to_string(t), t);
  const auto split = chrono_split(oracle::from_raw(ten));
  v.check(split.count(Split::kTrain) == 7 && split.count(Split::kValidation) == 1 &&
              split.count(Split::kTest) == 2,
          "split of 10");

  // Leakage: rebuild every window from the user's strictly earlier interactions.
  const auto data = prepare(generate_synthetic(SyntheticConfig{}), 5, 5);
  const auto& records = data.split.log.records;
  std::vector<std::vector<std::pair<std::uint64_t, std::uint32_t>>> timeline(
      data.split.log.n_users() + 1);
  for (std::size_t p = 0; p < records.size(); ++p)
    timeline[records[p].user].emplace_back(p, records[p].item);
  std::size_t checked = 0, leaks = 0, users_seen = 0;
  for (const auto& t : timeline) users_seen += !t.empty();
  for (Split sp : {Split::kTrain, Split::kValidation, Split::kTest}) {
    for (const auto& inst : data.instances.of(sp)) {
      ++checked;
      const auto& line = timeline[inst.user];
      auto it = std::find_if(line.begin(), line.end(),
                             [&](const auto& e) { return e.first == inst.position; });
      bool ok = it != line.end() && it != line.begin() && it->second == inst.target &&
                data.split.split_of(inst.position) == sp;
      if (ok) {
        const std::size_t before = static_cast<std::size_t>(it - line.begin());
        for (const auto* window : {&inst.long_items, &inst.short_items}) {
          const std::size_t w = window->size(), take = std::min(w, before);
          for (std::size_t e = 0; e < w; ++e) {
            const std::uint32_t want =
                e < w - take ? 0 : line[before - take + (e - (w - take))].second;
            ok = ok && (*window)[e] == want;
          }
        }
      }
      leaks += !ok;
    }
  }
  v.check(leaks == 0, std::to_string(leaks) + " instances with leaked or wrong history");
  v.check(checked == records.size() - users_seen, "instance count");
  UserItemSets expected_train(data.split.log.n_users() + 1);
  for (std::size_t p = 0; p < data.split.train_end; ++p)
    expected_train[records[p].user].push_back(records[p].item);
  std::size_t outside = 0;
  const auto train_items = user_items(data.split, {Split::kTrain});
  for (std::size_t u = 0; u < expected_train.size(); ++u) {
    auto& e = expected_train[u];
    std::sort(e.begin(), e.end());
    e.erase(std::unique(e.begin(), e.end()), e.end());
    outside += u < train_items.size() ? train_items[u] != e : !e.empty();
  }
  v.check(outside == 0, "training item sets differ from the train split");
  v.note(std::to_string(nonempty) + "/50 non-empty cores match peeling; l=7; split 7/1/2; " +
         std::to_string(checked) + " synthetic instances without leakage");
}

struct Criterion {
  int id;
  const char* name;
  std::function<void(Verdict&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const Criterion criteria[] = {
      {1, "algebra", algebra},
      {2, "gradients", gradients},
      {3, "parameter count", parameter_count},
      {4, "oracle equivalence", oracle_equivalence},
      {5, "metric oracle", metric_oracle},
      {6, "adversarial", adversarial},
      {7, "learning behavior", learning_behavior},
      {8, "data pipeline", data_pipeline},
  };
  std::vector<int> selected;
  for (int a = 1; a < argc; ++a) selected.push_back(std::atoi(argv[a]));
  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end())
      continue;
    Verdict v;
    const auto t0 = Clock::now();
    try {
      c.run(v);
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    std::printf("criterion %d (%s): %s [%.1f s] %s\n", c.id, c.name, v.passed() ? "PASS" : "FAIL",
                seconds_since(t0), v.summary().c_str());
    std::fflush(stdout);
    failed += !v.passed();
  }
  return failed == 0 ? 0 : 1;
}
