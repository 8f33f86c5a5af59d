// Small random inputs shared by the model tests and the acceptance suite.
#ifndef QUATREC_TESTS_FIXTURES_HPP_
#define QUATREC_TESTS_FIXTURES_HPP_

#include <algorithm>
#include <random>
#include <vector>

#include "quatrec/instance.hpp"
#include "oracle/oracle.hpp"
#include "quatrec/models.hpp"

namespace oracle {

/// A user with `history` prior items (drawn from [1, n_items]), windowed to
/// l and s with front padding the way the data pipeline builds instances.
inline quatrec::ScoringInstance random_instance(std::mt19937_64& rng, std::size_t n_users,
                                                std::size_t n_items, std::size_t l, std::size_t s,
                                                std::size_t history) {
  std::uniform_int_distribution<std::uint32_t> item(1, static_cast<std::uint32_t>(n_items));
  std::uniform_int_distribution<std::uint32_t> user(1, static_cast<std::uint32_t>(n_users));
  std::vector<std::uint32_t> seq(history);
  for (auto& x : seq) x = item(rng);
  quatrec::ScoringInstance inst;
  inst.user = user(rng);
  inst.target = item(rng);
  auto window = [&](std::size_t w) {
    std::vector<std::uint32_t> out(w, 0);
    const std::size_t n = std::min(w, seq.size());
    std::copy(seq.end() - static_cast<std::ptrdiff_t>(n), seq.end(),
              out.end() - static_cast<std::ptrdiff_t>(n));
    return out;
  };
  inst.long_items = window(l);
  inst.short_items = window(s);
  return inst;
}

inline quatrec::ModelConfig small_config(quatrec::ModelKind kind, std::size_t dim = 8,
                                         std::size_t l = 4, std::size_t s = 3) {
  quatrec::ModelConfig c;
  c.kind = kind;
  c.n_users = 4;
  c.n_items = 7;
  c.dim = dim;
  c.long_window = l;
  c.short_window = s;
  return c;
}

/// Overwrites every parameter (biases included) with U(-scale, scale),
/// keeping padding rows at zero.
inline void randomize(quatrec::Model& model, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  auto& ps = model.params();
  for (std::size_t i = 0; i < ps.count(); ++i) {
    for (double& v : ps.at(i).value) v = u(rng);
    ps.at(i).clear_padding_row();
  }
}

/// Reference score from the straight-line evaluation for any model kind.
inline double reference_score(const quatrec::Model& model, const quatrec::ScoringInstance& inst,
                              std::uint32_t item) {
  switch (model.kind()) {
    case quatrec::ModelKind::kQuale: return quale(model.params(), inst, item);
    case quatrec::ModelKind::kQuaseLstm: return quase(model.params(), inst, item, false);
    case quatrec::ModelKind::kQuaseGru: return quase(model.params(), inst, item, true);
    case quatrec::ModelKind::kQualse: return qualse(model.params(), inst, item);
  }
  return 0;
}

}  // namespace oracle

#endif  // QUATREC_TESTS_FIXTURES_HPP_
