#pragma once

// Hierarchical price negotiation. The market operator and every congestion
// agent run the same loop: send prices to the children, sum the returned
// programs, measure the local constraint error and move the price of each
// violated slot along a secant through its last two (price, error) points.
// Congestion agents start from their parent's prices and only touch slots
// where their limit is violated, so unaffected slots keep the parent price.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "lprh/agents.hpp"
#include "lprh/core.hpp"

namespace lprh {

struct NegotiationSettings {
  double epsilon_max = 1e-3;  // watts
  int max_iters = 1000;       // per node per negotiation
  double probe_step = 0.1;
};

struct NegotiationOutcome {
  PowerProfile program;
  PriceProfile local_prices;
  bool converged = false;
  int iterations = 0;
  PowerProfile residual_error;
};

// Market operator constraint: deviation from the target, either sign.
inline PowerProfile mo_error(const PowerProfile& aggregate, const PowerProfile& theta) {
  require_same_length(aggregate.size(), theta.size(), "mo_error");
  PowerProfile e(aggregate.size());
  for (std::size_t t = 0; t < e.size(); ++t) e[t] = aggregate[t] - theta[t];
  return e;
}

// Congestion constraint: excess beyond +-beta, signed like the flow.
inline PowerProfile co_error(const PowerProfile& aggregate, double beta) {
  if (!(beta > 0.0)) throw DomainError("congestion limit must be positive");
  PowerProfile e(aggregate.size());
  for (std::size_t t = 0; t < e.size(); ++t) {
    const double x = aggregate[t];
    if (x > beta)
      e[t] = x - beta;
    else if (x < -beta)
      e[t] = x + beta;
  }
  return e;
}

// Evaluated (price, error) points per slot, most recent last.
class PriceSearchState {
 public:
  struct Point {
    double price;
    double error;
  };

  explicit PriceSearchState(std::size_t slots) : history_(slots) {}

  std::size_t slots() const noexcept { return history_.size(); }

  void record(const PriceProfile& prices, const PowerProfile& errors) {
    require_same_length(prices.size(), history_.size(), "PriceSearchState::record");
    require_same_length(errors.size(), history_.size(), "PriceSearchState::record");
    for (std::size_t t = 0; t < history_.size(); ++t) history_[t].push_back({prices[t], errors[t]});
  }

  const std::vector<Point>& history(std::size_t slot) const { return history_.at(slot); }
  int iterations(std::size_t slot) const { return static_cast<int>(history_.at(slot).size()); }

 private:
  std::vector<std::vector<Point>> history_;
};

// Next price per slot. Slots within tolerance keep their price. A slot whose
// history holds recent points on both sides of zero, in the order a
// nonincreasing response implies, takes a false-position step between them;
// the endpoint that keeps being retained has its error halved each round so
// the step cannot stall on one side. Otherwise the price moves to the zero of
// the line through the latest point and the most recent earlier point at a
// different price; without such a point, or when the line does not fall with
// price, it takes a probe step against the error.
inline PriceProfile adjust_prices(const PriceSearchState& state, const PowerProfile& errors,
                                  const NegotiationSettings& settings) {
  using Point = PriceSearchState::Point;
  require_same_length(errors.size(), state.slots(), "adjust_prices");
  const double eps = settings.epsilon_max;
  PriceProfile next(state.slots());
  for (std::size_t t = 0; t < state.slots(); ++t) {
    const auto& h = state.history(t);
    if (h.empty()) throw StructuralError("adjust_prices: slot has no evaluated point");
    const Point last{h.back().price, errors[t]};
    if (std::abs(last.error) <= eps) {
      next[t] = last.price;
      continue;
    }

    // above: consumption too high, root at a higher price; below: the reverse
    const Point* above = nullptr;
    const Point* below = nullptr;
    for (auto it = h.rbegin() + 1; it != h.rend(); ++it) {
      if (!above && it->error > eps) above = &*it;
      if (!below && it->error < -eps) below = &*it;
    }
    Point a = last.error > 0.0 ? last : (above ? *above : Point{});
    Point b = last.error < 0.0 ? last : (below ? *below : Point{});
    const bool bracketed = (last.error > 0.0 ? below : above) != nullptr && a.price < b.price;

    double p;
    if (bracketed) {
      std::size_t same_side = 1;
      for (auto it = h.rbegin() + 1; it != h.rend() && (it->error > 0.0) == (last.error > 0.0) &&
                                     std::abs(it->error) > eps;
           ++it)
        ++same_side;
      const double damp = std::ldexp(1.0, -static_cast<int>(std::min<std::size_t>(same_side - 1, 60)));
      if (last.error > 0.0) b.error *= damp;
      else a.error *= damp;
      p = a.price - a.error * (b.price - a.price) / (b.error - a.error);
    } else {
      const Point* prev = nullptr;
      for (auto it = h.rbegin() + 1; it != h.rend(); ++it)
        if (it->price != last.price) {
          prev = &*it;
          break;
        }
      // Every slot's own response is nonincreasing in its price; a flat or
      // rising line only comes from coupling with other slots.
      if (prev && (last.error - prev->error) / (last.price - prev->price) < 0.0)
        p = last.price - last.error * (last.price - prev->price) / (last.error - prev->error);
      else
        p = last.price + settings.probe_step * (last.error > 0.0 ? 1.0 : -1.0);
    }
    next[t] = std::clamp(p, 0.0, 1.0);
  }
  return next;
}

// Final state of one node in the last negotiation round that reached it.
struct NodeTrace {
  PowerProfile program;
  PowerProfile loss;  // devices only
  PriceProfile local_prices;
  bool converged = true;
  int iterations = 0;
  std::vector<bool> ever_violated;  // congestion nodes only
  bool constraint_ok = true;        // devices only
};

struct NegotiationTrace {
  std::vector<NodeTrace> nodes;
};

class Negotiator {
 public:
  Negotiator(const GridTree& tree, PowerProfile theta, TimeGrid grid, NegotiationSettings settings)
      : tree_(tree), theta_(std::move(theta)), grid_(grid), settings_(settings) {
    require_same_length(theta_.size(), grid_.slots, "Negotiator target");
  }

  // Runs the whole hierarchy from the market operator with initial prices of
  // 0.5 in every slot.
  NegotiationOutcome negotiate(NegotiationTrace* trace = nullptr) const {
    return create_power_program(tree_.root(), PriceProfile(grid_.slots, 0.5), trace);
  }

  NegotiationOutcome create_power_program(std::size_t node, const PriceProfile& prices,
                                          NegotiationTrace* trace = nullptr) const {
    require_same_length(prices.size(), grid_.slots, "create_power_program");
    if (trace && trace->nodes.size() != tree_.size()) trace->nodes.assign(tree_.size(), {});
    const Node& n = tree_.node(node);
    if (const auto* d = std::get_if<Device>(&n.kind)) {
      DeviceResponse r = device_response(d->spec, prices, grid_);
      if (trace) {
        auto& nt = trace->nodes[node];
        nt.program = r.program;
        nt.loss = r.loss;
        nt.local_prices = prices;
        nt.converged = true;
        nt.iterations = 1;
        nt.constraint_ok = r.constraint_ok;
      }
      return {std::move(r.program), prices, true, 1, PowerProfile(grid_.slots)};
    }
    return negotiate_internal(node, prices, trace);
  }

  const GridTree& tree() const noexcept { return tree_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  const PowerProfile& theta() const noexcept { return theta_; }
  const NegotiationSettings& settings() const noexcept { return settings_; }

 private:
  PowerProfile constraint_error(const Node& n, const PowerProfile& aggregate) const {
    if (const auto* c = std::get_if<Congestion>(&n.kind)) return co_error(aggregate, c->beta);
    return mo_error(aggregate, theta_);
  }

  NegotiationOutcome negotiate_internal(std::size_t node, const PriceProfile& prices,
                                        NegotiationTrace* trace) const {
    const Node& n = tree_.node(node);
    const std::size_t slots = grid_.slots;
    PriceSearchState state(slots);
    std::vector<bool> ever_violated(slots, false);
    std::vector<int> side(slots, 0);  // congestion: +1 consumption, -1 production overload
    PriceProfile local = prices;
    NegotiationOutcome out;

    for (int iter = 1;; ++iter) {
      PowerProfile aggregate(slots);
      for (std::size_t child : n.children) {
        NegotiationOutcome c = create_power_program(child, local, trace);
        for (std::size_t t = 0; t < slots; ++t) aggregate[t] += c.program[t];
      }
      PowerProfile err = constraint_error(n, aggregate);
      for (std::size_t t = 0; t < slots; ++t)
        if (std::abs(err[t]) > settings_.epsilon_max) {
          ever_violated[t] = true;
          if (n.is_congestion()) side[t] = err[t] > 0.0 ? 1 : -1;
        }
      if (const auto* c = std::get_if<Congestion>(&n.kind)) {
        // A slot that was pushed back inside its limit keeps tracking the
        // limit until it sits on it or its price is back at the parent's;
        // otherwise an overshooting step would end deep inside the limit.
        for (std::size_t t = 0; t < slots; ++t)
          if (side[t] != 0 && std::abs(err[t]) <= settings_.epsilon_max && local[t] != prices[t])
            err[t] = aggregate[t] - side[t] * c->beta;
      }
      state.record(local, err);

      out.program = std::move(aggregate);
      out.local_prices = local;
      out.iterations = iter;
      out.converged = max_abs(err.view()) <= settings_.epsilon_max;
      out.residual_error = err;
      if (out.converged || iter >= settings_.max_iters) break;

      PriceProfile next = adjust_prices(state, err, settings_);
      for (std::size_t t = 0; t < slots; ++t) {
        if (side[t] > 0) next[t] = std::max(next[t], prices[t]);
        if (side[t] < 0) next[t] = std::min(next[t], prices[t]);
      }
      // Children are pure functions of the prices, so an unchanged price
      // vector would reproduce this round forever.
      if (next == local) break;
      local = std::move(next);
    }

    if (trace) {
      auto& nt = trace->nodes[node];
      nt.program = out.program;
      nt.local_prices = out.local_prices;
      nt.converged = out.converged;
      nt.iterations = out.iterations;
      nt.ever_violated = std::move(ever_violated);
    }
    return out;
  }

  const GridTree& tree_;
  PowerProfile theta_;
  TimeGrid grid_;
  NegotiationSettings settings_;
};

}  // namespace lprh
