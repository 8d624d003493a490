#pragma once

// Domain types shared by every part of the dispatch suite: the time grid,
// power and price profiles, device descriptions and the agent tree.
//
// Powers are watts from the grid's point of view: positive values flow from
// the grid into a device (consumption), negative values flow back into the
// grid (production). Energies are watt-hours.

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

namespace lprh {

// ---------------------------------------------------------------------------
// Errors

struct StructuralError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Time grid

struct TimeGrid {
  std::size_t slots = 24;  // T
  double tau = 1.0;        // slot duration in hours

  TimeGrid() = default;
  TimeGrid(std::size_t slots_, double tau_) : slots(slots_), tau(tau_) {
    if (slots == 0) throw StructuralError("time grid needs at least one slot");
    if (!(tau > 0.0) || !std::isfinite(tau))
      throw StructuralError("time grid slot duration must be positive");
  }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

// ---------------------------------------------------------------------------
// Profiles

// A fixed-length sequence of per-slot values. The tag keeps watts and prices
// from being mixed up at compile time.
template <class Tag>
class BasicProfile {
 public:
  BasicProfile() = default;
  explicit BasicProfile(std::size_t n, double fill = 0.0) : values_(n, fill) {}
  explicit BasicProfile(std::vector<double> values) : values_(std::move(values)) {}
  BasicProfile(std::initializer_list<double> values) : values_(values) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  std::span<const double> view() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }

  friend bool operator==(const BasicProfile&, const BasicProfile&) = default;

 private:
  std::vector<double> values_;
};

struct PowerTag {};
struct PriceTag {};

using PowerProfile = BasicProfile<PowerTag>;
using PriceProfile = BasicProfile<PriceTag>;

inline void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw StructuralError(std::string(what) + ": length mismatch (" + std::to_string(a) +
                          " vs " + std::to_string(b) + ")");
}

// Element-wise sum of profiles, accumulated in the order given. An empty list
// yields an empty profile unless a slot count is supplied.
inline PowerProfile sum_profiles(std::span<const PowerProfile> profiles,
                                 std::optional<std::size_t> slots = std::nullopt) {
  std::size_t n = slots ? *slots : (profiles.empty() ? 0 : profiles.front().size());
  PowerProfile out(n);
  for (const auto& p : profiles) {
    require_same_length(p.size(), n, "sum_profiles");
    for (std::size_t t = 0; t < n; ++t) out[t] += p[t];
  }
  return out;
}

inline PowerProfile sum_profiles(std::initializer_list<PowerProfile> profiles,
                                 std::optional<std::size_t> slots = std::nullopt) {
  return sum_profiles(std::span<const PowerProfile>(profiles.begin(), profiles.size()), slots);
}

inline double max_abs(std::span<const double> xs) {
  double m = 0.0;
  for (double x : xs) m = std::max(m, std::abs(x));
  return m;
}

// ---------------------------------------------------------------------------
// Devices

struct Load {
  PowerProfile actual;
  PowerProfile historical_avg;
};

struct Pv {
  PowerProfile actual;  // expected production, every value <= 0
  PowerProfile historical_avg;
  double gamma = 0.2;  // operation cost per horizon
};

// Battery or heat buffer. A heat pump is a storage with x_min = 0, eta = 1
// and positive leakage.
struct Storage {
  double x_min = 0.0;  // max discharge rate, watts <= 0
  double x_max = 0.0;  // max charge rate, watts >= 0
  double e_min = 0.0;
  double e_max = 0.0;
  double eta = 1.0;
  double lambda = 0.0;  // leakage, watts
  double e0 = 0.0;
  double ramp_width = 0.075;
};

using DeviceSpec = std::variant<Load, Pv, Storage>;

inline void validate(const Storage& s) {
  if (!(s.x_min <= 0.0 && s.x_max >= 0.0))
    throw DomainError("storage power bounds must satisfy x_min <= 0 <= x_max");
  if (!(s.eta > 0.0 && s.eta <= 1.0)) throw DomainError("storage efficiency must be in (0, 1]");
  if (!(s.lambda >= 0.0)) throw DomainError("storage leakage must be nonnegative");
  if (!(s.e_min <= s.e0 && s.e0 <= s.e_max))
    throw DomainError("storage initial energy must lie in [e_min, e_max]");
  if (!(s.ramp_width > 0.0)) throw DomainError("storage ramp width must be positive");
}

inline void validate(const Pv& pv) {
  for (std::size_t t = 0; t < pv.actual.size(); ++t)
    if (pv.actual[t] > 0.0)
      throw DomainError("pv production profile must be nonpositive (slot " + std::to_string(t) +
                        ")");
  for (std::size_t t = 0; t < pv.historical_avg.size(); ++t)
    if (pv.historical_avg[t] > 0.0)
      throw DomainError("pv historical average must be nonpositive (slot " + std::to_string(t) +
                        ")");
  require_same_length(pv.actual.size(), pv.historical_avg.size(), "pv profiles");
  if (!(pv.gamma >= 0.0)) throw DomainError("pv operation cost must be nonnegative");
}

inline void validate(const Load& l) {
  require_same_length(l.actual.size(), l.historical_avg.size(), "load profiles");
}

inline void validate(const DeviceSpec& spec) {
  std::visit([](const auto& d) { validate(d); }, spec);
}

// ---------------------------------------------------------------------------
// Agent tree

using NodeId = std::string;

struct MarketOperator {};
struct Congestion {
  double beta = 0.0;  // power limit, watts
};
struct Device {
  DeviceSpec spec;
};

using NodeKind = std::variant<MarketOperator, Congestion, Device>;

struct Node {
  NodeId id;
  NodeKind kind;
  std::optional<std::size_t> parent;
  std::vector<std::size_t> children;  // file order

  bool is_device() const { return std::holds_alternative<Device>(kind); }
  bool is_congestion() const { return std::holds_alternative<Congestion>(kind); }
  bool is_market_operator() const { return std::holds_alternative<MarketOperator>(kind); }
};

// Immutable rooted tree of agents. Nodes are addressed by dense indices in
// insertion order; children keep the order in which they were declared.
class GridTree {
 public:
  class Builder;

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t root() const noexcept { return root_; }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }

  std::optional<std::size_t> find(const NodeId& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index_of(const NodeId& id) const {
    auto i = find(id);
    if (!i) throw StructuralError("unknown node '" + id + "'");
    return *i;
  }

  // Indices of all device leaves, in node order.
  std::vector<std::size_t> devices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].is_device()) out.push_back(i);
    return out;
  }

  const DeviceSpec& device(std::size_t i) const { return std::get<Device>(nodes_.at(i).kind).spec; }

  // Same structure with every device spec replaced by f(index, spec).
  template <class F>
  GridTree map_devices(F&& f) const {
    GridTree out = *this;
    for (std::size_t i = 0; i < out.nodes_.size(); ++i)
      if (auto* d = std::get_if<Device>(&out.nodes_[i].kind)) d->spec = f(i, std::as_const(d->spec));
    return out;
  }

  // Same structure with every congestion limit multiplied by factor.
  GridTree scale_limits(double factor) const {
    GridTree out = *this;
    for (auto& n : out.nodes_)
      if (auto* c = std::get_if<Congestion>(&n.kind)) c->beta *= factor;
    return out;
  }

  // Sets a single congestion limit.
  GridTree with_limit(std::size_t i, double beta) const {
    GridTree out = *this;
    std::get<Congestion>(out.nodes_.at(i).kind).beta = beta;
    return out;
  }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<NodeId, std::size_t> index_;
  std::size_t root_ = 0;
};

class GridTree::Builder {
 public:
  Builder& market_operator(NodeId id) { return add(std::move(id), MarketOperator{}, std::nullopt); }
  Builder& congestion(NodeId id, NodeId parent, double beta) {
    return add(std::move(id), Congestion{beta}, std::move(parent));
  }
  Builder& device(NodeId id, NodeId parent, DeviceSpec spec) {
    return add(std::move(id), Device{std::move(spec)}, std::move(parent));
  }
  Builder& add(NodeId id, NodeKind kind, std::optional<NodeId> parent) {
    pending_.push_back({std::move(id), std::move(kind), std::move(parent)});
    return *this;
  }

  // Resolves parent links and checks the tree invariants.
  GridTree build() const {
    GridTree tree;
    std::optional<std::size_t> root;
    for (const auto& p : pending_) {
      if (p.id.empty()) throw StructuralError("node id must not be empty");
      if (!tree.index_.emplace(p.id, tree.nodes_.size()).second)
        throw StructuralError("duplicate node id '" + p.id + "'");
      tree.nodes_.push_back(Node{p.id, p.kind, std::nullopt, {}});
      const Node& n = tree.nodes_.back();
      if (n.is_market_operator()) {
        if (root) throw StructuralError("more than one market operator");
        if (p.parent) throw StructuralError("market operator '" + p.id + "' must be the root");
        root = tree.nodes_.size() - 1;
      } else if (!p.parent) {
        throw StructuralError("node '" + p.id + "' has no parent");
      }
      if (const auto* c = std::get_if<Congestion>(&n.kind); c && !(c->beta > 0.0))
        throw StructuralError("congestion node '" + p.id + "' needs a positive limit");
      if (const auto* d = std::get_if<Device>(&n.kind)) validate(d->spec);
    }
    if (!root) throw StructuralError("tree has no market operator");
    tree.root_ = *root;

    for (std::size_t i = 0; i < pending_.size(); ++i) {
      const auto& parent = pending_[i].parent;
      if (!parent) continue;
      auto it = tree.index_.find(*parent);
      if (it == tree.index_.end())
        throw StructuralError("node '" + pending_[i].id + "' references unknown parent '" + *parent +
                              "'");
      if (tree.nodes_[it->second].is_device())
        throw StructuralError("device '" + *parent + "' cannot have children");
      tree.nodes_[i].parent = it->second;
      tree.nodes_[it->second].children.push_back(i);
    }

    // every node must reach the root without revisiting a node
    for (std::size_t i = 0; i < tree.nodes_.size(); ++i) {
      std::size_t cur = i, hops = 0;
      while (tree.nodes_[cur].parent) {
        cur = *tree.nodes_[cur].parent;
        if (++hops > tree.nodes_.size())
          throw StructuralError("cycle through node '" + tree.nodes_[i].id + "'");
      }
      if (cur != tree.root_)
        throw StructuralError("node '" + tree.nodes_[i].id + "' is not connected to the root");
    }
    for (const auto& n : tree.nodes_)
      if (!n.is_device() && n.children.empty())
        throw StructuralError("internal node '" + n.id + "' has no children");
    return tree;
  }

 private:
  struct Pending {
    NodeId id;
    NodeKind kind;
    std::optional<NodeId> parent;
  };
  std::vector<Pending> pending_;
};

// ---------------------------------------------------------------------------
// Simulation output

struct Violation {
  NodeId node;
  std::size_t ptu = 0;
  double magnitude = 0.0;

  friend bool operator==(const Violation&, const Violation&) = default;
};

struct DispatchResult {
  std::map<NodeId, std::vector<double>> contracted;  // per simulated PTU
  std::map<NodeId, std::vector<double>> prices;      // local price at the contracted slot
  std::map<NodeId, std::vector<double>> energies;    // storage energy entering each PTU, plus final
  std::vector<double> losses;                        // per PTU, watts
  double total_loss_energy = 0.0;                    // Wh
  bool feasible = true;
  std::vector<Violation> violations;
  std::vector<int> iterations_per_step;
  std::vector<bool> converged_per_step;
  std::vector<PriceProfile> final_prices;  // root price window per step
};

}  // namespace lprh
