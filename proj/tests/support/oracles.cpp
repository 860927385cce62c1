#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracle {

namespace {

void enumerate(const telroute::Topology& t, std::span<const double> w, NodeId at, NodeId dst, double cost,
               NodeId first, std::vector<char>& on_path, Route& best) {
  if (at == dst) {
    if (cost < best.cost || (cost == best.cost && first < best.first_hop)) best = {cost, first};
    return;
  }
  for (telroute::EdgeId e : t.out_edges(at)) {
    const NodeId v = t.edge(e).dst;
    if (on_path[static_cast<std::size_t>(v)]) continue;
    on_path[static_cast<std::size_t>(v)] = 1;
    enumerate(t, w, v, dst, cost + w[static_cast<std::size_t>(e)], first < 0 ? v : first, on_path, best);
    on_path[static_cast<std::size_t>(v)] = 0;
  }
}

}  // namespace

Route best_route(const telroute::Topology& topology, std::span<const double> weights, NodeId src, NodeId dst) {
  Route best{std::numeric_limits<double>::infinity(), std::numeric_limits<NodeId>::max()};
  std::vector<char> on_path(static_cast<std::size_t>(topology.num_nodes()), 0);
  on_path[static_cast<std::size_t>(src)] = 1;
  enumerate(topology, weights, src, dst, 0.0, -1, on_path, best);
  return best;
}

telroute::Topology random_topology(telroute::Rng& rng, int n, int extra) {
  std::vector<telroute::Link> links;
  auto has = [&](int a, int b) {
    return std::any_of(links.begin(), links.end(), [&](const telroute::Link& l) {
      return (l.u == a && l.v == b) || (l.u == b && l.v == a);
    });
  };
  for (int v = 1; v < n; ++v) {
    const int u = static_cast<int>(rng.below(static_cast<std::uint64_t>(v)));
    links.push_back({u, v, 10.0 * static_cast<double>(1 + rng.below(10)), 1.0 + static_cast<double>(rng.below(9))});
  }
  for (int k = 0; k < extra; ++k) {
    const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    const int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    if (a == b || has(a, b)) continue;
    links.push_back({a, b, 10.0 * static_cast<double>(1 + rng.below(10)), 1.0 + static_cast<double>(rng.below(9))});
  }
  return telroute::Topology(n, links);
}

std::vector<double> gae_double_sum(const std::vector<double>& rewards, const std::vector<double>& values,
                                   double last_value, double gamma, double lambda) {
  const std::size_t T = rewards.size();
  std::vector<double> delta(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double next = t + 1 < T ? values[t + 1] : last_value;
    delta[t] = rewards[t] + gamma * next - values[t];
  }
  std::vector<double> adv(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t l = 0; t + l < T; ++l) adv[t] += std::pow(gamma * lambda, static_cast<double>(l)) * delta[t + l];
  }
  return adv;
}

telroute::nn::Matrix numeric_gradient(const std::function<double()>& f, telroute::nn::Matrix& x, double h) {
  telroute::nn::Matrix g(x.rows, x.cols, 0.0);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double saved = x.data[i];
    x.data[i] = saved + h;
    const double up = f();
    x.data[i] = saved - h;
    const double down = f();
    x.data[i] = saved;
    g.data[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double max_rel_error(const telroute::nn::Matrix& a, const telroute::nn::Matrix& b, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double scale = std::max({floor, std::abs(a.data[i]), std::abs(b.data[i])});
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]) / scale);
  }
  return worst;
}

double input_gradient_error(const Builder& f, std::vector<telroute::nn::Matrix> inputs, double floor) {
  using namespace telroute::nn;
  Tape tape;
  std::vector<Var> vars;
  for (const Matrix& m : inputs) vars.push_back(tape.input(m));
  const Var root = f(tape, vars);
  tape.backward(root);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Matrix analytic = vars[i].grad();
    const Matrix numeric = numeric_gradient(
        [&] {
          Tape t(false);
          std::vector<Var> v;
          for (const Matrix& m : inputs) v.push_back(t.input(m));
          return f(t, v).item();
        },
        inputs[i]);
    worst = std::max(worst, max_rel_error(analytic, numeric, floor));
  }
  return worst;
}

double parameter_gradient_error(const std::function<telroute::nn::Var(telroute::nn::Tape&)>& f,
                                telroute::nn::ParameterSet& params, telroute::Rng& rng, int samples,
                                double floor) {
  using namespace telroute::nn;
  params.zero_grad();
  {
    Tape tape;
    tape.backward(f(tape));
  }
  auto eval = [&] {
    Tape t(false);
    return f(t).item();
  };
  double worst = 0.0;
  constexpr double h = 1e-6;
  for (Parameter& p : params.all()) {
    for (int s = 0; s < samples; ++s) {
      const std::size_t i = rng.below(p.value.data.size());
      const double saved = p.value.data[i];
      p.value.data[i] = saved + h;
      const double up = eval();
      p.value.data[i] = saved - h;
      const double down = eval();
      p.value.data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.grad.data[i];
      const double scale = std::max({floor, std::abs(numeric), std::abs(analytic)});
      worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
  }
  return worst;
}

std::vector<double> decayed_credit(const std::vector<NodeId>& path, double mb, bool delivered, int num_nodes,
                                   double decay, int hops) {
  std::vector<double> credit(static_cast<std::size_t>(num_nodes), 0.0);
  const double sign = delivered ? 1.0 : -1.0;
  for (int k = 0; k < hops && k < static_cast<int>(path.size()); ++k) {
    credit[static_cast<std::size_t>(path[path.size() - 1 - static_cast<std::size_t>(k)])] +=
        sign * mb * std::pow(decay, k);
  }
  return credit;
}

}  // namespace oracle
