#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pae/errors.hpp"
#include "pae/tensor.hpp"

namespace pae {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  bool pass = true;
};

// Builds the scalar computation under test. Receives a fresh Graph and the
// leaf ids of the parameters (same order as the param list) and returns the
// loss node id. Must be deterministic (dropout in eval mode).
using ScalarBuilder =
    std::function<Graph::NodeId(Graph&, const std::vector<Graph::NodeId>&)>;

// Central-finite-difference check of reverse-mode gradients.
// rel err = |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
inline GradCheckReport grad_check(const ScalarBuilder& f, std::vector<Tensor>& params,
                                  const std::vector<std::string>& names, double h,
                                  double tol) {
  auto eval = [&]() {
    Graph g;
    std::vector<Graph::NodeId> leaves;
    leaves.reserve(params.size());
    for (auto& p : params) leaves.push_back(g.leaf_detached(p));
    Graph::NodeId loss = f(g, leaves);
    if (g.value(loss).size() != 1) throw ContractError("grad_check: f is not scalar-valued");
    return g.val(loss)[0];
  };

  if (eval() != eval())
    throw ContractError("grad_check: f is not deterministic (two forward passes disagree)");

  // analytic gradients
  std::vector<std::vector<double>> analytic(params.size());
  {
    Graph g;
    std::vector<Graph::NodeId> leaves;
    for (auto& p : params) leaves.push_back(g.leaf_detached(p));
    Graph::NodeId loss = f(g, leaves);
    g.backward(loss);
    for (std::size_t k = 0; k < params.size(); ++k)
      analytic[k] = params[k].requires_grad ? g.grad(leaves[k])
                                           : std::vector<double>(params[k].size(), 0.0);
  }

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    GradCheckEntry e;
    e.name = k < names.size() ? names[k] : ("param" + std::to_string(k));
    if (params[k].requires_grad) {
      auto& buf = *params[k].data;
      for (std::size_t i = 0; i < buf.size(); ++i) {
        double orig = buf[i];
        buf[i] = orig + h;
        double fp = eval();
        buf[i] = orig - h;
        double fm = eval();
        buf[i] = orig;
        double numeric = (fp - fm) / (2.0 * h);
        double a = analytic[k][i];
        double rel = std::fabs(a - numeric) / (std::fabs(a) + std::fabs(numeric) + 1e-12);
        e.max_rel_err = std::max(e.max_rel_err, rel);
      }
    }
    e.pass = e.max_rel_err < tol;
    report.worst = std::max(report.worst, e.max_rel_err);
    report.pass = report.pass && e.pass;
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace pae
