#pragma once

// Shared oracles for the test suites: central finite differences against
// analytic gradients, random array generation, approximate comparisons.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "core/autodiff.hpp"
#include "core/common.hpp"

namespace rbtest {

using reachbench::Array;
using reachbench::NodeId;
using reachbench::Rng;
using reachbench::Tape;

inline Array random_array(Rng& rng, std::vector<int64_t> shape, double lo = -1.0,
                          double hi = 1.0) {
  Array a = Array::zeros(std::move(shape));
  for (double& v : a.data) v = rng.uniform(lo, hi);
  return a;
}

// Builds a scalar-rooted graph from input nodes. Called repeatedly by the
// finite-difference checker, so it must be a pure function of the inputs.
using GraphFn = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

inline double eval_graph(const GraphFn& fn, const std::vector<Array>& inputs) {
  Tape t;
  std::vector<NodeId> ids;
  ids.reserve(inputs.size());
  for (const auto& a : inputs) ids.push_back(t.constant(a));
  return t.value(fn(t, ids)).data[0];
}

struct FdResult {
  double max_abs_err = 0.0;   // worst |analytic - fd| after tolerance scaling
  double worst_analytic = 0.0;
  double worst_fd = 0.0;
  bool ok = true;
};

// Central differences over every coordinate of every input. Passes when
// |analytic - fd| <= max(rel_tol * max(|analytic|, |fd|), abs_floor)
// at every coordinate.
inline FdResult fd_check(const GraphFn& fn, const std::vector<Array>& inputs,
                         double h = 1e-5, double rel_tol = 1e-4,
                         double abs_floor = 1e-8) {
  // Analytic gradients in one pass.
  Tape t;
  std::vector<NodeId> ids;
  for (const auto& a : inputs) ids.push_back(t.constant(a));
  NodeId root = fn(t, ids);
  t.backward(root);
  std::vector<Array> analytic;
  for (NodeId id : ids) analytic.push_back(t.grad(id));

  FdResult res;
  std::vector<Array> probe = inputs;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (size_t j = 0; j < inputs[i].data.size(); ++j) {
      const double orig = probe[i].data[j];
      probe[i].data[j] = orig + h;
      const double fp = eval_graph(fn, probe);
      probe[i].data[j] = orig - h;
      const double fm = eval_graph(fn, probe);
      probe[i].data[j] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic[i].data[j];
      const double err = std::fabs(an - fd);
      const double tol = std::max(rel_tol * std::max(std::fabs(an), std::fabs(fd)),
                                  abs_floor);
      if (err > res.max_abs_err) {
        res.max_abs_err = err;
        res.worst_analytic = an;
        res.worst_fd = fd;
      }
      if (err > tol) res.ok = false;
    }
  }
  return res;
}

// Reduces an op output to a scalar with random constant weights so output
// gradients are nontrivial: root = sum(out * w).
inline NodeId scalarize(Tape& t, NodeId out, const Array& w) {
  return t.sum(t.mul(out, t.constant(w)));
}

// Nudges values away from the non-smooth points in `kinks` so central
// differences stay valid.
inline Array random_away_from(Rng& rng, std::vector<int64_t> shape,
                              const std::vector<double>& kinks, double lo = -1.0,
                              double hi = 1.0, double margin = 0.05) {
  Array a = Array::zeros(std::move(shape));
  for (double& v : a.data) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      v = rng.uniform(lo, hi);
      bool clear = true;
      for (double k : kinks)
        if (std::fabs(v - k) < margin) clear = false;
      if (clear) break;
    }
  }
  return a;
}

struct OpFdOutcome {
  std::string op;
  double max_err = 0.0;  // worst |analytic - fd| seen across instances
  bool ok = true;
};

// Finite-difference sweep over every tape primitive, `instances` random
// cases each. Used by the unit suite and re-run by the acceptance gate.
inline std::vector<OpFdOutcome> primitive_fd_suite(int instances, uint64_t seed) {
  Rng rng(seed);
  std::vector<OpFdOutcome> results;

  auto run = [&](const std::string& name,
                 const std::function<void(OpFdOutcome&)>& body) {
    OpFdOutcome oc;
    oc.op = name;
    body(oc);
    results.push_back(oc);
  };
  auto record = [](OpFdOutcome& oc, const FdResult& r) {
    oc.max_err = std::max(oc.max_err, r.max_abs_err);
    if (!r.ok) oc.ok = false;
  };

  run("add", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 4});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.add(in[0], in[1]), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {3, 4}), random_array(rng, {3, 4})}));
    }
  });
  run("sub", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 4});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.sub(in[0], in[1]), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {3, 4}), random_array(rng, {3, 4})}));
    }
  });
  run("mul", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 4});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.mul(in[0], in[1]), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {3, 4}), random_array(rng, {3, 4})}));
    }
  });
  run("add_rowvec", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {4, 5});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.add_rowvec(in[0], in[1]), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {4, 5}), random_array(rng, {5})}));
    }
  });
  run("add_chanvec", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {2, 3, 4, 4});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.add_chanvec(in[0], in[1]), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {2, 3, 4, 4}), random_array(rng, {3})}));
    }
  });
  run("scale", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 4});
      const double s = rng.uniform(-2.0, 2.0);
      auto fn = [w, s](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.scale(in[0], s), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {3, 4})}));
    }
  });
  run("add_scalar", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 4});
      const double s = rng.uniform(-2.0, 2.0);
      auto fn = [w, s](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.add_scalar(in[0], s), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {3, 4})}));
    }
  });
  run("neg", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 4});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.neg(in[0]), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {3, 4})}));
    }
  });
  run("matmul", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 5});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.matmul(in[0], in[1]), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {3, 4}), random_array(rng, {4, 5})}));
    }
  });
  run("conv2d_s1", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {2, 3, 4, 4});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.conv2d(in[0], in[1], 1), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {2, 2, 6, 6}),
                               random_array(rng, {3, 2, 3, 3})}));
    }
  });
  run("conv2d_s2", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {1, 2, 3, 3});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.conv2d(in[0], in[1], 2), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {1, 2, 7, 7}),
                               random_array(rng, {2, 2, 3, 3})}));
    }
  });
  run("relu", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 4});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.relu(in[0]), w);
      };
      record(oc, fd_check(fn, {random_away_from(rng, {3, 4}, {0.0})}));
    }
  });
  run("tanh", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 4});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.tanh(in[0]), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {3, 4}, -2.0, 2.0)}));
    }
  });
  run("exp", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 4});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.exp(in[0]), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {3, 4})}));
    }
  });
  run("log", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 4});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.log(in[0]), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {3, 4}, 0.1, 2.0)}));
    }
  });
  run("square", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 4});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.square(in[0]), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {3, 4}, -2.0, 2.0)}));
    }
  });
  run("abs", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 4});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.abs(in[0]), w);
      };
      record(oc, fd_check(fn, {random_away_from(rng, {3, 4}, {0.0})}));
    }
  });
  run("clamp", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 4});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.clamp(in[0], -0.5, 0.5), w);
      };
      record(oc, fd_check(fn, {random_away_from(rng, {3, 4}, {-0.5, 0.5})}));
    }
  });
  run("minimum", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 4});
      Array a = random_array(rng, {3, 4});
      Array b = random_array(rng, {3, 4});
      // keep the two branches separated so the argmin is stable under h
      for (size_t j = 0; j < a.data.size(); ++j)
        if (std::fabs(a.data[j] - b.data[j]) < 0.05) b.data[j] += 0.1;
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.minimum(in[0], in[1]), w);
      };
      record(oc, fd_check(fn, {a, b}));
    }
  });
  run("softmax", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {4, 5});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.softmax_lastdim(in[0]), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {4, 5}, -2.0, 2.0)}));
    }
  });
  run("logsumexp", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {4, 1});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.logsumexp_lastdim(in[0]), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {4, 5}, -2.0, 2.0)}));
    }
  });
  run("sum", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      const double s = rng.uniform(-2.0, 2.0);
      auto fn = [s](Tape& t, const std::vector<NodeId>& in) {
        return t.scale(t.sum(in[0]), s);
      };
      record(oc, fd_check(fn, {random_array(rng, {3, 4})}));
    }
  });
  run("mean", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      const double s = rng.uniform(-2.0, 2.0);
      auto fn = [s](Tape& t, const std::vector<NodeId>& in) {
        return t.scale(t.mean(in[0]), s);
      };
      record(oc, fd_check(fn, {random_array(rng, {3, 4})}));
    }
  });
  run("sum_lastdim", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 1});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.sum_lastdim(in[0]), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {3, 4})}));
    }
  });
  run("slice", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 3});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.slice_lastdim(in[0], 1, 3), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {3, 6})}));
    }
  });
  run("concat", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 6});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.concat_lastdim(in[0], in[1]), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {3, 2}), random_array(rng, {3, 4})}));
    }
  });
  run("reshape", [&](OpFdOutcome& oc) {
    for (int i = 0; i < instances; ++i) {
      Array w = random_array(rng, {3, 4});
      auto fn = [w](Tape& t, const std::vector<NodeId>& in) {
        return scalarize(t, t.reshape(in[0], {3, 4}), w);
      };
      record(oc, fd_check(fn, {random_array(rng, {2, 6})}));
    }
  });

  return results;
}

inline bool approx_eq(double a, double b, double tol = 1e-10) {
  return std::fabs(a - b) <= tol;
}

inline bool arrays_approx(const Array& a, const Array& b, double tol = 1e-10) {
  if (a.shape != b.shape) return false;
  for (size_t i = 0; i < a.data.size(); ++i)
    if (std::fabs(a.data[i] - b.data[i]) > tol) return false;
  return true;
}

inline double max_abs_diff(const Array& a, const Array& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

inline double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace rbtest
