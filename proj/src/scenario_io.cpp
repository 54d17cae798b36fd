#include "condrisk/scenario_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "condrisk/errors.hpp"

namespace condrisk {
namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw SchemaError("field " + (path.empty() ? std::string("/") : path) + ": " + what);
}

const json& require(const json& obj, const std::string& path, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(path + "/" + key, "missing");
  return *it;
}

void only_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; })) {
      fail(path + "/" + it.key(), "unknown key");
    }
  }
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(path, "expected a finite number");
  return d;
}

const json& array(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array");
  return v;
}

Eigen::VectorXd vector_of(const json& v, const std::string& path) {
  array(v, path);
  Eigen::VectorXd out(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Index>(i)) = number(v[i], path + "/" + std::to_string(i));
  return out;
}

UnivariateUtility utility_of(const json& v, const std::string& path) {
  if (!v.is_object()) fail(path, "expected an object");
  const json& kind = require(v, path, "kind");
  if (!kind.is_string()) fail(path + "/kind", "expected a string");
  const auto k = kind.get<std::string>();
  try {
    if (k == "exponential") {
      only_keys(v, path, {"kind", "alpha", "shifted"});
      bool shifted = false;
      if (v.contains("shifted")) {
        if (!v["shifted"].is_boolean()) fail(path + "/shifted", "expected a boolean");
        shifted = v["shifted"].get<bool>();
      }
      const double a = number(require(v, path, "alpha"), path + "/alpha");
      if (!(a > 0.0)) fail(path + "/alpha", "must be positive");
      return UnivariateUtility::exponential(a, shifted);
    }
    if (k == "rational_power" || k == "arctan_power") {
      only_keys(v, path, {"kind", "p"});
      const double p = number(require(v, path, "p"), path + "/p");
      if (!(p > 1.0)) fail(path + "/p", "must exceed 1");
      return k == "rational_power" ? UnivariateUtility::rational_power(p) : UnivariateUtility::arctan_power(p);
    }
  } catch (const InvariantError& e) {
    fail(path, e.what());
  }
  fail(path + "/kind", "unknown utility kind '" + k + "'");
}

Index atom_index(const json& v, const std::string& path, const ScenarioSpace& space) {
  if (v.is_string()) {
    try {
      return space.index_of(v.get<std::string>());
    } catch (const SchemaError& e) {
      fail(path, e.what());
    }
  }
  if (!v.is_number_integer()) fail(path, "expected an atom index or label");
  const auto i = v.get<long long>();
  if (i < 0 || i >= space.size()) fail(path, "atom index out of range");
  return static_cast<Index>(i);
}

SigmaPartition partition_of(const json& v, const std::string& path, const ScenarioSpace& space) {
  array(v, path);
  std::vector<std::vector<Index>> blocks;
  for (std::size_t b = 0; b < v.size(); ++b) {
    const std::string bp = path + "/" + std::to_string(b);
    array(v[b], bp);
    std::vector<Index> blk;
    for (std::size_t k = 0; k < v[b].size(); ++k) blk.push_back(atom_index(v[b][k], bp + "/" + std::to_string(k), space));
    blocks.push_back(std::move(blk));
  }
  try {
    return SigmaPartition(space.size(), std::move(blocks));
  } catch (const SchemaError& e) {
    fail(path, e.what());
  }
}

std::string line_of(const std::string& text, std::size_t byte) {
  const std::size_t upto = std::min(byte, text.size());
  const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
  const auto nl = text.rfind('\n', upto == 0 ? 0 : upto - 1);
  const std::size_t col = nl == std::string::npos ? upto : upto - nl - 1;
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%#.12g", v);
  return buf;
}

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(origin + ": " + line_of(text, e.byte == 0 ? 0 : e.byte - 1) + ": malformed JSON");
  }
  try {
    only_keys(doc, "", {"atoms", "sigma_g", "sigma_h", "agents", "x", "b", "clusters", "tolerances", "oracle"});

    const json& atoms = require(doc, "", "atoms");
    only_keys(atoms, "/atoms", {"labels", "probs"});
    const Eigen::VectorXd probs = vector_of(require(atoms, "/atoms", "probs"), "/atoms/probs");
    if (probs.size() < 1) fail("/atoms/probs", "at least one atom is required");
    std::vector<std::string> labels;
    if (atoms.contains("labels")) {
      const json& l = array(atoms["labels"], "/atoms/labels");
      if (static_cast<Index>(l.size()) != probs.size()) fail("/atoms/labels", "one label per probability");
      for (std::size_t i = 0; i < l.size(); ++i) {
        if (!l[i].is_string()) fail("/atoms/labels/" + std::to_string(i), "expected a string");
        labels.push_back(l[i].get<std::string>());
      }
    } else {
      for (Index k = 0; k < probs.size(); ++k) labels.push_back("w" + std::to_string(k + 1));
    }
    ScenarioSpace space(std::move(labels), probs);
    const Index nk = space.size();

    SigmaPartition g = partition_of(require(doc, "", "sigma_g"), "/sigma_g", space);
    std::optional<SigmaPartition> h;
    if (doc.contains("sigma_h")) h = partition_of(doc["sigma_h"], "/sigma_h", space);

    const json& agents = require(doc, "", "agents");
    only_keys(agents, "/agents", {"utilities", "lambda"});
    const json& us = array(require(agents, "/agents", "utilities"), "/agents/utilities");
    if (us.empty()) fail("/agents/utilities", "at least one agent is required");
    std::vector<UnivariateUtility> utilities;
    for (std::size_t j = 0; j < us.size(); ++j) utilities.push_back(utility_of(us[j], "/agents/utilities/" + std::to_string(j)));
    const Index n = static_cast<Index>(utilities.size());
    LambdaAggregator lambda = LambdaAggregator::zero();
    if (agents.contains("lambda")) {
      const json& l = agents["lambda"];
      only_keys(l, "/agents/lambda", {"kind", "utility", "weights"});
      const json& kind = require(l, "/agents/lambda", "kind");
      if (kind == "composite") {
        UnivariateUtility lu = utility_of(require(l, "/agents/lambda", "utility"), "/agents/lambda/utility");
        const Eigen::VectorXd w = vector_of(require(l, "/agents/lambda", "weights"), "/agents/lambda/weights");
        if (w.size() != n) fail("/agents/lambda/weights", "one weight per agent");
        try {
          lambda = LambdaAggregator::composite(lu, w);
        } catch (const std::invalid_argument& e) {
          fail("/agents/lambda", e.what());
        } catch (const std::domain_error& e) {
          fail("/agents/lambda", e.what());
        }
      } else if (kind != "zero") {
        fail("/agents/lambda/kind", "expected \"zero\" or \"composite\"");
      }
    }

    const json& xj = array(require(doc, "", "x"), "/x");
    if (static_cast<Index>(xj.size()) != n) fail("/x", "one row per agent");
    RandomVector x(n, nk);
    for (Index j = 0; j < n; ++j) {
      const std::string rp = "/x/" + std::to_string(j);
      const Eigen::VectorXd row = vector_of(xj[static_cast<std::size_t>(j)], rp);
      if (row.size() != nk) fail(rp, "one entry per atom");
      x.row(j) = row.transpose();
    }

    const json& bj = require(doc, "", "b");
    RandomVariable b;
    if (bj.is_number()) {
      b = RandomVariable::Constant(nk, number(bj, "/b"));
    } else {
      b = vector_of(bj, "/b");
      if (b.size() != nk) fail("/b", "one entry per atom");
    }

    ClusterConstraint clusters = ClusterConstraint::full_sharing(n);
    if (doc.contains("clusters")) {
      const json& c = array(doc["clusters"], "/clusters");
      std::vector<std::vector<Index>> groups;
      for (std::size_t m = 0; m < c.size(); ++m) {
        const std::string gp = "/clusters/" + std::to_string(m);
        array(c[m], gp);
        std::vector<Index> grp;
        for (std::size_t i = 0; i < c[m].size(); ++i) {
          if (!c[m][i].is_number_integer()) fail(gp + "/" + std::to_string(i), "expected an agent index");
          grp.push_back(static_cast<Index>(c[m][i].get<long long>()));
        }
        groups.push_back(std::move(grp));
      }
      try {
        clusters = ClusterConstraint(n, std::move(groups));
      } catch (const SchemaError& e) {
        fail("/clusters", e.what());
      }
    }

    SolverOptions opt;
    if (doc.contains("tolerances")) {
      const json& t = doc["tolerances"];
      only_keys(t, "/tolerances", {"kkt_tol", "max_iter"});
      if (t.contains("kkt_tol")) opt.kkt_tol = number(t["kkt_tol"], "/tolerances/kkt_tol");
      if (t.contains("max_iter")) {
        if (!t["max_iter"].is_number_integer()) fail("/tolerances/max_iter", "expected an integer");
        opt.max_iter = t["max_iter"].get<int>();
      }
      if (!(opt.kkt_tol > 0.0)) fail("/tolerances/kkt_tol", "must be positive");
      if (opt.max_iter < 1) fail("/tolerances/max_iter", "must be at least 1");
    }

    double lo = -5.0;
    double hi = 5.0;
    if (doc.contains("oracle")) {
      const json& o = doc["oracle"];
      only_keys(o, "/oracle", {"lo", "hi"});
      if (o.contains("lo")) lo = number(o["lo"], "/oracle/lo");
      if (o.contains("hi")) hi = number(o["hi"], "/oracle/hi");
      if (!(lo < hi)) fail("/oracle", "need lo < hi");
    }

    RiskSpec spec(std::move(space), std::move(g), std::move(x), Aggregator(std::move(utilities), std::move(lambda)),
                  std::move(b), std::move(clusters), opt);
    return Scenario{std::move(spec), std::move(h), lo, hi};
  } catch (const SchemaError& e) {
    throw SchemaError(origin + ": " + e.what());
  } catch (const InvariantError& e) {
    throw InvariantError(origin + ": " + e.what());
  }
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError(path + ": cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

}  // namespace condrisk
