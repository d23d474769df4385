#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "kesten/errors.hpp"
#include "kesten/model.hpp"

namespace kesten {

using json = nlohmann::json;

struct VectorLawAccess {
  static json to_json(const VectorLaw& law);
};

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ParseError, where + ": " + what);
}

void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(where, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!ok.count(it.key())) fail(where, "unknown field '" + it.key() + "'");
}

const json& need(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(where, std::string("missing field '") + key + "'");
  return *it;
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) fail(where, "expected a number");
  return v.get<double>();
}

Matrix matrix_from(const json& v, int dim, const std::string& where) {
  if (!v.is_array() || static_cast<int>(v.size()) != dim) fail(where, "expected " + std::to_string(dim) + " rows");
  Matrix m(dim, dim);
  for (int i = 0; i < dim; ++i) {
    const json& row = v[i];
    if (!row.is_array() || static_cast<int>(row.size()) != dim)
      fail(where, "row " + std::to_string(i) + " must have " + std::to_string(dim) + " entries");
    for (int j = 0; j < dim; ++j) m(i, j) = number(row[j], where);
  }
  return m;
}

Component1D component_from(const json& c, const std::string& where) {
  const std::string dist = need(c, "dist", where).get<std::string>();
  if (dist == "uniform") {
    only_keys(c, where, {"dist", "a", "b"});
    return Uniform1D{number(need(c, "a", where), where + ".a"), number(need(c, "b", where), where + ".b")};
  }
  if (dist == "exponential") {
    only_keys(c, where, {"dist", "loc", "scale"});
    return Exponential1D{c.contains("loc") ? number(c["loc"], where + ".loc") : 0.0,
                         number(need(c, "scale", where), where + ".scale")};
  }
  if (dist == "pareto") {
    only_keys(c, where, {"dist", "loc", "scale", "shape"});
    return Pareto1D{c.contains("loc") ? number(c["loc"], where + ".loc") : 0.0,
                    number(need(c, "scale", where), where + ".scale"), number(need(c, "shape", where), where + ".shape")};
  }
  if (dist == "loguniform") {
    only_keys(c, where, {"dist", "lo", "hi"});
    return LogUniform1D{number(need(c, "lo", where), where + ".lo"), number(need(c, "hi", where), where + ".hi")};
  }
  fail(where, "unknown dist '" + dist + "'");
}

VectorLaw vector_law_from(const json& e, int dim, const std::string& where, bool top) {
  if (top)
    only_keys(e, where, {"generator", "params", "singular", "epsilon"});
  else
    only_keys(e, where, {"generator", "params"});
  const std::string gen = need(e, "generator", where).get<std::string>();
  const json params = e.contains("params") ? e["params"] : json::object();
  const std::string pw = where + ".params";
  VectorLaw law;
  try {
    if (gen == "point") {
      only_keys(params, pw, {"value"});
      const json& v = need(params, "value", pw);
      if (!v.is_array() || static_cast<int>(v.size()) != dim) fail(pw + ".value", "expected " + std::to_string(dim) + " entries");
      Vector x(dim);
      for (int i = 0; i < dim; ++i) x(i) = number(v[i], pw + ".value");
      law = VectorLaw::point(x);
    } else if (gen == "product") {
      only_keys(params, pw, {"components"});
      const json& cs = need(params, "components", pw);
      if (!cs.is_array() || static_cast<int>(cs.size()) != dim) fail(pw + ".components", "expected " + std::to_string(dim) + " entries");
      std::vector<Component1D> comps;
      for (std::size_t i = 0; i < cs.size(); ++i) comps.push_back(component_from(cs[i], pw + ".components[" + std::to_string(i) + "]"));
      law = VectorLaw::product(std::move(comps));
    } else if (gen == "mixture") {
      only_keys(params, pw, {"weights", "components"});
      const json& ws = need(params, "weights", pw);
      const json& cs = need(params, "components", pw);
      if (!ws.is_array() || !cs.is_array() || ws.size() != cs.size() || ws.empty())
        fail(pw, "weights and components must be equal-length non-empty arrays");
      std::vector<double> w;
      std::vector<VectorLaw> comps;
      for (std::size_t i = 0; i < cs.size(); ++i) {
        w.push_back(number(ws[i], pw + ".weights"));
        comps.push_back(vector_law_from(cs[i], dim, pw + ".components[" + std::to_string(i) + "]", false));
      }
      law = VectorLaw::mixture(std::move(w), std::move(comps));
    } else if (gen == "arc_uniform") {
      only_keys(params, pw, {"radius"});
      if (dim != 2) fail(where, "arc_uniform requires dim = 2");
      law = VectorLaw::arc_uniform(params.contains("radius") ? number(params["radius"], pw + ".radius") : 1.0);
    } else {
      fail(where, "unknown generator '" + gen + "'");
    }
  } catch (const Error& err) {
    if (err.code() == ErrorCode::ParseError) throw;
    fail(where, err.what());
  }
  if (top) {
    const bool singular = e.contains("singular") ? e["singular"].get<bool>() : law.singular();
    const double eps = e.contains("epsilon") ? number(e["epsilon"], where + ".epsilon") : 0.0;
    if (eps < 0.0) fail(where + ".epsilon", "must be nonnegative");
    law.declare(singular, eps);
  }
  return law;
}

MatrixLaw matrix_law_from(const json& m, int dim) {
  const std::string where = "mu";
  if (m.contains("atoms")) {
    only_keys(m, where, {"atoms", "s_inf"});
    const json& atoms = m["atoms"];
    if (!atoms.is_array() || atoms.empty()) fail("mu.atoms", "expected a non-empty array");
    std::vector<MatrixAtom> out;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
      const std::string aw = "mu.atoms[" + std::to_string(k) + "]";
      only_keys(atoms[k], aw, {"matrix", "p"});
      Matrix a = matrix_from(need(atoms[k], "matrix", aw), dim, aw + ".matrix");
      try {
        out.push_back({PositiveMatrix(std::move(a)), number(need(atoms[k], "p", aw), aw + ".p")});
      } catch (const Error& err) {
        if (err.code() == ErrorCode::ParseError) throw;
        fail(aw, err.what());
      }
    }
    const double s_inf = m.contains("s_inf") ? number(m["s_inf"], "mu.s_inf") : kInf;
    try {
      return MatrixLaw::finite(std::move(out), s_inf);
    } catch (const Error& err) {
      fail(where, err.what());
    }
  }
  only_keys(m, where, {"generator", "params"});
  const std::string gen = need(m, "generator", where).get<std::string>();
  if (gen != "lognormal_entries") fail(where, "unknown generator '" + gen + "'");
  const json& params = need(m, "params", where);
  only_keys(params, "mu.params", {"base", "sigma"});
  Matrix base = matrix_from(need(params, "base", "mu.params"), dim, "mu.params.base");
  try {
    return MatrixLaw::lognormal_entries(std::move(base), number(need(params, "sigma", "mu.params"), "mu.params.sigma"));
  } catch (const Error& err) {
    fail(where, err.what());
  }
}

std::string line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

json component_json(const Component1D& c) {
  return std::visit(
      [](const auto& d) -> json {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Uniform1D>) return {{"dist", "uniform"}, {"a", d.a}, {"b", d.b}};
        else if constexpr (std::is_same_v<T, Exponential1D>) return {{"dist", "exponential"}, {"loc", d.loc}, {"scale", d.scale}};
        else if constexpr (std::is_same_v<T, Pareto1D>)
          return {{"dist", "pareto"}, {"loc", d.loc}, {"scale", d.scale}, {"shape", d.shape}};
        else return {{"dist", "loguniform"}, {"lo", d.lo}, {"hi", d.hi}};
      },
      c);
}

}  // namespace

Scenario scenario_from(const json& doc);

json VectorLawAccess::to_json(const VectorLaw& law) {
  return std::visit(
      [](const auto& n) -> json {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, VectorLaw::PointNode>) {
          json v = json::array();
          for (Eigen::Index i = 0; i < n.value.size(); ++i) v.push_back(n.value(i));
          return {{"generator", "point"}, {"params", {{"value", v}}}};
        } else if constexpr (std::is_same_v<T, VectorLaw::ProductNode>) {
          json cs = json::array();
          for (const auto& c : n.components) cs.push_back(component_json(c));
          return {{"generator", "product"}, {"params", {{"components", cs}}}};
        } else if constexpr (std::is_same_v<T, VectorLaw::MixtureNode>) {
          json cs = json::array();
          for (const auto& c : *n.components) cs.push_back(VectorLawAccess::to_json(c));
          return {{"generator", "mixture"}, {"params", {{"weights", n.weights}, {"components", cs}}}};
        } else {
          return {{"generator", "arc_uniform"}, {"params", {{"radius", n.radius}}}};
        }
      },
      law.node_);
}

Scenario parse_scenario(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, line_col(text, e.byte == 0 ? 0 : e.byte - 1) + ": " + e.what());
  }
  try {
    return scenario_from(doc);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("scenario: ") + e.what());
  }
}

Scenario scenario_from(const json& doc) {
  only_keys(doc, "scenario", {"dim", "N", "mu", "eta", "s1", "s2", "seed", "labels"});
  Scenario sc;
  const json& dim = need(doc, "dim", "scenario");
  if (!dim.is_number_integer() || dim.get<int>() < 1) fail("dim", "expected a positive integer");
  sc.dim = dim.get<int>();
  const json& n = need(doc, "N", "scenario");
  if (!n.is_number_integer()) fail("N", "expected an integer");
  sc.N = n.get<int>();
  sc.mu = matrix_law_from(need(doc, "mu", "scenario"), sc.dim);
  sc.eta = vector_law_from(need(doc, "eta", "scenario"), sc.dim, "eta", true);
  sc.s1 = number(need(doc, "s1", "scenario"), "s1");
  sc.s2 = number(need(doc, "s2", "scenario"), "s2");
  if (doc.contains("seed")) {
    const json& s = doc["seed"];
    if (!s.is_number_unsigned()) fail("seed", "expected a nonnegative integer");
    sc.seed = s.get<std::uint64_t>();
  }
  if (doc.contains("labels")) {
    const json& l = doc["labels"];
    if (!l.is_object()) fail("labels", "expected an object of strings");
    for (auto it = l.begin(); it != l.end(); ++it) {
      if (!it->is_string()) fail("labels." + it.key(), "expected a string");
      sc.labels[it.key()] = it->get<std::string>();
    }
  }
  try {
    sc.validate();
  } catch (const Error& err) {
    fail("scenario", err.what());
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot open scenario file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string canonical_json(const Scenario& sc) {
  json doc;
  doc["dim"] = sc.dim;
  doc["N"] = sc.N;
  if (sc.mu.finitely_supported()) {
    json atoms = json::array();
    for (const auto& a : sc.mu.atoms()) atoms.push_back({{"matrix", matrix_json(a.matrix.matrix())}, {"p", a.p}});
    doc["mu"] = {{"atoms", atoms}};
    if (std::isfinite(sc.mu.declared_s_inf())) doc["mu"]["s_inf"] = sc.mu.declared_s_inf();
  } else {
    doc["mu"] = {{"generator", "lognormal_entries"}, {"params", {{"base", matrix_json(sc.mu.base())}, {"sigma", sc.mu.sigma()}}}};
  }
  json eta = VectorLawAccess::to_json(sc.eta);
  eta["singular"] = sc.eta.singular();
  eta["epsilon"] = sc.eta.epsilon();
  doc["eta"] = eta;
  doc["s1"] = sc.s1;
  doc["s2"] = sc.s2;
  doc["seed"] = sc.seed;
  doc["labels"] = sc.labels;
  return doc.dump();
}

}  // namespace kesten
