#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sensched/estimator.hpp"
#include "sensched/mdp.hpp"
#include "sensched/model.hpp"
#include "sensched/sim.hpp"

namespace sensched::io {

using json = nlohmann::json;

/// Bad or missing input (file, JSON, ranges).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline Matrix matrix_from_json(const json& j, const std::string& name) {
  if (!j.is_array() || j.empty()) throw InputError(name + ": expected a nested array");
  const auto rows = j.size();
  const auto cols = j.at(0).size();
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw InputError(name + ": ragged rows");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

inline json matrix_to_json(const Matrix& m) {
  json out = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

/// Q and R accept either one matrix per node or a single matrix shared by all nodes.
inline MatrixList matrix_list_from_json(const json& j, int N, const std::string& name) {
  if (j.is_array() && !j.empty() && j[0].is_array() && !j[0].empty() && j[0][0].is_array()) {
    MatrixList out;
    for (std::size_t i = 0; i < j.size(); ++i)
      out.push_back(matrix_from_json(j[i], name + std::to_string(i + 1)));
    return out;
  }
  return MatrixList(N, matrix_from_json(j, name));
}

/// Parses and validates a model: keys n, m, N, A, G, C, mu, adjacency, Q, R.
inline NetworkModel model_from_json(const json& j) {
  NetworkModel m;
  try {
    m.n = j.at("n").get<int>();
    m.m = j.at("m").get<int>();
    m.N = j.at("N").get<int>();
    m.A = matrix_from_json(j.at("A"), "A");
    m.G = matrix_from_json(j.at("G"), "G");
    m.C = matrix_from_json(j.at("C"), "C");
    m.mu = j.at("mu").get<double>();
    const Matrix adj = matrix_from_json(j.at("adjacency"), "adjacency");
    m.adjacency = adj.cast<int>();
    if ((adj - m.adjacency.cast<double>()).cwiseAbs().maxCoeff() > 0)
      throw InputError("adjacency must be integer-valued");
    m.Q = matrix_list_from_json(j.at("Q"), m.N, "Q");
    m.R = matrix_list_from_json(j.at("R"), m.N, "R");
  } catch (const json::exception& e) {
    throw InputError(std::string("model: ") + e.what());
  }
  auto v = validate_model(m);
  if (!v.ok()) throw InputError("model: " + v.violations.front());
  return m;
}

inline json model_to_json(const NetworkModel& m) {
  json j;
  j["n"] = m.n;
  j["m"] = m.m;
  j["N"] = m.N;
  j["A"] = matrix_to_json(m.A);
  j["G"] = matrix_to_json(m.G);
  j["C"] = matrix_to_json(m.C);
  j["mu"] = m.mu;
  j["adjacency"] = matrix_to_json(m.adjacency.cast<double>());
  j["Q"] = json::array();
  j["R"] = json::array();
  for (const auto& q : m.Q) j["Q"].push_back(matrix_to_json(q));
  for (const auto& r : m.R) j["R"].push_back(matrix_to_json(r));
  return j;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

inline NetworkModel load_model(const std::filesystem::path& path) {
  return model_from_json(read_json_file(path));
}

/// Problem fields: lambda (scalar or list), kappa, M, tau_max, delays, epsilon.
inline MdpProblem problem_from_json(const json& j, int N) {
  MdpProblem p;
  try {
    const json& lam = j.at("lambda");
    p.lambda = lam.is_array() ? lam.get<std::vector<double>>() : std::vector<double>(N, lam.get<double>());
    p.kappa = j.at("kappa").get<double>();
    p.M = j.at("M").get<int>();
    p.tau_max = j.value("tau_max", 50);
    p.delays = j.contains("delays") ? j.at("delays").get<std::vector<int>>() : std::vector<int>(N, 1);
    p.epsilon = j.value("epsilon", 0.01);
    p.max_sweeps = j.value("max_sweeps", 10000);
  } catch (const json::exception& e) {
    throw InputError(std::string("problem: ") + e.what());
  }
  if (p.sensors() != N) throw InputError("problem: lambda must have N entries");
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("problem: ") + e.what());
  }
  return p;
}

inline json problem_to_json(const MdpProblem& p) {
  return json{{"lambda", p.lambda}, {"kappa", p.kappa},     {"M", p.M},
              {"tau_max", p.tau_max}, {"delays", p.delays}, {"epsilon", p.epsilon},
              {"max_sweeps", p.max_sweeps}};
}

struct Scenario {
  std::string name;
  NetworkModel model;
  MdpProblem problem;
  long horizon = 10000;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir = "out";
  double z = 1.0;
  std::vector<Vector> x0;
  json raw;
};

/// Scenario keys: name, model (inline) or model_file (relative to the scenario), problem
/// fields at top level, horizon, seeds (count or list), out, z, x0.
inline Scenario load_scenario(const std::filesystem::path& path) {
  Scenario sc;
  sc.raw = read_json_file(path);
  const json& j = sc.raw;
  if (!j.is_object()) throw InputError(path.string() + ": scenario must be a JSON object");
  sc.name = j.value("name", path.stem().string());
  if (j.contains("model")) {
    sc.model = model_from_json(j.at("model"));
  } else if (j.contains("model_file")) {
    sc.model = load_model(path.parent_path() / j.at("model_file").get<std::string>());
  } else {
    throw InputError("scenario needs model or model_file");
  }
  sc.problem = problem_from_json(j, sc.model.N);
  try {
    sc.horizon = j.value("horizon", 10000L);
    if (j.contains("seeds") && j.at("seeds").is_array()) {
      sc.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    } else {
      const int count = j.value("seeds", 20);
      for (int s = 1; s <= count; ++s) sc.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    sc.out_dir = j.value("out", std::string("out/") + sc.name);
    sc.z = j.value("z", 1.0);
    if (j.contains("x0")) {
      for (const auto& v : j.at("x0")) {
        auto vals = v.get<std::vector<double>>();
        sc.x0.push_back(Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size())));
      }
      if (static_cast<int>(sc.x0.size()) != sc.model.N)
        throw InputError("x0 must hold one vector per node");
      for (const auto& v : sc.x0)
        if (v.size() != sc.model.n) throw InputError("x0 vectors must have length n");
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("scenario: ") + e.what());
  }
  if (sc.horizon < 1) throw InputError("horizon must be >= 1");
  if (sc.seeds.empty()) throw InputError("at least one seed is required");
  return sc;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

inline std::string config_hash(const json& j) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline std::string tau_header(int N) {
  std::string h;
  for (int i = 1; i <= N; ++i) h += "tau_" + std::to_string(i) + ",";
  return h;
}

inline std::string tau_fields(const AgeState& s) {
  std::string f;
  for (int t : s.tau) f += std::to_string(t) + ",";
  return f;
}

/// Header: tau_1..tau_N,scheduled,boundary. `scheduled` lists 1-based sensor indices
/// separated by spaces; `boundary` is 1 within `band` of tau_max.
inline std::string policy_csv(const Policy& p, int band = 5) {
  std::ostringstream os;
  os << tau_header(p.lattice.sensors()) << "scheduled,boundary\n";
  for (std::size_t idx = 0; idx < p.lattice.size(); ++idx) {
    os << tau_fields(p.lattice.state(idx));
    const Action& a = p.at(idx);
    bool first = true;
    for (int i = 0; i < a.size(); ++i)
      if (a.alpha[i]) {
        os << (first ? "" : " ") << i + 1;
        first = false;
      }
    os << "," << (p.lattice.near_boundary(idx, band) ? 1 : 0) << "\n";
  }
  return os.str();
}

/// Inverse of policy_csv for a known problem.
inline Policy policy_from_csv(const std::filesystem::path& path, const MdpProblem& problem) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  Policy p;
  p.lattice = StateLattice(problem.delays, problem.tau_max);
  p.actions = enumerate_actions(problem.sensors(), problem.M);
  p.choice.assign(p.lattice.size(), -1);
  p.meta.method = "loaded";
  std::string line;
  std::getline(in, line);
  const int N = problem.sensors();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    AgeState s;
    for (int i = 0; i < N; ++i) {
      std::getline(ss, field, ',');
      s.tau.push_back(std::stoi(field));
    }
    std::getline(ss, field, ',');
    Action a{std::vector<int>(N, 0)};
    std::stringstream ids(field);
    int id;
    while (ids >> id) {
      if (id < 1 || id > N) throw InputError("policy file: sensor index out of range");
      a.alpha[id - 1] = 1;
    }
    if (!p.lattice.contains(s)) throw InputError("policy file: state outside the lattice");
    auto it = std::find(p.actions.begin(), p.actions.end(), a);
    if (it == p.actions.end()) throw InputError("policy file: inadmissible action");
    p.choice[p.lattice.index(s)] = static_cast<int>(it - p.actions.begin());
  }
  for (int c : p.choice)
    if (c < 0) throw InputError("policy file does not cover the lattice");
  return p;
}

inline std::string values_csv(const SolveResult& r) {
  std::ostringstream os;
  os << tau_header(r.policy.lattice.sensors()) << "value\n";
  for (std::size_t idx = 0; idx < r.values.values.size(); ++idx)
    os << tau_fields(r.policy.lattice.state(idx)) << fmt(r.values.values[idx]) << "\n";
  return os.str();
}

inline std::string rewards_csv(const SchedulingMdp& mdp) {
  std::ostringstream os;
  os << tau_header(mdp.lattice().sensors()) << "trace_sum\n";
  for (std::size_t idx = 0; idx < mdp.lattice().size(); ++idx)
    os << tau_fields(mdp.lattice().state(idx)) << fmt(mdp.trace_sum(idx)) << "\n";
  return os.str();
}

inline json solve_meta_json(const Policy& p) {
  json j{{"method", p.meta.method},
         {"iterations", p.meta.iterations},
         {"step8_count", p.meta.step8_count},
         {"converged", p.meta.converged},
         {"pruning_abandoned", p.meta.pruning_abandoned},
         {"j_star", p.meta.j_star},
         {"final_change", p.meta.final_change},
         {"wall_seconds", p.meta.wall_seconds},
         {"states", p.lattice.size()},
         {"scheduled_counts", p.scheduled_counts()}};
  return j;
}

inline json steady_state_json(const SteadyState& s) {
  json j{{"iterations", s.iterations}, {"residual", s.residual}};
  j["P"] = json::array();
  j["P_breve"] = json::array();
  j["K"] = json::array();
  for (std::size_t i = 0; i < s.P.size(); ++i) {
    j["P"].push_back(matrix_to_json(s.P[i]));
    j["P_breve"].push_back(matrix_to_json(s.P_breve[i]));
    j["K"].push_back(matrix_to_json(s.K[i]));
  }
  return j;
}

/// Header: step,tau_i..,alpha_i..,gamma_i..,trace_i..,action_cost,reward
inline std::string trace_csv(const SimTrace& t) {
  const int N = t.problem.sensors();
  std::ostringstream os;
  os << "step,";
  for (const char* group : {"tau", "alpha", "gamma", "trace"})
    for (int i = 1; i <= N; ++i) os << group << "_" << i << ",";
  os << "action_cost,reward\n";
  for (const auto& r : t.steps) {
    os << r.step << ",";
    for (int v : r.ages) os << v << ",";
    for (int v : r.channel.alpha) os << v << ",";
    for (int v : r.channel.gamma) os << v << ",";
    for (double v : r.traces) os << fmt(v) << ",";
    os << fmt(r.action_cost) << "," << fmt(r.reward) << "\n";
  }
  return os.str();
}

inline std::string javg_summary_csv(const std::vector<EnsembleSummary>& rows) {
  std::ostringstream os;
  os << "policy,mean,ci_low,ci_high,stddev,seeds\n";
  for (const auto& r : rows)
    os << r.scheduler << "," << fmt(r.mean) << "," << fmt(r.ci_low()) << "," << fmt(r.ci_high())
       << "," << fmt(r.stddev) << "," << r.seeds.size() << "\n";
  return os.str();
}

}  // namespace sensched::io
