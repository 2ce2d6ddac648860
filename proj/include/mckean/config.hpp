#pragma once

#include "errors.hpp"
#include "testcase.hpp"

#include <json.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

namespace mckean {

enum class Mode
{
  variance_sweep,
  bias_sweep,
  dt_sweep,
  chaos_study,
  demo
};

inline std::string
to_string(Mode m)
{
  switch (m) {
    case Mode::variance_sweep: return "variance-sweep";
    case Mode::bias_sweep: return "bias-sweep";
    case Mode::dt_sweep: return "dt-sweep";
    case Mode::chaos_study: return "chaos-study";
    case Mode::demo: return "demo";
  }
  return "unknown";
}

//! Parameters of the two-solution ODE demo.
struct DemoParams
{
  double alpha = 0.5;
  double C = 2.0;
  double t_max = 2.0;
  double dt = 1e-3;
};

//! Everything an experiment needs. Defaults are the desk-scale protocol:
//! d = 1, m = 3/2, mu = 0, A = 2/3, T = 1, n = 10.
struct ExperimentConfig
{
  Mode mode = Mode::variance_sweep;
  double T = 1.0;
  std::size_t n = 10;
  std::size_t d = 1;
  double m = 1.5;
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(1);
  Eigen::MatrixXd A = Eigen::MatrixXd::Constant(1, 1, 2.0 / 3.0);
  BarenblattVariant variant = BarenblattVariant::classical_squared;
  CoefficientForm coefficients = CoefficientForm::consistent;
  double f_floor = TestCase::default_f_floor;
  std::vector<std::size_t> N{ 256, 512, 1024, 2048, 4096 };
  std::vector<double> eps{ 0.5 };
  std::size_t M = 50;
  std::size_t Q = 1000;
  std::uint64_t seed = 1;
  std::vector<std::size_t> n_list{ 8, 16, 32, 64 };
  std::size_t N_ref = 8192;
  //! Evaluation points with v(0, X) below this fraction of the largest value
  //! are dropped from the error estimators.
  double exclusion_threshold = 1e-8;
  DemoParams demo;
  //! 0 = MCKEAN_THREADS or the hardware count.
  std::size_t threads = 0;

  TestCase make_test_case() const
  {
    return TestCase(BarenblattParams(m, d, variant), mu, A, coefficients, f_floor);
  }

  void validate() const
  {
    if (!(T > 0.0) || !std::isfinite(T))
      throw ConfigError("T", "must be positive and finite");
    if (n < 1)
      throw ConfigError("n", "must be at least 1");
    if (d < 1)
      throw ConfigError("d", "must be at least 1");
    if (!(m > 1.0))
      throw ConfigError("m", "must exceed 1");
    if (mu.size() != static_cast<Eigen::Index>(d))
      throw ConfigError("mu", "needs d entries");
    if (A.rows() != static_cast<Eigen::Index>(d) || A.cols() != A.rows())
      throw ConfigError("A", "must be d x d");
    if (!(f_floor > 0.0))
      throw ConfigError("f_floor", "must be positive");
    if (N.empty())
      throw ConfigError("N", "must not be empty");
    for (std::size_t v : N)
      if (v < 1)
        throw ConfigError("N", "every entry must be >= 1");
    if (eps.empty())
      throw ConfigError("eps", "must not be empty");
    for (double e : eps)
      if (!(e > 0.0) || !std::isfinite(e))
        throw ConfigError("eps", "every entry must be positive");
    if (M < 1)
      throw ConfigError("M", "must be at least 1");
    if (Q < 1)
      throw ConfigError("Q", "must be at least 1");
    if (n_list.empty())
      throw ConfigError("n_list", "must not be empty");
    for (std::size_t v : n_list)
      if (v < 1)
        throw ConfigError("n_list", "every entry must be >= 1");
    if (N_ref < 1)
      throw ConfigError("N_ref", "must be at least 1");
    if (!(exclusion_threshold >= 0.0 && exclusion_threshold < 1.0))
      throw ConfigError("exclusion_threshold", "must lie in [0, 1)");
    if (!(demo.alpha > 0.0 && demo.alpha < 1.0))
      throw ConfigError("demo.alpha", "must lie in (0, 1)");
    if (!(demo.C > 1.0))
      throw ConfigError("demo.C", "must exceed 1");
    if (!(demo.t_max > 0.0))
      throw ConfigError("demo.t_max", "must be positive");
    if (!(demo.dt > 0.0))
      throw ConfigError("demo.dt", "must be positive");
  }

  nlohmann::json to_json() const
  {
    using nlohmann::json;
    json a = json::array();
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < A.cols(); ++c)
        row.push_back(A(r, c));
      a.push_back(row);
    }
    return json{ { "mode", to_string(mode) },
                 { "T", T },
                 { "n", n },
                 { "d", d },
                 { "m", m },
                 { "mu", std::vector<double>(mu.data(), mu.data() + mu.size()) },
                 { "A", a },
                 { "variant", to_string(variant) },
                 { "coefficients", to_string(coefficients) },
                 { "f_floor", f_floor },
                 { "N", N },
                 { "eps", eps },
                 { "M", M },
                 { "Q", Q },
                 { "seed", seed },
                 { "n_list", n_list },
                 { "N_ref", N_ref },
                 { "exclusion_threshold", exclusion_threshold },
                 { "demo",
                   { { "alpha", demo.alpha },
                     { "C", demo.C },
                     { "t_max", demo.t_max },
                     { "dt", demo.dt } } },
                 { "threads", threads } };
  }

  //! Missing fields keep their defaults; unknown fields are rejected.
  static ExperimentConfig from_json(const nlohmann::json& j)
  {
    if (!j.is_object())
      throw ConfigError("<root>", "config must be a JSON object");
    static const std::set<std::string> known{
      "mode", "T", "n", "d", "m", "mu", "A", "variant", "coefficients",
      "f_floor", "N", "eps", "M", "Q", "seed", "n_list", "N_ref",
      "exclusion_threshold", "demo", "threads"
    };
    for (const auto& item : j.items())
      if (!known.count(item.key()))
        throw ConfigError(item.key(), "unknown field");

    ExperimentConfig c;
    if (j.contains("mode")) {
      const std::string s = get<std::string>(j, "mode");
      if (s == "variance-sweep")
        c.mode = Mode::variance_sweep;
      else if (s == "bias-sweep")
        c.mode = Mode::bias_sweep;
      else if (s == "dt-sweep")
        c.mode = Mode::dt_sweep;
      else if (s == "chaos-study")
        c.mode = Mode::chaos_study;
      else if (s == "demo")
        c.mode = Mode::demo;
      else
        throw ConfigError("mode", "unknown mode '" + s + "'");
    }
    read(j, "T", c.T);
    read(j, "n", c.n);
    read(j, "d", c.d);
    if (c.d < 1)
      throw ConfigError("d", "must be at least 1");
    read(j, "m", c.m);
    const auto d = static_cast<Eigen::Index>(c.d);

    c.mu = Eigen::VectorXd::Zero(d);
    if (j.contains("mu")) {
      const auto& v = j.at("mu");
      if (v.is_number())
        c.mu.setConstant(v.get<double>());
      else if (v.is_array() && v.size() == c.d)
        for (Eigen::Index i = 0; i < d; ++i)
          c.mu[i] = number(v.at(static_cast<std::size_t>(i)), "mu");
      else
        throw ConfigError("mu", "expected a number or an array of d numbers");
    }

    c.A = (2.0 / 3.0) * Eigen::MatrixXd::Identity(d, d);
    if (j.contains("A")) {
      const auto& v = j.at("A");
      if (v.is_number()) {
        c.A = v.get<double>() * Eigen::MatrixXd::Identity(d, d);
      } else if (v.is_array() && v.size() == c.d) {
        for (Eigen::Index r = 0; r < d; ++r) {
          const auto& row = v.at(static_cast<std::size_t>(r));
          if (!row.is_array() || row.size() != c.d)
            throw ConfigError("A", "expected a d x d array of rows");
          for (Eigen::Index col = 0; col < d; ++col)
            c.A(r, col) = number(row.at(static_cast<std::size_t>(col)), "A");
        }
      } else {
        throw ConfigError("A", "expected a number or a d x d array");
      }
    }

    if (j.contains("variant")) {
      const std::string s = get<std::string>(j, "variant");
      if (s == "classical-squared")
        c.variant = BarenblattVariant::classical_squared;
      else if (s == "paper-literal-abs")
        c.variant = BarenblattVariant::paper_literal_abs;
      else
        throw ConfigError("variant", "unknown variant '" + s + "'");
    }
    if (j.contains("coefficients")) {
      const std::string s = get<std::string>(j, "coefficients");
      if (s == "consistent")
        c.coefficients = CoefficientForm::consistent;
      else if (s == "printed")
        c.coefficients = CoefficientForm::printed;
      else
        throw ConfigError("coefficients", "unknown form '" + s + "'");
    }
    read(j, "f_floor", c.f_floor);
    read(j, "N", c.N);
    read(j, "eps", c.eps);
    read(j, "M", c.M);
    read(j, "Q", c.Q);
    read(j, "seed", c.seed);
    read(j, "n_list", c.n_list);
    read(j, "N_ref", c.N_ref);
    read(j, "exclusion_threshold", c.exclusion_threshold);
    read(j, "threads", c.threads);
    if (j.contains("demo")) {
      const auto& dm = j.at("demo");
      if (!dm.is_object())
        throw ConfigError("demo", "expected an object");
      for (const auto& item : dm.items())
        if (item.key() != "alpha" && item.key() != "C" && item.key() != "t_max" &&
            item.key() != "dt")
          throw ConfigError("demo." + item.key(), "unknown field");
      read(dm, "alpha", c.demo.alpha, "demo.");
      read(dm, "C", c.demo.C, "demo.");
      read(dm, "t_max", c.demo.t_max, "demo.");
      read(dm, "dt", c.demo.dt, "demo.");
    }
    c.validate();
    return c;
  }

  static ExperimentConfig from_file(const std::string& path)
  {
    std::ifstream in(path);
    if (!in)
      throw ConfigError("--config", "cannot open '" + path + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("--config", std::string("malformed JSON: ") + e.what());
    }
    return from_json(j);
  }

private:
  static double number(const nlohmann::json& v, const std::string& field)
  {
    if (!v.is_number())
      throw ConfigError(field, "expected a number");
    return v.get<double>();
  }

  template<class T>
  static T get(const nlohmann::json& j, const std::string& key, const std::string& prefix = "")
  {
    try {
      return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(prefix + key, "has the wrong type");
    }
  }

  template<class T>
  static void read(const nlohmann::json& j,
                   const std::string& key,
                   T& out,
                   const std::string& prefix = "")
  {
    if (!j.contains(key))
      return;
    const auto& v = j.at(key);
    // Counts must be nonnegative integers, not floats that happen to convert.
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned())
        throw ConfigError(prefix + key, "expected a nonnegative integer");
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      if (!v.is_array())
        throw ConfigError(prefix + key, "expected an array of integers");
      for (const auto& e : v)
        if (!e.is_number_unsigned())
          throw ConfigError(prefix + key, "expected nonnegative integers");
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      if (!v.is_array())
        throw ConfigError(prefix + key, "expected an array of numbers");
      for (const auto& e : v)
        if (!e.is_number())
          throw ConfigError(prefix + key, "expected numbers");
    } else {
      if (!v.is_number())
        throw ConfigError(prefix + key, "expected a number");
    }
    out = v.get<T>();
  }
};

} // namespace mckean
