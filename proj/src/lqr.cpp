#include "ignd/lqr.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "ignd/csv.hpp"
#include "ignd/errors.hpp"
#include "ignd/numkit.hpp"

namespace ignd {

namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr double kDivergenceBound = 1e12;

bool is_symmetric(const Matrix& m) {
  return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= kSymmetryTol;
}

/// sign * m is positive definite.
bool definite(const Matrix& m, double sign) {
  if (m.size() == 0) return true;
  const Eigen::LLT<Matrix> llt(sign * m);
  return llt.info() == Eigen::Success;
}

/// sign * m is positive semi-definite, up to a tolerance scaled by |m|.
bool semi_definite(const Matrix& m, double sign) {
  if (m.size() == 0) return true;
  const Eigen::SelfAdjointEigenSolver<Matrix> es(sign * m, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return es.eigenvalues().minCoeff() >= -1e-12 * scale;
}

/// F with F F^T = Sigma, for drawing N(0, Sigma).
Matrix noise_factor(const Matrix& sigma) {
  const Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

Vector standard_normal(Index n, Rng& rng) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

}  // namespace

void LQRSystem::validate() const {
  const Index ns = A.rows();
  if (ns < 1 || A.cols() != ns) throw DimensionMismatch("A must be square and non-empty");
  if (B.rows() != ns || B.cols() < 1) throw DimensionMismatch("B must have n_s rows");
  const Index na = B.cols();
  if (Q.rows() != ns || Q.cols() != ns) throw DimensionMismatch("Q must be n_s x n_s");
  if (R.rows() != na || R.cols() != na) throw DimensionMismatch("R must be n_a x n_a");
  if (Sigma.rows() != ns || Sigma.cols() != ns) throw DimensionMismatch("Sigma must be n_s x n_s");
  if (!is_symmetric(Q)) throw ConfigError("Q", "not symmetric");
  if (!is_symmetric(R)) throw ConfigError("R", "not symmetric");
  if (!is_symmetric(Sigma)) throw ConfigError("Sigma", "not symmetric");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma", "must lie in (0, 1)");
  const bool negative = negative_rewards();
  if (!negative && !definite(R, 1.0)) throw ConfigError("R", "must be definite");
  if (!semi_definite(Q, negative ? -1.0 : 1.0)) {
    throw ConfigError("Q", "must be semi-definite with the sign of R");
  }
  if (!semi_definite(Sigma, 1.0)) throw ConfigError("Sigma", "must be positive semi-definite");
}

bool LQRSystem::negative_rewards() const { return definite(R, -1.0); }

bool LQRSystem::degenerate() const { return B.cwiseAbs().maxCoeff() == 0.0; }

LQRSystem make_system(Matrix A, Matrix B, Matrix Q, Matrix R, Matrix Sigma, double gamma) {
  LQRSystem sys{std::move(A), std::move(B), std::move(Q), std::move(R), std::move(Sigma), gamma};
  sys.validate();
  return sys;
}

LQRSystem builtin_system(const std::string& name) {
  Matrix A;
  Matrix B;
  if (name == "scalar") {
    A = Matrix::Constant(1, 1, 0.9);
    B = Matrix::Constant(1, 1, 1.0);
  } else if (name == "2x1") {
    A.resize(2, 2);
    A << 0.6, 0.2,
         0.0, 0.5;
    B.resize(2, 1);
    B << 1.0,
         1.0;
  } else if (name == "4x2") {
    A.resize(4, 4);
    A << 0.8, 0.1, 0.0, 0.0,
         0.0, 0.7, 0.2, 0.0,
         0.0, 0.0, 0.9, 0.1,
         0.1, 0.0, 0.0, 0.6;
    B.resize(4, 2);
    B << 1.0, 0.0,
         0.0, 0.0,
         0.0, 1.0,
         0.5, 0.5;
  } else {
    throw ConfigError("lqr.system", "unknown built-in system '" + name + "'");
  }
  const Index ns = A.rows();
  const Index na = B.cols();
  return make_system(A, B, -Matrix::Identity(ns, ns), -Matrix::Identity(na, na),
                     0.01 * Matrix::Identity(ns, ns), 0.9);
}

std::vector<std::string> builtin_system_names() { return {"scalar", "2x1", "4x2"}; }

LQRSystem load_system(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  std::stringstream content;
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    content << (hash == std::string::npos ? line : line.substr(0, hash)) << '\n';
  }

  std::map<std::string, Matrix> blocks;
  std::optional<double> gamma;
  std::string name;
  while (content >> name) {
    if (name == "gamma") {
      double g = 0;
      if (!(content >> g)) throw ConfigError("gamma", "missing value in " + path.string());
      gamma = g;
      continue;
    }
    if (name != "A" && name != "B" && name != "Q" && name != "R" && name != "Sigma") {
      throw ConfigError(name, "unknown block in " + path.string());
    }
    long rows = 0;
    long cols = 0;
    if (!(content >> rows >> cols) || rows < 1 || cols < 1) {
      throw ConfigError(name, "bad dimension header in " + path.string());
    }
    Matrix m(rows, cols);
    for (long i = 0; i < rows; ++i) {
      for (long j = 0; j < cols; ++j) {
        if (!(content >> m(i, j))) throw ConfigError(name, "too few entries in " + path.string());
      }
    }
    blocks[name] = std::move(m);
  }
  for (const char* required : {"A", "B", "Q", "R", "Sigma"}) {
    if (!blocks.count(required)) throw ConfigError(required, "missing from " + path.string());
  }
  if (!gamma) throw ConfigError("gamma", "missing from " + path.string());
  return make_system(blocks["A"], blocks["B"], blocks["Q"], blocks["R"], blocks["Sigma"], *gamma);
}

void save_system(const std::filesystem::path& path, const LQRSystem& sys) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  auto block = [&](const char* name, const Matrix& m) {
    os << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) os << (j ? " " : "") << format_double(m(i, j));
      os << '\n';
    }
  };
  block("A", sys.A);
  block("B", sys.B);
  block("Q", sys.Q);
  block("R", sys.R);
  block("Sigma", sys.Sigma);
  os << "gamma " << format_double(sys.gamma) << '\n';
}

void quadratic_features_into(const Vector& z, Vector& out) {
  const Index d = z.size();
  out.resize(quadratic_feature_count(d));
  Index k = 0;
  for (Index i = 0; i < d; ++i) {
    for (Index j = i; j < d; ++j) out[k++] = z[i] * z[j];
  }
  out[k] = 1.0;
}

Vector quadratic_features(const Vector& s, const Vector& a) {
  Vector z(s.size() + a.size());
  z << s, a;
  Vector out;
  quadratic_features_into(z, out);
  return out;
}

QuadraticQ weights_to_M(const Vector& w, Index n_s, Index n_a) {
  const Index d = n_s + n_a;
  if (w.size() != quadratic_feature_count(d)) {
    throw LengthMismatch("weights_to_M: expected " + std::to_string(quadratic_feature_count(d)) +
                         " weights, got " + std::to_string(w.size()));
  }
  QuadraticQ q;
  q.n_s = n_s;
  q.n_a = n_a;
  q.M.resize(d, d);
  Index k = 0;
  for (Index i = 0; i < d; ++i) {
    for (Index j = i; j < d; ++j) {
      q.M(i, j) = q.M(j, i) = i == j ? w[k] : w[k] / 2.0;
      ++k;
    }
  }
  q.c = w[k];
  return q;
}

Vector M_to_weights(const QuadraticQ& q) {
  const Index d = q.M.rows();
  Vector w(quadratic_feature_count(d));
  Index k = 0;
  for (Index i = 0; i < d; ++i) {
    for (Index j = i; j < d; ++j) w[k++] = i == j ? q.M(i, i) : q.M(i, j) + q.M(j, i);
  }
  w[k] = q.c;
  return w;
}

double value_offset(const Matrix& P, const Matrix& Sigma, double gamma) {
  return gamma / (1.0 - gamma) * (P * Sigma).trace();
}

QuadraticQ policy_q_matrix(const LQRSystem& sys, const Matrix& K, double tol, long max_iter) {
  const Matrix closed = sys.A + sys.B * K;
  const Matrix stage = sys.Q + K.transpose() * sys.R * K;
  Matrix P = Matrix::Zero(sys.n_s(), sys.n_s());
  bool done = false;
  for (long it = 0; it < max_iter; ++it) {
    Matrix next = stage + sys.gamma * closed.transpose() * P * closed;
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite()) throw NoConvergence("policy value recursion diverged");
    const double change = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (change < tol * std::max(1.0, P.cwiseAbs().maxCoeff())) {
      done = true;
      break;
    }
  }
  if (!done) throw NoConvergence("policy value recursion did not converge");

  const Index ns = sys.n_s();
  const Index na = sys.n_a();
  QuadraticQ q;
  q.n_s = ns;
  q.n_a = na;
  q.M.resize(ns + na, ns + na);
  q.M.topLeftCorner(ns, ns) = sys.Q + sys.gamma * sys.A.transpose() * P * sys.A;
  q.M.topRightCorner(ns, na) = sys.gamma * sys.A.transpose() * P * sys.B;
  q.M.bottomLeftCorner(na, ns) = q.M.topRightCorner(ns, na).transpose();
  q.M.bottomRightCorner(na, na) = sys.R + sys.gamma * sys.B.transpose() * P * sys.B;
  q.c = value_offset(P, sys.Sigma, sys.gamma);
  return q;
}

PolicyEvalResult policy_evaluation(const LQRSystem& sys, const Matrix& K, Vector w0,
                                   const PolicyEvalConfig& config, Rng& rng, long schedule_offset,
                                   bool record) {
  const Index ns = sys.n_s();
  const Index na = sys.n_a();
  const Index nf = quadratic_feature_count(ns + na);
  if (K.rows() != na || K.cols() != ns) throw DimensionMismatch("policy gain must be n_a x n_s");
  if (w0.size() != nf) throw LengthMismatch("policy_evaluation: w0 length");
  if (config.feature_scale && config.feature_scale->size() != nf) {
    throw LengthMismatch("policy_evaluation: feature_scale length");
  }
  if (config.rule != Rule::sgd && config.rule != Rule::ignd) {
    throw ConfigError("lqr.optimizer", "policy evaluation supports ql (sgd) and igndq (ignd)");
  }

  PolicyEvalResult result;
  result.w = std::move(w0);
  Vector& w = result.w;
  if (config.max_steps <= 0) return result;

  const Matrix noise = noise_factor(sys.Sigma);
  const double explore_sd = std::sqrt(config.exploration_variance);
  auto draw_state = [&] { return Vector(config.init_state_scale * standard_normal(ns, rng)); };

  Vector s = draw_state();
  Vector z(ns + na);
  Vector z_next(ns + na);
  Vector x;
  Vector x_next;
  for (long i = 0; i < config.max_steps; ++i) {
    if (config.restart_every > 0 && i > 0 && i % config.restart_every == 0) s = draw_state();
    const double alpha = schedule_alpha(config.alpha, schedule_offset + i);
    const Vector a = K * s + explore_sd * standard_normal(na, rng);
    const double reward = s.dot(sys.Q * s) + a.dot(sys.R * a);
    const Vector s_next = sys.A * s + sys.B * a + noise * standard_normal(ns, rng);
    z << s, a;
    z_next << s_next, K * s_next;
    quadratic_features_into(z, x);
    quadratic_features_into(z_next, x_next);
    if (config.feature_scale) {
      x.array() *= config.feature_scale->array();
      x_next.array() *= config.feature_scale->array();
    }

    const double predicted = w.dot(x);
    const double td = reward + sys.gamma * w.dot(x_next) - predicted;
    const double xi = config.rule == Rule::ignd ? ignd_scale(x.squaredNorm(), config.epsilon) : 1.0;
    const double coeff = alpha * xi * td;
    w += coeff * x;
    if (record) {
      result.predicted.push_back(predicted);
      result.td_errors.push_back(td);
    }
    result.steps_used = i + 1;

    const double w_max = w.cwiseAbs().maxCoeff();
    if (!std::isfinite(w_max) || w_max > kDivergenceBound) {
      throw Diverged("policy evaluation weights exceeded 1e12 at step " + std::to_string(i + 1));
    }
    if (std::abs(coeff) * x.cwiseAbs().maxCoeff() < config.tol) {
      result.converged = true;
      break;
    }
    s = s_next;
  }
  return result;
}

Matrix policy_improvement(const QuadraticQ& q, bool negative_rewards) {
  const Matrix maa = q.M_aa();
  if (!maa.allFinite() || !definite(maa, negative_rewards ? -1.0 : 1.0)) {
    throw IndefiniteMaa(negative_rewards ? "M_aa is not negative definite"
                                         : "M_aa is not positive definite");
  }
  return -maa.partialPivLu().solve(Matrix(q.M_as()));
}

GpiConfig default_gpi_config(Rule rule) {
  GpiConfig c;
  c.eval.rule = rule;
  c.eval.max_steps = 1000;
  c.improvements = 50;
  const long horizon = c.eval.max_steps * c.improvements;
  c.eval.alpha = rule == Rule::ignd ? LRSchedule::geometric(1.0, 1e-3, horizon)
                                    : LRSchedule::geometric(6e-7, 1e-8, horizon);
  return c;
}

GpiResult run_policy_iteration(const LQRSystem& sys, const GpiConfig& config) {
  sys.validate();
  const Index ns = sys.n_s();
  const Index na = sys.n_a();
  GpiResult result;
  result.degenerate = sys.degenerate();
  const auto oracle = riccati_fixed_point(sys.A, sys.B, sys.Q, sys.R, sys.gamma);
  result.P_star = oracle.P;
  result.K_star = oracle.K_star;
  result.K = config.K0 ? *config.K0 : Matrix::Constant(na, ns, config.k0_entry);
  if (result.K.rows() != na || result.K.cols() != ns) throw DimensionMismatch("K0 must be n_a x n_s");

  PolicyEvalConfig eval = config.eval;
  if (config.scope == ScheduleScope::per_evaluation && eval.alpha.kind == LRSchedule::Kind::geometric) {
    eval.alpha.horizon = eval.max_steps;
  }
  Rng rng = Rng(config.seed).split(7);
  const Index nf = quadratic_feature_count(ns + na);
  Vector w = Vector::Zero(nf);
  long schedule_step = 0;
  const double inf = std::numeric_limits<double>::infinity();

  for (long p = 0; p < config.improvements; ++p) {
    try {
      if (!config.warm_start) w.setZero();
      const long offset = config.scope == ScheduleScope::global ? schedule_step : 0;
      PolicyEvalResult ev = policy_evaluation(sys, result.K, w, eval, rng, offset);
      schedule_step += eval.max_steps;
      w = std::move(ev.w);
      result.eval_steps.push_back(ev.steps_used);
      const Matrix K_next = policy_improvement(weights_to_M(w, ns, na), sys.negative_rewards());
      const double change = (K_next - result.K).cwiseAbs().maxCoeff();
      result.K = K_next;
      result.k_error_trace.push_back((result.K - result.K_star).cwiseAbs().maxCoeff());
      result.improvements_done = p + 1;
      if (change < config.k_tol) break;
    } catch (const Diverged& e) {
      result.status = GpiStatus::diverged;
      result.message = e.what();
    } catch (const IndefiniteMaa& e) {
      result.status = GpiStatus::indefinite;
      result.message = e.what();
    }
    if (result.status != GpiStatus::ok) {
      if (static_cast<long>(result.eval_steps.size()) <= p) result.eval_steps.push_back(0);
      result.k_error_trace.resize(static_cast<std::size_t>(config.improvements), inf);
      result.eval_steps.resize(static_cast<std::size_t>(config.improvements), 0);
      break;
    }
  }
  // An early stop on |K_p - K_{p-1}| < tol holds the final gain for the remaining indices.
  if (result.status == GpiStatus::ok && !result.k_error_trace.empty()) {
    result.k_error_trace.resize(static_cast<std::size_t>(config.improvements),
                                result.k_error_trace.back());
    result.eval_steps.resize(static_cast<std::size_t>(config.improvements), 0);
  }
  return result;
}

GpiResult generalized_policy_iteration(const LQRSystem& sys, const GpiConfig& config) {
  GpiResult result = run_policy_iteration(sys, config);
  if (result.status == GpiStatus::diverged) throw Diverged(result.message);
  if (result.status == GpiStatus::indefinite) throw IndefiniteMaa(result.message);
  return result;
}

std::vector<std::string> lqr_trace_header() {
  return {"run_id", "seed", "improvement_index", "k_error_inf", "eval_steps_used"};
}

void append_lqr_trace(CsvWriter& out, const std::string& run_id, std::uint64_t seed,
                      const GpiResult& result) {
  for (std::size_t p = 0; p < result.k_error_trace.size(); ++p) {
    out.field(std::string_view(run_id))
        .field(seed)
        .field(static_cast<std::int64_t>(p + 1))
        .field(result.k_error_trace[p])
        .field(static_cast<std::int64_t>(p < result.eval_steps.size() ? result.eval_steps[p] : 0));
    out.end_row();
  }
}

void write_lqr_trace(const std::string& path, const std::string& run_id, std::uint64_t seed,
                     const GpiResult& result) {
  CsvWriter out(path, lqr_trace_header());
  append_lqr_trace(out, run_id, seed, result);
}

}  // namespace ignd
