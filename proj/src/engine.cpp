#include "ewmm/engine.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ewmm/errors.hpp"

namespace ewmm {
namespace {

std::string step_suffix(std::int64_t t) { return " (step " + std::to_string(t) + ")"; }

// Whitespace-separated tokens; doubles in shortest round-trip form.
class RecordWriter {
 public:
  RecordWriter& key(std::string_view k) {
    if (!out_.empty()) out_ += '\n';
    out_ += k;
    return *this;
  }
  RecordWriter& num(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    out_ += ' ';
    out_.append(buf, r.ptr);
    return *this;
  }
  RecordWriter& integer(std::int64_t v) {
    out_ += ' ';
    out_ += std::to_string(v);
    return *this;
  }
  RecordWriter& uinteger(std::uint64_t v) {
    out_ += ' ';
    out_ += std::to_string(v);
    return *this;
  }
  RecordWriter& word(std::string_view w) {
    out_ += ' ';
    out_ += w;
    return *this;
  }
  RecordWriter& vec(const Vector& v) {
    integer(v.size());
    for (Index i = 0; i < v.size(); ++i) num(v(i));
    return *this;
  }
  RecordWriter& record(const std::vector<double>& r) {
    integer(static_cast<std::int64_t>(r.size()));
    for (double v : r) num(v);
    return *this;
  }
  std::string str() const { return out_ + '\n'; }

 private:
  std::string out_;
};

class RecordReader {
 public:
  explicit RecordReader(std::string_view text) : in_(std::string(text)) {}

  void expect(std::string_view k) {
    const std::string tok = next();
    if (tok != k) throw std::invalid_argument("checkpoint: expected '" + std::string(k) + "', got '" + tok + "'");
  }
  std::string next() {
    std::string tok;
    if (!(in_ >> tok)) throw std::invalid_argument("checkpoint: unexpected end of record");
    return tok;
  }
  double num() {
    const std::string tok = next();
    double v = 0.0;
    auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) {
      throw std::invalid_argument("checkpoint: bad number '" + tok + "'");
    }
    return v;
  }
  std::int64_t integer() {
    const std::string tok = next();
    std::int64_t v = 0;
    auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) {
      throw std::invalid_argument("checkpoint: bad integer '" + tok + "'");
    }
    return v;
  }
  std::uint64_t uinteger() {
    const std::string tok = next();
    std::uint64_t v = 0;
    auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) {
      throw std::invalid_argument("checkpoint: bad integer '" + tok + "'");
    }
    return v;
  }
  Vector vec() {
    const auto n = integer();
    if (n < 0) throw std::invalid_argument("checkpoint: negative length");
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = num();
    return v;
  }
  std::vector<double> record() {
    const auto n = integer();
    if (n < 0) throw std::invalid_argument("checkpoint: negative length");
    std::vector<double> r(static_cast<std::size_t>(n));
    for (auto& v : r) v = num();
    return r;
  }

 private:
  std::istringstream in_;
};

void write_samples(RecordWriter& w, std::string_view key, const std::deque<Sample>& samples) {
  w.key(key).integer(static_cast<std::int64_t>(samples.size()));
  for (const auto& s : samples) w.key("sample").num(s.y).vec(s.x);
}

std::deque<Sample> read_samples(RecordReader& r, std::string_view key) {
  r.expect(key);
  const auto n = r.integer();
  std::deque<Sample> out;
  for (std::int64_t i = 0; i < n; ++i) {
    r.expect("sample");
    Sample s;
    s.y = r.num();
    s.x = r.vec();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

Vector ewma_step(const Vector& state, const Vector& x, std::int64_t t, double beta) {
  if (state.size() != x.size()) throw std::invalid_argument("ewma_step dimension mismatch");
  return step_ratio(t, beta) * state + alpha(t + 1, beta) * x;
}

// Estimator

Estimator::Estimator(LossModelPtr model, Regularizer reg, DecaySchedule schedule, SolverSettings settings)
    : model_(std::move(model)), reg_(std::move(reg)), schedule_(schedule), settings_(settings) {
  if (!model_) throw std::invalid_argument("estimator needs a loss model");
  if (schedule_.t() != 0) throw std::invalid_argument("estimator schedule must start at t = 0");
  if (settings_.max_iters < 1) throw std::invalid_argument("max_iters must be positive");
}

SolveSpec Estimator::base_spec() const {
  SolveSpec spec;
  spec.model = model_;
  spec.reg = reg_;
  spec.max_iters = settings_.max_iters;
  if (settings_.tolerance > 0.0) {
    spec.tolerance = settings_.tolerance;
  } else {
    const bool nonsmooth = reg_.on_precision_matrix() ||
                           (!reg_.smooth() && reg_.kind() != Regularizer::Kind::zero_sum);
    spec.tolerance = nonsmooth ? 1e-7 : 1e-8;
  }
  if (theta_.size() > 0) spec.warm_start = theta_;
  return spec;
}

const Vector& Estimator::finish(SolveSpec spec) {
  problem_ = std::move(spec);
  try {
    result_ = solve(problem_);
  } catch (const NumericalFailure& e) {
    throw NumericalFailure(e.what() + step_suffix(schedule_.t()));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(e.what() + step_suffix(schedule_.t()));
  }
  theta_ = result_.theta;
  return theta_;
}

// Naive

NaiveEwmm::NaiveEwmm(LossModelPtr model, Regularizer reg, DecaySchedule schedule, SolverSettings settings)
    : Estimator(std::move(model), std::move(reg), schedule, settings) {}

const Vector& NaiveEwmm::step(const Sample& x) {
  model_->validate(x);
  history_.push_back(x);
  schedule_.advance();
  const std::int64_t t = schedule_.t();
  SolveSpec spec = base_spec();
  spec.terms.reserve(history_.size());
  for (std::int64_t tau = 1; tau <= t; ++tau) {
    spec.terms.push_back({history_[static_cast<std::size_t>(tau - 1)], schedule_.weight(tau)});
  }
  return finish(std::move(spec));
}

// Quadratic recursion

QuadRecursiveEwmm::QuadRecursiveEwmm(LossModelPtr model, Regularizer reg, DecaySchedule schedule,
                                     SolverSettings settings)
    : Estimator(std::move(model), std::move(reg), schedule, settings),
      state_(QuadraticForm::zero(model_->param_dim())) {
  if (!model_->capabilities().has_quadratic_decomposition) {
    throw ConfigError(std::string(model_->id()) + " has no quadratic decomposition; use the naive or finite-memory estimator");
  }
}

const Vector& QuadRecursiveEwmm::step(const Sample& x) {
  const QuadraticForm incoming = model_->decompose(x);
  if (schedule_.t() == 0) {
    state_ = incoming;
  } else {
    state_ = qf_decay_add(state_, incoming, schedule_.t(), schedule_.beta());
  }
  schedule_.advance();
  SolveSpec spec = base_spec();
  spec.surrogate = state_;
  spec.shared_weight = 1.0;
  return finish(std::move(spec));
}

std::string QuadRecursiveEwmm::checkpoint() const {
  RecordWriter w;
  w.key("ewmm-checkpoint").integer(1).word("quad-recursive");
  w.key("t").integer(schedule_.t());
  w.key("beta").num(schedule_.beta());
  w.key("halflife").num(schedule_.halflife());
  w.key("state").record(state_.to_record());
  w.key("theta").vec(theta_);
  return w.str();
}

void QuadRecursiveEwmm::restore(std::string_view text) {
  RecordReader r(text);
  r.expect("ewmm-checkpoint");
  if (r.integer() != 1) throw std::invalid_argument("checkpoint: unsupported version");
  r.expect("quad-recursive");
  r.expect("t");
  const auto t = r.integer();
  r.expect("beta");
  const double beta = r.num();
  r.expect("halflife");
  r.num();
  r.expect("state");
  const auto rec = r.record();
  QuadraticForm state = QuadraticForm::from_record(rec);
  r.expect("theta");
  Vector theta = r.vec();
  if (state.dim() != model_->param_dim()) throw std::invalid_argument("checkpoint: dimension mismatch");

  schedule_ = DecaySchedule::from_beta(beta);
  schedule_.reset(t);
  state_ = std::move(state);
  theta_ = std::move(theta);
}

// Finite memory

std::string_view to_string(TailMode m) {
  switch (m) {
    case TailMode::taylor: return "taylor";
    case TailMode::fitted: return "fitted";
    case TailMode::none: return "none";
  }
  return "?";
}

TailMode tail_mode_from_string(std::string_view s) {
  if (s == "taylor") return TailMode::taylor;
  if (s == "fitted") return TailMode::fitted;
  if (s == "none") return TailMode::none;
  throw ConfigError("unknown tail mode '" + std::string(s) + "' (expected taylor, fitted or none)");
}

FiniteMemoryEwmm::FiniteMemoryEwmm(LossModelPtr model, Regularizer reg, DecaySchedule schedule,
                                   FiniteMemoryOptions opts, SolverSettings settings)
    : Estimator(std::move(model), std::move(reg), schedule, settings),
      opts_(opts),
      rng_(opts.seed, RngStream::tail_probes) {
  if (opts_.memory < 1) throw ConfigError("finite-memory window M must be at least 1");
  if (opts_.refresh_every < 1) throw ConfigError("refresh_every must be at least 1");
  if (!(opts_.epsilon >= 0.0)) throw ConfigError("probe epsilon must be nonnegative");
  const auto caps = model_->capabilities();
  if (opts_.mode == TailMode::taylor && !(caps.has_gradient && caps.has_hessian)) {
    throw ConfigError(std::string(model_->id()) +
                      " has no gradient/Hessian; the Taylor tail needs both (use the fitted tail)");
  }
  if (opts_.mode == TailMode::fitted) {
    if (opts_.tail_memory < 1) throw ConfigError("tail memory M_tail must be at least 1");
    const Index need = quadratic_coefficient_count(model_->param_dim());
    if (opts_.probes == 0) opts_.probes = static_cast<int>(3 * need);
    if (opts_.probes < need) {
      throw ConfigError("tail fitting needs at least " + std::to_string(need) + " probes");
    }
  }
}

void FiniteMemoryEwmm::fold_taylor(const Sample& leaving) {
  // leaving = x_{t-M-1}; its weight at time t is alpha_t beta^{M+1}.
  const std::int64_t t = schedule_.t();
  const Vector& center = theta_;
  const double value = model_->value(leaving, center);
  const Vector grad = model_->gradient(leaving, center);
  const SymMatrix hess = psd_project(SymMatrix::from_dense(model_->hessian(leaving, center)));
  const QuadraticForm approx = quadratic_about(center, value, grad, hess);
  const double w = schedule_.weight(t - opts_.memory - 1);
  if (tail_) {
    QuadraticForm next = step_ratio(t - 1, schedule_.beta()) * *tail_;
    next += w * approx;
    tail_ = std::move(next);
  } else {
    tail_ = w * approx;
  }
  ++diag_.folds;
}

namespace {

// A convex quadratic is bounded below iff its linear term lies in the range of P.
bool bounded_below(const QuadraticForm& q) {
  const SymEigen e = sym_eigendecomposition(q.P);
  const double top = std::max(0.0, e.values.size() ? e.values(0) : 0.0);
  const double scale = q.p.norm() + 1e-300;
  for (Index i = 0; i < e.values.size(); ++i) {
    if (e.values(i) > 1e-10 * top) continue;
    if (std::abs(e.vectors.col(i).dot(q.p)) > 1e-8 * scale) return false;
  }
  return true;
}

}  // namespace

Vector FiniteMemoryEwmm::draw_probe_center_scale(double& sigma) const {
  const double norm = theta_.norm();
  sigma = opts_.probe_scale == ProbeScale::norm_plus_epsilon ? norm + opts_.epsilon : 0.2 * norm + opts_.epsilon;
  return theta_;
}

void FiniteMemoryEwmm::refresh_fit() {
  const std::int64_t t = schedule_.t();
  const Index m = model_->param_dim();
  const auto nprobe = static_cast<std::size_t>(opts_.probes);
  double sigma = 0.0;
  const Vector center = draw_probe_center_scale(sigma);

  const auto ntail = static_cast<std::int64_t>(tail_window_.size());
  const std::int64_t first_tau = t - opts_.memory - ntail;
  std::vector<double> weights;
  weights.reserve(tail_window_.size());
  for (std::int64_t k = 0; k < ntail; ++k) weights.push_back(schedule_.weight(first_tau + k));

  probes_.clear();
  std::size_t draws = 0;
  while (probes_.size() < nprobe) {
    if (draws >= 100 * nprobe) {
      throw DomainSamplingError("no probe points inside the parameter domain after " + std::to_string(draws) +
                                " draws" + step_suffix(t));
    }
    // Antithetic pairs: each direction is probed on both sides of the center.
    Vector z(m);
    for (Index i = 0; i < m; ++i) z(i) = sigma * rng_.normal();
    ++draws;
    for (const Vector& u : {Vector(center + z), Vector(center - z)}) {
      if (probes_.size() == nprobe || !model_->in_domain(u) || !reg_.in_domain(u)) continue;
      double v = 0.0;
      for (std::size_t k = 0; k < tail_window_.size(); ++k) v += weights[k] * model_->value(tail_window_[k], u);
      probes_.push_back({u, v});
    }
  }

  try {
    QuadraticFit fit = fit_quadratic(probes_, m);
    if (!bounded_below(fit.form)) throw RankDeficient("fitted tail is unbounded below");
    tail_ = std::move(fit.form);
    diag_.residual_rms = fit.residual_rms;
  } catch (const RankDeficient&) {
    if (tail_) tail_ = step_ratio(t - 1, schedule_.beta()) * *tail_;
    ++diag_.fallbacks;
  }
}

const Vector& FiniteMemoryEwmm::step(const Sample& x) {
  model_->validate(x);
  schedule_.advance();
  const std::int64_t t = schedule_.t();
  const auto window_cap = static_cast<std::size_t>(opts_.memory) + 1;

  window_.push_back(x);
  bool refit = false;
  if (window_.size() > window_cap) {
    Sample leaving = std::move(window_.front());
    window_.pop_front();
    switch (opts_.mode) {
      case TailMode::taylor:
        fold_taylor(leaving);
        break;
      case TailMode::none:
        diag_.discarding = true;
        break;
      case TailMode::fitted:
        tail_window_.push_back(std::move(leaving));
        if (tail_window_.size() > static_cast<std::size_t>(opts_.tail_memory)) {
          tail_window_.pop_front();
          diag_.discarding = true;
          ++diag_.folds;
          refit = true;
        }
        break;
    }
  }

  if (refit) {
    // folds counts steps since discarding began.
    if (!tail_ || (diag_.folds - 1) % opts_.refresh_every == 0) {
      refresh_fit();
    } else {
      tail_ = step_ratio(t - 1, schedule_.beta()) * *tail_;
    }
  }

  SolveSpec spec = base_spec();
  const bool exact_tail = opts_.mode == TailMode::fitted && !diag_.discarding;
  const std::size_t n = window_.size() + (exact_tail ? tail_window_.size() : 0);
  spec.terms.reserve(n);
  std::int64_t tau = t - static_cast<std::int64_t>(n) + 1;
  if (exact_tail) {
    for (const auto& s : tail_window_) spec.terms.push_back({s, schedule_.weight(tau++)});
  }
  for (const auto& s : window_) spec.terms.push_back({s, schedule_.weight(tau++)});
  if (tail_ && !exact_tail) spec.surrogate = *tail_;
  return finish(std::move(spec));
}

std::string FiniteMemoryEwmm::checkpoint() const {
  RecordWriter w;
  w.key("ewmm-checkpoint").integer(1).word("finite-memory");
  w.key("t").integer(schedule_.t());
  w.key("beta").num(schedule_.beta());
  w.key("halflife").num(schedule_.halflife());
  w.key("mode").word(to_string(opts_.mode));
  w.key("memory").integer(opts_.memory).integer(opts_.tail_memory).integer(opts_.probes);
  w.key("probe").num(opts_.epsilon).integer(static_cast<int>(opts_.probe_scale)).integer(opts_.refresh_every);
  w.key("rng").uinteger(opts_.seed).uinteger(rng_.counter());
  w.key("diag").integer(diag_.folds).integer(diag_.fallbacks).integer(diag_.discarding ? 1 : 0).num(diag_.residual_rms);
  if (tail_) {
    w.key("tail").integer(1).record(tail_->to_record());
  } else {
    w.key("tail").integer(0);
  }
  w.key("theta").vec(theta_);
  write_samples(w, "window", window_);
  write_samples(w, "tail-window", tail_window_);
  return w.str();
}

void FiniteMemoryEwmm::restore(std::string_view text) {
  RecordReader r(text);
  r.expect("ewmm-checkpoint");
  if (r.integer() != 1) throw std::invalid_argument("checkpoint: unsupported version");
  r.expect("finite-memory");
  r.expect("t");
  const auto t = r.integer();
  r.expect("beta");
  const double beta = r.num();
  r.expect("halflife");
  r.num();
  r.expect("mode");
  FiniteMemoryOptions opts;
  opts.mode = tail_mode_from_string(r.next());
  r.expect("memory");
  opts.memory = static_cast<int>(r.integer());
  opts.tail_memory = static_cast<int>(r.integer());
  opts.probes = static_cast<int>(r.integer());
  r.expect("probe");
  opts.epsilon = r.num();
  opts.probe_scale = static_cast<ProbeScale>(r.integer());
  opts.refresh_every = static_cast<int>(r.integer());
  r.expect("rng");
  opts.seed = r.uinteger();
  const auto counter = r.uinteger();
  r.expect("diag");
  TailDiagnostics diag;
  diag.folds = static_cast<int>(r.integer());
  diag.fallbacks = static_cast<int>(r.integer());
  diag.discarding = r.integer() != 0;
  diag.residual_rms = r.num();
  r.expect("tail");
  std::optional<QuadraticForm> tail;
  if (r.integer() != 0) {
    const auto rec = r.record();
    tail = QuadraticForm::from_record(rec);
    if (tail->dim() != model_->param_dim()) throw std::invalid_argument("checkpoint: dimension mismatch");
  }
  r.expect("theta");
  Vector theta = r.vec();
  auto window = read_samples(r, "window");
  auto tail_window = read_samples(r, "tail-window");

  schedule_ = DecaySchedule::from_beta(beta);
  schedule_.reset(t);
  opts_ = opts;
  rng_ = CounterRng(opts.seed, RngStream::tail_probes);
  rng_.set_counter(counter);
  diag_ = diag;
  tail_ = std::move(tail);
  theta_ = std::move(theta);
  window_ = std::move(window);
  tail_window_ = std::move(tail_window);
}

}  // namespace ewmm
