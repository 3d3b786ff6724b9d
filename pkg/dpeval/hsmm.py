"""HDP-HSMM

Weak limit HDP-HSMM Gibbs sampler over standardized (v, a) observations. A
vehicle's trips are segmented jointly: all trips share one set of states and
parameters, but message passing and state sampling run per trip so trip
boundaries are never bridged.

The model, with L states:

* beta ~ Dir(gamma/L, ..., gamma/L), pi_i ~ Dir(alpha * beta + kappa * e_i)
* pi_bar is pi with the self transitions removed and rows renormalized
* (mean_i, cov_i) ~ NIW(mu0, lambda0, psi, nu0)
* D - 1 ~ Poisson(rate_i), rate_i ~ Gamma(a, b)
* the first super-state of a trip is drawn from beta, the next ones from pi_bar

Durations are censored at d_max: a piece of d_max steps has weight
P(D > d_max) and is followed by another piece of the same state. The pieces
are merged after sampling, so a super-state may be longer than d_max. The
final segment of a trip is right censored: its likelihood uses P(D >= d)
instead of P(D = d).
"""

import logging
from collections import namedtuple

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp

from dpeval import rng as rngs
from dpeval.exceptions import ConfigError, DataError, EmptyInput, NumericalFailure

DIM = 2
SPD_JITTER = 1e-8
SPD_RETRIES = 3
MIN_PROB = np.finfo(float).tiny
MIN_RATE = 1e-10

Messages = namedtuple('Messages', ['B', 'Bstar', 'cum_loglik', 'log_pmf', 'log_sf', 'log_tail'])


class NiwPrior(object):
    """Normal-inverse-Wishart prior of the Gaussian emissions."""

    def __init__(self, **kwargs):
        self.mu0 = np.asarray(kwargs.get('mu0', np.zeros(DIM)), dtype=float)
        self.lambda0 = float(kwargs.get('lambda0', 0.25))
        self.psi = np.asarray(kwargs.get('psi', 0.2 * np.eye(DIM)), dtype=float)
        self.nu0 = float(kwargs.get('nu0', 5.0))

    @property
    def dim(self):
        return self.mu0.shape[0]

    def validate(self):
        if self.psi.shape != (self.dim, self.dim):
            raise ConfigError("niw.psi must be a %dx%d matrix" % (self.dim, self.dim))
        if not np.allclose(self.psi, self.psi.T):
            raise ConfigError("niw.psi must be symmetric")
        try:
            np.linalg.cholesky(self.psi)
        except np.linalg.LinAlgError:
            raise ConfigError("niw.psi must be positive definite")
        if not self.lambda0 > 0:
            raise ConfigError("niw.lambda0 must be > 0")
        if not self.nu0 > self.dim + 1:
            raise ConfigError("niw.nu0 must be > %d" % (self.dim + 1))
        return self

    def to_dict(self):
        return {'mu0': self.mu0.tolist(), 'lambda0': self.lambda0, 'psi': self.psi.tolist(), 'nu0': self.nu0}

    @classmethod
    def from_dict(cls, data):
        return cls(**(data or {}))


class DurationPrior(object):
    """Gamma(a, b) prior (shape, rate) on the mean of the shifted Poisson durations."""

    def __init__(self, **kwargs):
        self.family = kwargs.get('family', 'poisson')
        self.a = float(kwargs.get('a', 2.0))
        self.b = float(kwargs.get('b', 0.1))

    def validate(self):
        if self.family != 'poisson':
            raise ConfigError("only poisson durations are supported, got %s" % self.family)
        if not (self.a > 0 and self.b > 0):
            raise ConfigError("dur.a and dur.b must be > 0")
        return self

    def to_dict(self):
        return {'family': self.family, 'a': self.a, 'b': self.b}

    @classmethod
    def from_dict(cls, data):
        return cls(**(data or {}))


class HsmmHyperParams(object):
    """Hyper-parameters of the sampler.

    Passing hp=<HsmmHyperParams> copies all values from that object, any other
    keyword argument overrides the copied value.
    """

    def __init__(self, **kwargs):
        base = kwargs.get('hp')
        if base is not None:
            values = base.to_dict()
            values.update((k, v) for k, v in kwargs.items() if k != 'hp')
            kwargs = values
        self.gamma = float(kwargs.get('gamma', 6.0))
        self.alpha = float(kwargs.get('alpha', 6.0))
        self.kappa_sticky = float(kwargs.get('kappa_sticky', 0.0))
        self.L = int(kwargs.get('L', 40))
        self.d_max = int(kwargs.get('d_max', 300))
        self.sweeps = int(kwargs.get('sweeps', 200))
        self.seed = rngs.check_seed(kwargs.get('seed', 0))
        niw = kwargs.get('niw')
        self.niw = niw if isinstance(niw, NiwPrior) else NiwPrior.from_dict(niw)
        dur = kwargs.get('dur')
        self.dur = dur if isinstance(dur, DurationPrior) else DurationPrior.from_dict(dur)

    def validate(self):
        if not (self.gamma > 0 and self.alpha > 0):
            raise ConfigError("hsmm.gamma and hsmm.alpha must be > 0")
        if self.kappa_sticky < 0:
            raise ConfigError("hsmm.kappa_sticky must be >= 0")
        if self.L < 2:
            raise ConfigError("hsmm.L must be >= 2")
        if self.d_max < 1:
            raise ConfigError("hsmm.d_max must be >= 1")
        if self.sweeps < 1:
            raise ConfigError("hsmm.sweeps must be >= 1")
        self.niw.validate()
        self.dur.validate()
        return self

    def to_dict(self):
        return {
            'gamma': self.gamma,
            'alpha': self.alpha,
            'kappa_sticky': self.kappa_sticky,
            'L': self.L,
            'd_max': self.d_max,
            'sweeps': self.sweeps,
            'seed': self.seed,
            'niw': self.niw.to_dict(),
            'dur': self.dur.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**(data or {}))


class GaussianEmission(object):
    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        self.cov = np.asarray(cov, dtype=float)

    def to_dict(self):
        return {'mean': self.mean.tolist(), 'cov': self.cov.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(data['mean'], data['cov'])


class DurationParams(object):
    """Mean of the shifted Poisson duration, D - 1 ~ Poisson(rate)."""

    def __init__(self, rate):
        self.rate = float(rate)

    def to_dict(self):
        return {'rate': self.rate}

    @classmethod
    def from_dict(cls, data):
        return cls(data['rate'])


class PosteriorSample(object):
    """Snapshot of the latent structure after one Gibbs sweep.

    super_states and label_seqs hold one entry per trip; super_states[r] is a
    list of (state, duration) pairs whose expansion is label_seqs[r].
    """

    def __init__(self, beta, pi, pi_bar, emissions, durations, super_states, label_seqs):
        self.beta = np.asarray(beta, dtype=float)
        self.pi = np.asarray(pi, dtype=float)
        self.pi_bar = np.asarray(pi_bar, dtype=float)
        self.emissions = list(emissions)
        self.durations = list(durations)
        self.super_states = [[(int(z), int(d)) for z, d in trip] for trip in super_states]
        self.label_seqs = [np.asarray(labels, dtype=int) for labels in label_seqs]

    @property
    def num_states(self):
        return len(self.beta)

    def used_states(self):
        """Sorted ids of the states with at least one assigned step."""
        if not self.label_seqs:
            return []
        return sorted(int(s) for s in np.unique(np.concatenate(self.label_seqs)))

    def check(self):
        """Raise NumericalFailure if a structural invariant does not hold."""
        L = self.num_states
        problems = []
        if self.pi.shape != (L, L) or self.pi_bar.shape != (L, L):
            problems.append("transition matrices are not %dx%d" % (L, L))
        elif L > 1:
            if not np.allclose(self.pi.sum(axis=1), 1.0, atol=1e-9, rtol=0):
                problems.append("pi rows do not sum to 1")
            if np.any(np.diag(self.pi_bar) != 0):
                problems.append("pi_bar has self transitions")
            if not np.allclose(self.pi_bar.sum(axis=1), 1.0, atol=1e-9, rtol=0):
                problems.append("pi_bar rows do not sum to 1")
        for r, (trip, labels) in enumerate(zip(self.super_states, self.label_seqs)):
            if sum(d for _, d in trip) != len(labels):
                problems.append("trip %d: durations do not sum to T" % r)
                continue
            if not np.array_equal(expand_super_states(trip), labels):
                problems.append("trip %d: label sequence does not expand the super-states" % r)
            if any(a[0] == b[0] for a, b in zip(trip, trip[1:])):
                problems.append("trip %d: consecutive super-states repeat" % r)
            if any(d < 1 for _, d in trip):
                problems.append("trip %d: empty super-state" % r)
        if problems:
            raise NumericalFailure("; ".join(problems))
        return self

    def to_dict(self):
        return {
            'beta': self.beta.tolist(),
            'pi': self.pi.tolist(),
            'pi_bar': self.pi_bar.tolist(),
            'emissions': [e.to_dict() for e in self.emissions],
            'durations': [d.to_dict() for d in self.durations],
            'super_states': [[[z, d] for z, d in trip] for trip in self.super_states],
            'label_seqs': [labels.tolist() for labels in self.label_seqs],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data['beta'], data['pi'], data['pi_bar'],
                   [GaussianEmission.from_dict(e) for e in data['emissions']],
                   [DurationParams.from_dict(d) for d in data['durations']],
                   data['super_states'], data['label_seqs'])


def expand_super_states(super_states):
    """Per step labels of a list of (state, duration) pairs."""
    if not super_states:
        return np.zeros(0, dtype=int)
    states, durations = zip(*super_states)
    return np.repeat(np.asarray(states, dtype=int), np.asarray(durations, dtype=int))


def run_lengths(labels):
    """Inverse of expand_super_states: list of (state, duration) of a label sequence."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        return []
    change = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [len(labels)]))
    return [(int(labels[s]), int(e - s)) for s, e in zip(starts, ends)]


# ----------------------------------------------------------------------
# numerical helpers
# ----------------------------------------------------------------------
def repair_spd(matrix, what="matrix"):
    """Return matrix, with up to SPD_RETRIES jitters of SPD_JITTER * I added until it is SPD."""
    matrix = 0.5 * (np.asarray(matrix, dtype=float) + np.asarray(matrix, dtype=float).T)
    for attempt in range(SPD_RETRIES + 1):
        try:
            np.linalg.cholesky(matrix)
            if attempt:
                logging.getLogger(__name__).debug("%s needed %d jitter(s) to be positive definite", what, attempt)
            return matrix
        except np.linalg.LinAlgError:
            if attempt == SPD_RETRIES:
                break
            matrix = matrix + SPD_JITTER * np.eye(matrix.shape[0])
    raise NumericalFailure("%s is not positive definite after %d jitters" % (what, SPD_RETRIES))


def sample_dirichlet(params, rng):
    """Dirichlet draw with every component floored at the smallest positive float."""
    params = np.asarray(params, dtype=float)
    draw = rng.standard_gamma(params)
    total = draw.sum()
    if not total > 0:
        draw = np.zeros_like(params)
        draw[np.argmax(params)] = 1.0
        total = 1.0
    draw = np.maximum(draw / total, MIN_PROB)
    return draw / draw.sum()


def dirichlet_logpdf(x, params):
    x = np.maximum(np.asarray(x, dtype=float), MIN_PROB)
    params = np.asarray(params, dtype=float)
    return float(gammaln(params.sum()) - gammaln(params).sum() + np.sum((params - 1.0) * np.log(x)))


def _sample_log(logits, rng):
    """Index drawn with probability proportional to exp(logits)."""
    top = np.max(logits)
    if not np.isfinite(top):
        raise NumericalFailure("no feasible choice while sampling")
    weights = np.exp(logits - top)
    cumulative = np.cumsum(weights)
    choice = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side='right'))
    return min(choice, len(weights) - 1)


def pi_bar_from(pi):
    """Remove the self transitions of pi and renormalize the rows."""
    pi = np.asarray(pi, dtype=float)
    if pi.shape[0] == 1:
        return np.zeros((1, 1))
    pi_bar = pi.copy()
    np.fill_diagonal(pi_bar, 0.0)
    return pi_bar / pi_bar.sum(axis=1, keepdims=True)


def emission_log_likelihoods(obs, emissions):
    """(T, L) table of log f(y_t | theta_i)."""
    obs = np.atleast_2d(obs)
    return np.column_stack([np.atleast_1d(stats.multivariate_normal.logpdf(obs, e.mean, e.cov))
                            for e in emissions])


def duration_tables(durations, d_max):
    """Duration tables of the L states.

    Returns (log_pmf, log_sf, log_tail): (d_max, L) tables of log P(D = d)
    and log P(D >= d) in row d - 1, and the (L,) log P(D > d_max) of a
    piece censored at d_max.
    """
    rates = np.array([max(d.rate, MIN_RATE) for d in durations])
    shifted = np.arange(d_max)[:, None]
    log_pmf = stats.poisson.logpmf(shifted, rates[None, :])
    log_sf = stats.poisson.logsf(shifted - 1, rates[None, :])
    log_tail = stats.poisson.logsf(d_max - 1, rates)
    return log_pmf, log_sf, log_tail


def segment_log_duration(duration, state, last, tables, d_max):
    """Log duration weight of a merged super-state.

    A super-state longer than d_max is scored as censored pieces of d_max
    steps followed by a closing piece of 1..d_max steps.
    """
    log_pmf, log_sf, log_tail = tables
    pieces = (duration - 1) // d_max
    rest = duration - pieces * d_max
    closing = log_sf[rest - 1, state] if last else log_pmf[rest - 1, state]
    return pieces * log_tail[state] + closing


# ----------------------------------------------------------------------
# message passing and state sampling
# ----------------------------------------------------------------------
def backward_messages(pi_bar, emissions, durations, obs, d_max):
    """HSMM backward messages of one trip in log space.

    B[t, i] is the log probability of the observations after t given that a
    segment of state i ends at t; Bstar[t, i] the log probability of the
    observations from t on given that a segment of state i starts at t.
    A segment that reaches d_max steps is censored and continues in the same
    state, so Bstar also holds the P(D > d_max) term that restarts state i
    at t + d_max.

    Keyword arguments:
    pi_bar -- (L, L) transition matrix without self transitions
    emissions -- L GaussianEmission
    durations -- L DurationParams
    obs -- (T, 2) standardized observations of the trip
    d_max -- largest duration considered
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    T = obs.shape[0]
    L = len(emissions)
    aBl = emission_log_likelihoods(obs, emissions)
    cum = np.vstack((np.zeros((1, L)), np.cumsum(aBl, axis=0)))
    log_pmf, log_sf, log_tail = duration_tables(durations, d_max)

    B = np.zeros((T, L))
    Bstar = np.zeros((T, L))
    with np.errstate(divide='ignore'):
        log_trans = np.log(np.asarray(pi_bar, dtype=float))
        for t in range(T - 1, -1, -1):
            D = min(d_max, T - t)
            terms = B[t:t + D] + (cum[t + 1:t + D + 1] - cum[t]) + log_pmf[:D]
            if T - t <= d_max:
                terms[D - 1] = cum[T] - cum[t] + log_sf[D - 1]
            else:
                censored = Bstar[t + d_max] + cum[t + d_max] - cum[t] + log_tail
                terms = np.vstack((terms, censored))
            Bstar[t] = logsumexp(terms, axis=0)
            if t > 0:
                B[t - 1] = logsumexp(Bstar[t][None, :] + log_trans, axis=1)
    return Messages(B, Bstar, cum, log_pmf, log_sf, log_tail)


def log_likelihood(messages, pi_0):
    """Marginal log likelihood of a trip from its messages and initial distribution."""
    with np.errstate(divide='ignore'):
        return float(logsumexp(np.log(pi_0) + messages.Bstar[0]))


def sample_super_states(messages, pi_bar, pi_0, rng):
    """Draw the super-state sequence of a trip from its backward messages.

    Pieces censored at d_max are merged with the piece of the same state
    that follows, so consecutive super-states never repeat.

    Returns (list of (state, duration), per step labels).
    """
    B, Bstar, cum, log_pmf, log_sf, log_tail = messages
    T, L = B.shape
    d_max = log_pmf.shape[0]
    labels = np.empty(T, dtype=int)

    with np.errstate(divide='ignore'):
        log_next = np.log(np.asarray(pi_0, dtype=float))
        log_trans = np.log(np.asarray(pi_bar, dtype=float))
        idx = 0
        while idx < T:
            state = _sample_log(log_next + Bstar[idx], rng)
            D = min(d_max, T - idx)
            logits = B[idx:idx + D, state] + cum[idx + 1:idx + D + 1, state] - cum[idx, state] + log_pmf[:D, state]
            if T - idx <= d_max:
                logits[D - 1] = cum[T, state] - cum[idx, state] + log_sf[D - 1, state]
            else:
                censored = Bstar[idx + d_max, state] + cum[idx + d_max, state] - cum[idx, state] + log_tail[state]
                logits = np.append(logits, censored)
            choice = _sample_log(logits, rng)
            duration = min(choice + 1, d_max)
            labels[idx:idx + duration] = state
            if choice == D:
                # censored piece, the same state carries on
                log_next = np.full(L, -np.inf)
                log_next[state] = 0.0
            else:
                log_next = log_trans[state]
            idx += duration
    return run_lengths(labels), labels


# ----------------------------------------------------------------------
# parameter updates
# ----------------------------------------------------------------------
def niw_posterior(niw, data):
    """Conjugate update of a NiwPrior with the rows of data."""
    data = np.reshape(np.asarray(data, dtype=float), (-1, niw.dim))
    n = data.shape[0]
    if n == 0:
        return niw
    ybar = data.mean(axis=0)
    centered = data - ybar
    lambda_n = niw.lambda0 + n
    diff = ybar - niw.mu0
    psi = niw.psi + centered.T.dot(centered) + (niw.lambda0 * n / lambda_n) * np.outer(diff, diff)
    return NiwPrior(mu0=(niw.lambda0 * niw.mu0 + n * ybar) / lambda_n, lambda0=lambda_n,
                    psi=0.5 * (psi + psi.T), nu0=niw.nu0 + n)


def sample_niw(niw, rng, what="emission"):
    """Draw (mean, cov) from a NiwPrior."""
    scale = repair_spd(niw.psi, "%s scale" % what)
    cov = np.atleast_2d(stats.invwishart.rvs(df=niw.nu0, scale=scale, random_state=rng))
    cov = repair_spd(cov, "%s covariance" % what)
    chol = np.linalg.cholesky(cov / niw.lambda0)
    mean = niw.mu0 + chol.dot(rng.standard_normal(niw.dim))
    return GaussianEmission(mean, cov)


def resample_emissions(label_seq, obs, niw, rng, num_states):
    """Draw the L Gaussian emissions given the labels.

    States without data draw from the prior.

    Keyword arguments:
    label_seq -- per step labels, an array or a list with one array per trip
    obs -- observations matching label_seq
    niw -- NiwPrior
    rng -- numpy Generator
    num_states -- L
    """
    labels = np.concatenate([np.atleast_1d(x) for x in label_seq]) if isinstance(label_seq, list) \
        else np.asarray(label_seq)
    data = np.vstack(obs) if isinstance(obs, list) else np.atleast_2d(obs)
    if len(labels) != len(data):
        raise ValueError("labels and observations differ in length")
    return [sample_niw(niw_posterior(niw, data[labels == state]), rng, "state %d" % state)
            for state in range(num_states)]


def duration_posterior(dur, durations):
    """(shape, rate) of the Gamma posterior of the Poisson mean given observed durations D >= 1."""
    durations = np.asarray(durations, dtype=float)
    return dur.a + np.sum(durations - 1.0), dur.b + len(durations)


def resample_durations(super_states, dur, rng, num_states, censor_last=True):
    """Draw the L duration parameters given the super-states.

    The super-states are merged, so a segment longer than d_max enters the
    update with its full duration. The final segment of each trip is right
    censored and, with censor_last, does not enter the update. States
    without segments draw from the prior.

    Keyword arguments:
    super_states -- list with one list of (state, duration) per trip
    dur -- DurationPrior
    rng -- numpy Generator
    num_states -- L
    censor_last -- leave out the last segment of every trip
    """
    observed = [[] for _ in range(num_states)]
    for trip in super_states:
        segments = trip[:-1] if censor_last else trip
        for state, duration in segments:
            observed[state].append(duration)
    result = []
    for state in range(num_states):
        shape, rate = duration_posterior(dur, observed[state])
        result.append(DurationParams(max(rng.gamma(shape, 1.0 / rate), MIN_RATE)))
    return result


def transition_counts(super_states, num_states):
    """(L, L) counts of super-state transitions within trips and (L,) counts of first states."""
    counts = np.zeros((num_states, num_states), dtype=np.int64)
    first = np.zeros(num_states, dtype=np.int64)
    for trip in super_states:
        if not trip:
            continue
        first[trip[0][0]] += 1
        for (a, _), (b, _) in zip(trip, trip[1:]):
            counts[a, b] += 1
    return counts, first


def sample_transition_rows(beta, counts, alpha, kappa_sticky, rng):
    """pi_i ~ Dir(alpha * beta + kappa * e_i + counts_i) for every row i."""
    L = len(beta)
    pi = np.empty((L, L))
    for i in range(L):
        params = alpha * np.asarray(beta) + np.asarray(counts[i], dtype=float)
        params[i] += kappa_sticky
        pi[i] = sample_dirichlet(params, rng)
    return pi


def resample_transitions_and_beta(super_states, num_states, gamma, alpha, kappa_sticky, rng, beta=None, pi=None):
    """Weak limit resampling of beta and the transition rows.

    The HSMM never observes self transitions; they are restored by data
    augmentation (for every transition out of i, a geometric number of
    rejected self transitions with probability pi_ii) before the Chinese
    restaurant table counts for beta are drawn.

    Keyword arguments:
    super_states -- list with one list of (state, duration) per trip
    num_states -- L
    gamma, alpha, kappa_sticky -- concentrations
    rng -- numpy Generator
    beta, pi -- current values, drawn from the prior when None

    Returns (beta, pi, pi_bar)
    """
    L = num_states
    if beta is None:
        beta = sample_dirichlet(np.full(L, gamma / L), rng)
    if pi is None:
        pi = sample_transition_rows(beta, np.zeros((L, L)), alpha, kappa_sticky, rng)

    counts, first = transition_counts(super_states, L)
    augmented = counts.copy()
    leaving = counts.sum(axis=1)
    for i in range(L):
        if leaving[i] > 0:
            stay = min(pi[i, i], 1.0 - 1e-12)
            augmented[i, i] += rng.negative_binomial(leaving[i], 1.0 - stay)

    tables = np.zeros((L, L), dtype=np.int64)
    for i, j in zip(*np.nonzero(augmented)):
        conc = alpha * beta[j] + (kappa_sticky if i == j else 0.0)
        n = int(augmented[i, j])
        tables[i, j] = int(np.sum(rng.random(n) < conc / (conc + np.arange(n))))
    if kappa_sticky > 0:
        rho = kappa_sticky / (alpha + kappa_sticky)
        for i in range(L):
            if tables[i, i] > 0:
                tables[i, i] -= rng.binomial(tables[i, i], rho / (rho + beta[i] * (1.0 - rho)))

    beta = sample_dirichlet(gamma / L + tables.sum(axis=0) + first, rng)
    pi = sample_transition_rows(beta, augmented, alpha, kappa_sticky, rng)
    return beta, pi, pi_bar_from(pi)


# ----------------------------------------------------------------------
# the sampler
# ----------------------------------------------------------------------
def _prepare(obs):
    trips = [np.atleast_2d(np.asarray(o, dtype=float)) for o in obs]
    if not trips or any(t.shape[0] < 1 for t in trips):
        raise EmptyInput("every trip needs at least one observation")
    if any(t.shape[1] != DIM for t in trips):
        raise DataError("observations must be (T, %d) arrays" % DIM)
    if sum(t.shape[0] for t in trips) < 10:
        raise EmptyInput("at least 10 observations are needed")
    if any(not np.all(np.isfinite(t)) for t in trips):
        raise DataError("observations must be finite")
    return trips


def fit(obs, hp, key=(), trip_ids=None):
    """Run the Gibbs sampler and return the PosteriorSample of the final sweep.

    Keyword arguments:
    obs -- list with one (T_r, 2) array of standardized observations per trip
    hp -- HsmmHyperParams
    key -- names added to the random streams, normally (vehicle_id,)
    trip_ids -- names of the trips for the random streams, defaults to the index
    """
    logger = logging.getLogger(__name__)
    hp.validate()
    trips = _prepare(obs)
    if trip_ids is None:
        trip_ids = [str(r) for r in range(len(trips))]
    key = tuple(key)
    L = hp.L

    init = rngs.derive(hp.seed, *(key + ('init',)))
    beta, pi, pi_bar = resample_transitions_and_beta([], L, hp.gamma, hp.alpha, hp.kappa_sticky, init)
    emissions = [sample_niw(hp.niw, init, "state %d" % state) for state in range(L)]
    durations = [DurationParams(max(init.gamma(hp.dur.a, 1.0 / hp.dur.b), MIN_RATE)) for _ in range(L)]

    sample = None
    for sweep in range(hp.sweeps):
        super_states, label_seqs = [], []
        for trip_id, trip in zip(trip_ids, trips):
            stream = rngs.derive(hp.seed, *(key + ('states', trip_id, sweep)))
            messages = backward_messages(pi_bar, emissions, durations, trip, hp.d_max)
            trip_states, labels = sample_super_states(messages, pi_bar, beta, stream)
            super_states.append(trip_states)
            label_seqs.append(labels)

        stream = rngs.derive(hp.seed, *(key + ('params', sweep)))
        emissions = resample_emissions(label_seqs, trips, hp.niw, stream, L)
        durations = resample_durations(super_states, hp.dur, stream, L)
        beta, pi, pi_bar = resample_transitions_and_beta(super_states, L, hp.gamma, hp.alpha, hp.kappa_sticky,
                                                         stream, beta, pi)
        sample = PosteriorSample(beta, pi, pi_bar, emissions, durations, super_states, label_seqs)
        sample.check()
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug("%s sweep %d : %d used states, log joint %.3f", "/".join(str(k) for k in key) or "-",
                         sweep, len(sample.used_states()), log_joint(sample, trips, hp))
    return sample


def log_joint(sample, obs, hp):
    """Joint log density of a PosteriorSample and the observations.

    Computed independently of the sampler, used as a regression check.
    """
    L = sample.num_states
    total = dirichlet_logpdf(sample.beta, np.full(L, hp.gamma / L))
    for i in range(L):
        params = hp.alpha * sample.beta
        params[i] += hp.kappa_sticky
        total += dirichlet_logpdf(sample.pi[i], params)
    for e in sample.emissions:
        total += stats.invwishart.logpdf(e.cov, df=hp.niw.nu0, scale=hp.niw.psi)
        total += stats.multivariate_normal.logpdf(e.mean, hp.niw.mu0, e.cov / hp.niw.lambda0)
    for d in sample.durations:
        total += stats.gamma.logpdf(d.rate, hp.dur.a, scale=1.0 / hp.dur.b)

    tables = duration_tables(sample.durations, hp.d_max)
    with np.errstate(divide='ignore'):
        log_beta = np.log(np.maximum(sample.beta, MIN_PROB))
        log_trans = np.log(np.maximum(sample.pi_bar, MIN_PROB))
    for trip, labels, y in zip(sample.super_states, sample.label_seqs, obs):
        y = np.atleast_2d(y)
        total += log_beta[trip[0][0]]
        for (a, _), (b, _) in zip(trip, trip[1:]):
            total += log_trans[a, b]
        for s, (state, duration) in enumerate(trip):
            total += segment_log_duration(duration, state, s == len(trip) - 1, tables, hp.d_max)
        loglik = emission_log_likelihoods(y, sample.emissions)
        total += loglik[np.arange(len(labels)), labels].sum()
    return float(total)
