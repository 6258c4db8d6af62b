"""Monte Carlo checks of the threshold-pruning guarantee on synthetic gradients.

Each arm ``i`` receives i.i.d. bounded increments ``g_{t,i}`` with known mean
``mu_i`` and ``|g| <= eta_L``.  Its architecture weight is the running sum
``alpha_{t,i} = sum_{s<=t} g_{s,i}``, and at every step arms whose Gibbs weight
under the theoretical temperature falls below the theoretical threshold are
dropped.  A trial fails when the arm with the largest mean is dropped.

Gibbs weights and thresholds are compared in log space: ``theta_t = nu_t e^-t``
underflows double precision after a few hundred steps, long before a trial with
a small gap has separated its arms.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .schedules import ScheduleState

NOISE_LAWS = ("uniform", "clipped_gaussian", "none")


@dataclass(frozen=True)
class GradientStream:
    """Bounded i.i.d. increments with exact per-arm means.

    Noise around ``mu_i`` is symmetric and supported on ``[-w_i, w_i]`` with
    ``w_i = eta_L - |mu_i|``, so every draw lies in ``[-eta_L, eta_L]`` and the
    mean is exactly ``mu_i``.  ``clipped_gaussian`` clips ``sigma * Z`` to that
    interval.  ``perm`` relabels arms: output column ``k`` carries the draws of
    underlying arm ``perm[k]``.
    """

    means: tuple[float, ...]
    eta_L: float = 1.0
    noise: str = "uniform"
    sigma: float = 0.5
    seed: int = 0
    perm: tuple[int, ...] | None = None

    def __post_init__(self):
        mu = np.asarray(self.means, dtype=np.float64)
        if mu.ndim != 1 or len(mu) < 2:
            raise ValueError(f"need at least 2 arms, got means={self.means}")
        if not self.eta_L > 0:
            raise ValueError(f"eta_L must be positive, got {self.eta_L}")
        if np.any(np.abs(mu) > self.eta_L):
            raise ValueError(f"|mu_i| must not exceed eta_L={self.eta_L}")
        if self.noise not in NOISE_LAWS:
            raise ValueError(f"unknown noise law {self.noise!r}; choose from {NOISE_LAWS}")
        if self.perm is not None and sorted(self.perm) != list(range(len(mu))):
            raise ValueError(f"perm must be a permutation of 0..{len(mu) - 1}")

    @classmethod
    def with_gap(cls, N: int, gap: float, **kw) -> "GradientStream":
        """Arm 0 at +gap/2, all others at -gap/2."""
        return cls(tuple([gap / 2] + [-gap / 2] * (N - 1)), **kw)

    @property
    def N(self) -> int:
        return len(self.means)

    @property
    def mu(self) -> np.ndarray:
        mu = np.asarray(self.means, dtype=np.float64)
        return mu if self.perm is None else mu[list(self.perm)]

    @property
    def best(self) -> int:
        mu = self.mu
        top = np.flatnonzero(mu == mu.max())
        if len(top) != 1:
            raise ValueError(f"best arm is not unique: means {mu.tolist()}")
        return int(top[0])

    def permuted(self, perm) -> "GradientStream":
        return GradientStream(self.means, self.eta_L, self.noise, self.sigma, self.seed,
                              tuple(int(p) for p in perm))

    def generator(self, trial: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, trial]))

    def draw(self, rng: np.random.Generator, steps: int) -> np.ndarray:
        """``(steps, N)`` increments in label order."""
        mu = np.asarray(self.means, dtype=np.float64)
        w = self.eta_L - np.abs(mu)
        if self.noise == "uniform":
            eps = rng.uniform(-1.0, 1.0, size=(steps, len(mu))) * w
        elif self.noise == "clipped_gaussian":
            eps = np.clip(self.sigma * rng.standard_normal(size=(steps, len(mu))), -w, w)
        else:
            eps = np.zeros((steps, len(mu)))
        g = mu + eps
        return g if self.perm is None else g[:, list(self.perm)]


@dataclass
class TrialResult:
    survivor: int
    prune_times: np.ndarray
    best_survived: bool
    steps: int
    converged: bool = True


@dataclass
class TrialBatch:
    """Results of many trials of one configuration, in trial order."""

    survivors: np.ndarray
    prune_times: np.ndarray
    steps: np.ndarray
    converged: np.ndarray
    best: int
    delta: float
    N: int
    identities_checked: int = 0

    def __len__(self) -> int:
        return len(self.survivors)

    def __getitem__(self, k: int) -> TrialResult:
        s = int(self.survivors[k])
        return TrialResult(s, self.prune_times[k].copy(), s == self.best and bool(self.converged[k]),
                           int(self.steps[k]), bool(self.converged[k]))

    @property
    def best_survived(self) -> np.ndarray:
        return (self.survivors == self.best) & self.converged

    @property
    def failures(self) -> int:
        return int(np.sum(~self.best_survived))

    @property
    def error_rate(self) -> float:
        return self.failures / len(self)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trial", "survivor", "best_survived", "steps"])
            for k in range(len(self)):
                w.writerow([k, int(self.survivors[k]) if self.converged[k] else -1,
                            int(self.best_survived[k]), int(self.steps[k])])
            w.writerow(["summary", f"error_rate={self.error_rate!r}", f"delta={self.delta!r}",
                        f"trials={len(self)}"])


def _theoretical_block(t: np.ndarray, N: int, eta_L: float, delta: float, nu: float):
    log_term = np.log(math.pi ** 2 * N * t * t / (3.0 * delta))
    rho = t / (t + math.log(1.0 / (N * nu)))
    T = eta_L * rho * np.sqrt(8.0 / t * log_term)
    log_theta = math.log(nu) - t
    beta = eta_L * np.sqrt(2.0 / t * log_term)
    return T, log_theta, beta, rho


def run_trials(stream: GradientStream, trials: int, delta: float = 0.1,
               nu: float | None = None, max_steps: int = 1_000_000, block: int = 256,
               first_trial: int = 0, check_identities: bool = False) -> TrialBatch:
    """Run ``trials`` independent eliminations, vectorized across trials.

    Trial ``k`` draws from ``stream.generator(first_trial + k)``, so results do
    not depend on how trials are batched.  Trials still holding more than one
    arm after ``max_steps`` are reported as not converged.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    best = stream.best
    N = stream.N
    nu = 1.0 / N if nu is None else nu
    gens = [stream.generator(first_trial + k) for k in range(trials)]
    alpha = np.zeros((trials, N))
    live = np.ones((trials, N), dtype=bool)
    prune_times = np.zeros((trials, N), dtype=np.int64)
    done = np.zeros(trials, dtype=bool)
    steps = np.full(trials, max_steps, dtype=np.int64)
    checked = 0
    t0 = 0
    while t0 < max_steps and not done.all():
        K = min(block, max_steps - t0)
        active = np.flatnonzero(~done)
        g = np.stack([stream.draw(gens[j], K) for j in active], axis=1)
        ts = np.arange(t0 + 1, t0 + K + 1, dtype=np.float64)
        T, log_theta, beta, rho = _theoretical_block(ts, N, stream.eta_L, delta, nu)
        if check_identities:
            for k in (0, K - 1):
                st = ScheduleState(int(ts[k]), N, stream.eta_L, delta, nu)
                assert math.isclose(st.temperature, T[k], rel_tol=1e-12)
                assert math.isclose(st.beta * 2 * st.rho_t, T[k], rel_tol=1e-12)
                checked += 1
        a, lv = alpha[active], live[active]
        fin = np.zeros(len(active), dtype=bool)
        rows = np.arange(len(active))
        for k in range(K):
            a += g[k]
            z = np.where(lv, a / T[k], -np.inf)
            top = np.argmax(z, axis=1)
            zmax = z[rows, top][:, None]
            logphi = z - zmax - np.log(np.exp(z - zmax).sum(axis=1, keepdims=True))
            drop = lv & (logphi < log_theta[k])
            drop[rows, top] = False
            drop[fin] = False
            if drop.any():
                lv &= ~drop
                prune_times[active[np.nonzero(drop)[0]], np.nonzero(drop)[1]] = t0 + k + 1
                newly = ~fin & (lv.sum(axis=1) == 1)
                steps[active[newly]] = t0 + k + 1
                fin |= newly
                if fin.all():
                    break
        alpha[active], live[active] = a, lv
        done[active] = fin
        t0 += K
    survivors = np.where(done, np.argmax(live, axis=1), -1)
    return TrialBatch(survivors, prune_times, steps, done, best, delta, N, checked)


def run_trial(stream: GradientStream, delta: float = 0.1, nu: float | None = None,
              trial: int = 0, max_steps: int = 1_000_000) -> TrialResult:
    return run_trials(stream, 1, delta, nu, max_steps, first_trial=trial)[0]


def logsumexp_bound_check(x) -> bool:
    """max(x) <= logsumexp(x) <= max(x) + ln N."""
    x = np.asarray(x, dtype=np.float64)
    lse = float(logsumexp(x))
    m = float(x.max())
    tol = 1e-12 * max(1.0, abs(m))
    return m - tol <= lse <= m + math.log(len(x)) + tol


def check_claim1(alpha, state: ScheduleState, T: float | None = None):
    """Evaluate both pruning conditions for every arm.

    Returns ``(threshold_fires, se_fires)`` as boolean arrays:
    ``Phi_i(alpha; T) < theta_t`` and
    ``alpha_i/t + beta < alpha*/t - beta`` with ``beta = T / (2 rho_t)``.
    ``T`` defaults to the theoretical temperature of ``state``.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    t = state.t
    T = state.temperature if T is None else T
    z = alpha / T
    if not logsumexp_bound_check(z):
        raise AssertionError(f"log-sum-exp bound violated for {z}")
    logphi = z - logsumexp(z)
    log_theta = math.log(state.nu_t) - t if state.nu_t > 0 else -math.inf
    threshold_fires = logphi < log_theta
    beta = T / (2.0 * state.rho_t)
    se_fires = alpha / t + beta < alpha.max() / t - beta
    return threshold_fires, se_fires


def hoeffding_deviation_rate(stream: GradientStream, t: int, beta: float, trials: int = 10_000,
                             arm: int = 0, seed: int = 0) -> float:
    """Fraction of ``trials`` with ``|alpha_t - t mu| / t > beta`` for one arm."""
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    if trials < 100:
        raise ValueError(f"need at least 100 trials for a meaningful rate, got {trials}")
    rng = np.random.default_rng(np.random.SeedSequence([stream.seed, seed, t]))
    total = np.zeros(trials)
    left = t
    while left:
        k = min(left, 4096)
        total += stream.draw(rng, k * trials).reshape(k, trials, stream.N)[:, :, arm].sum(axis=0)
        left -= k
    dev = np.abs(total - t * stream.mu[arm]) / t
    return float(np.mean(dev > beta))


def corollary_bound(delta: float, N: int, t: int) -> float:
    return 6.0 * delta / (math.pi ** 2 * N * t * t)


@dataclass
class GridRow:
    N: int
    delta: float
    gap: float
    trials: int
    failures: int
    error_rate: float
    p_value: float
    mean_steps: float
    max_steps: int
    non_converged: int = 0
    passed: bool = field(default=False)


def pac_grid(Ns=(2, 5, 10), deltas=(0.05, 0.1), gaps=(0.1, 0.3), trials: int = 2000,
             noise: str = "uniform", eta_L: float = 1.0, seed: int = 0,
             max_steps: int = 1_000_000, confidence: float = 0.95, sigma: float = 0.5,
             on_batch=None) -> list[GridRow]:
    """Empirical mis-selection rate per configuration with a one-sided binomial test.

    A row passes when the observed failures give no evidence (at the given
    confidence) that the true rate exceeds delta.  ``on_batch(row, batch)`` is
    called after each configuration, e.g. to write its per-trial CSV.
    """
    from scipy.stats import binomtest

    rows = []
    for N in Ns:
        for delta in deltas:
            for gap in gaps:
                stream = GradientStream.with_gap(N, gap, eta_L=eta_L, noise=noise, sigma=sigma,
                                                 seed=seed)
                batch = run_trials(stream, trials, delta, max_steps=max_steps)
                k = batch.failures
                p = binomtest(k, trials, delta, alternative="greater").pvalue
                row = GridRow(N, delta, gap, trials, k, k / trials, float(p),
                              float(batch.steps.mean()), int(batch.steps.max()),
                              int(np.sum(~batch.converged)), bool(p >= 1 - confidence))
                rows.append(row)
                if on_batch is not None:
                    on_batch(row, batch)
    return rows
