"""Annealing schedules, pruning thresholds and the elimination margin.

Two families are provided.  The exponential schedule ``T0 * decay**t`` with a
fixed threshold is what practical searches use.  The theoretical pair

    T_t     = eta_L * rho_t * sqrt((8/t) * ln(pi^2 N t^2 / (3 delta)))
    theta_t = nu_t * exp(-t)
    rho_t   = t / (t + ln(1 / (N nu_t)))

makes threshold pruning a successive-elimination rule with margin
``beta_t = eta_L * sqrt((2/t) * ln(pi^2 N t^2 / (3 delta))) = T_t / (2 rho_t)``.

``eta_L`` is the product of the architecture step size and the gradient bound.
It is exact in synthetic gradient streams and only an estimate for real
losses.  Steps are counted in epochs unless the search is configured to
anneal per update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable


def temp_exponential(T0: float, beta_decay: float, t: float) -> float:
    if not T0 > 0:
        raise ValueError(f"T0 must be positive, got {T0}")
    if not 0 < beta_decay < 1:
        raise ValueError(f"decay must lie in (0, 1), got {beta_decay}")
    if t < 0:
        raise ValueError(f"step must be >= 0, got {t}")
    return T0 * beta_decay ** t


def _log_term(t: float, N: int, delta: float) -> float:
    return math.log(math.pi ** 2 * N * t * t / (3.0 * delta))


def rho(t: float, N: int, nu: float) -> float:
    if N * nu <= 0:
        raise ValueError(f"N * nu_t must be positive, got N={N}, nu_t={nu}")
    denom = t + math.log(1.0 / (N * nu))
    if denom <= 0:
        raise ValueError(f"rho_t undefined at t={t} for N={N}, nu_t={nu}")
    return t / denom


@dataclass(frozen=True)
class ScheduleState:
    """Theoretical schedule quantities at step ``t`` (t >= 1).

    ``nu`` is the slack value nu_t at this step; ``None`` means 1/N, which makes
    rho_t identically 1.
    """

    t: int
    N: int
    eta_L: float = 1.0
    delta: float = 0.1
    nu: float | None = None

    def __post_init__(self):
        if self.t < 1:
            raise ValueError(f"theoretical schedule is defined for t >= 1, got t={self.t}")
        if self.N < 1:
            raise ValueError(f"N must be positive, got {self.N}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.eta_L > 0:
            raise ValueError(f"eta_L must be positive, got {self.eta_L}")

    @property
    def nu_t(self) -> float:
        return 1.0 / self.N if self.nu is None else self.nu

    @property
    def rho_t(self) -> float:
        return rho(self.t, self.N, self.nu_t)

    @property
    def temperature(self) -> float:
        return temp_theoretical(self)

    @property
    def threshold(self) -> float:
        return self.nu_t * math.exp(-self.t)

    @property
    def beta(self) -> float:
        return margin_beta(self)


def temp_theoretical(state: ScheduleState) -> float:
    t = state.t
    return state.eta_L * state.rho_t * math.sqrt((8.0 / t) * _log_term(t, state.N, state.delta))


def margin_beta(state: ScheduleState) -> float:
    t = state.t
    return state.eta_L * math.sqrt((2.0 / t) * _log_term(t, state.N, state.delta))


def threshold_policy(kind: str, t: float, N: int, nu: float | None = None,
                     theta0: float = 0.4) -> float:
    """``fixed``: theta0/N.  ``theoretical``: nu_t * exp(-t).  ``none``: 0."""
    if kind == "fixed":
        return theta0 / N
    if kind == "theoretical":
        nu = 1.0 / N if nu is None else nu
        if nu < 0:
            raise ValueError(f"nu_t must be >= 0, got {nu}")
        return nu * math.exp(-t)
    if kind == "none":
        return 0.0
    raise ValueError(f"unknown threshold policy {kind!r}")


def sparsity_schedule(s_i: float, s_f: float, t0: float, n: int, dt: float, p: int,
                      t: float) -> float:
    """Polynomial sparsity ramp ``s_f + (s_i - s_f) * (1 - (t - t0)/(n dt))**p``."""
    if p not in (1, 3):
        raise ValueError(f"exponent p must be 1 or 3, got {p}")
    if n < 1 or dt <= 0:
        raise ValueError(f"need n >= 1 and dt > 0, got n={n}, dt={dt}")
    end = t0 + n * dt
    if not t0 <= t <= end:
        raise ValueError(f"t={t} outside [{t0}, {end}]")
    s = s_f + (s_i - s_f) * (1.0 - (t - t0) / (n * dt)) ** p
    lo, hi = min(s_i, s_f), max(s_i, s_f)
    return min(max(s, lo), hi)


class SchedulePolicy:
    """Temperature and threshold as a function of the step counter.

    ``kind`` is ``exponential`` (T0, decay), ``constant`` (T0, no annealing) or
    ``theoretical`` (eta_L, delta, nu).  Theoretical steps are shifted by one so
    step 0 maps to t=1.
    """

    def __init__(self, kind: str = "exponential", T0: float = 1.3, decay: float = 0.95,
                 eta_L: float = 1.0, delta: float = 0.1,
                 nu: float | Callable[[int], float] | None = None,
                 threshold: str = "fixed", theta0: float = 0.4, N: int = 7):
        if kind not in ("exponential", "constant", "theoretical"):
            raise ValueError(f"unknown schedule kind {kind!r}")
        if kind == "exponential":
            temp_exponential(T0, decay, 0)
        if kind == "constant" and not T0 > 0:
            raise ValueError(f"T0 must be positive, got {T0}")
        if threshold not in ("fixed", "theoretical", "none"):
            raise ValueError(f"unknown threshold policy {threshold!r}")
        self.kind = kind
        self.T0 = T0
        self.decay = decay
        self.eta_L = eta_L
        self.delta = delta
        self.nu = nu
        self.threshold_kind = threshold
        self.theta0 = theta0
        self.N = N

    def _nu_at(self, t: int) -> float | None:
        if callable(self.nu):
            return self.nu(t)
        return self.nu

    def state(self, step: int) -> ScheduleState:
        return ScheduleState(step + 1, self.N, self.eta_L, self.delta, self._nu_at(step + 1))

    def temperature(self, step: int) -> float:
        if self.kind == "exponential":
            return temp_exponential(self.T0, self.decay, step)
        if self.kind == "constant":
            return self.T0
        return temp_theoretical(self.state(step))

    def threshold(self, step: int) -> float:
        if self.threshold_kind == "theoretical":
            t = step + 1 if self.kind == "theoretical" else step
            return threshold_policy("theoretical", t, self.N, self._nu_at(t))
        return threshold_policy(self.threshold_kind, step, self.N, theta0=self.theta0)
