"""Noise-level schedules with exact time derivatives.

The central object is a schedule t -> nu(t) in (0,1) describing how much of a
sample's variance has been replaced by noise at time t, together with the rate
beta(t) and its first two derivatives.  The tanh/softplus schedule is
parametrized through lam(t) = log(1 + A e^{k t}) with nu = tanh^2(lam/2) and
beta = lam' tanh(lam/2), which keeps beta/sqrt(nu) = lam' bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class TanhSoftplus:
    A: float
    k: float


@dataclass(frozen=True)
class Linear:
    beta0: float
    beta1: float


@dataclass(frozen=True)
class Cosine:
    # beta is clipped at this value near t=T where tan(pi t/2) blows up
    threshold: float = 20.0


ScheduleKind = Union[TanhSoftplus, Linear, Cosine]


@dataclass(frozen=True)
class NoiseSchedule:
    kind: ScheduleKind
    T: float


@dataclass(frozen=True)
class ScheduleSample:
    """All scalar schedule values at one time t.

    ``clamped`` is set when the cosine beta hit its threshold; the derivative
    fields are then taken from the unclamped expression and must not be fed to
    Taylor-scheme coefficients.
    """

    t: float
    lam: float
    lam_d1: float
    lam_d2: float
    lam_d3: float
    nu: float
    beta: float
    beta_d1: float
    beta_d2: float
    clamped: bool = False


@dataclass(frozen=True)
class StepSchedule:
    kind: str  # "constant" | "exponential"
    N: int
    T: float
    steps: tuple[float, ...]
    terminal_ratio: float = 0.1


def fit_tanh_schedule(nu0: float, nuT: float, T: float) -> NoiseSchedule:
    """Fit the tanh/softplus schedule hitting nu(0)=nu0 and nu(T)=nuT.

    Closed form: A = 2 sqrt(nu0)/(1 - sqrt(nu0)) and
    k = (1/T) (log(2 sqrt(nuT)/(1 - sqrt(nuT))) - log A).
    """
    if not (0.0 < nu0 < 1.0):
        raise ValueError(f"nu0 must lie in (0,1), got {nu0}")
    if not (0.0 < nuT < 1.0):
        raise ValueError(f"nuT must lie in (0,1), got {nuT}")
    if nu0 > nuT:
        raise ValueError(f"nu0 must not exceed nuT, got nu0={nu0} nuT={nuT}")
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    r0 = math.sqrt(nu0)
    rT = math.sqrt(nuT)
    A = 2.0 * r0 / (1.0 - r0)
    k = (math.log(2.0 * rT / (1.0 - rT)) - math.log(A)) / T
    return NoiseSchedule(kind=TanhSoftplus(A=A, k=k), T=T)


def _eval_tanh_softplus(p: TanhSoftplus, t: float) -> ScheduleSample:
    # E = A e^{k t}; lam = log(1+E)
    # tanh(lam/2) = E/(E+2), sech^2(lam/2) = 1 - tanh^2
    E = p.A * math.exp(p.k * t)
    lam = math.log1p(E)
    q = E / (E + 1.0)
    lam_d1 = p.k * q
    lam_d2 = p.k * p.k * q / (E + 1.0)
    lam_d3 = p.k ** 3 * E * (1.0 - E) / (E + 1.0) ** 3
    th = E / (E + 2.0)
    sech2 = 1.0 - th * th
    nu = th * th
    beta = lam_d1 * th
    beta_d1 = lam_d2 * th + 0.5 * lam_d1 * lam_d1 * sech2
    beta_d2 = (
        lam_d3 * th
        + 1.5 * lam_d1 * lam_d2 * sech2
        - 0.5 * lam_d1 ** 3 * th * sech2
    )
    return ScheduleSample(
        t=t, lam=lam, lam_d1=lam_d1, lam_d2=lam_d2, lam_d3=lam_d3,
        nu=nu, beta=beta, beta_d1=beta_d1, beta_d2=beta_d2,
    )


def _lam_fields(nu: float, beta: float, beta_d1: float, beta_d2: float):
    """Derive lam and its derivatives from nu/beta via lam = 2 artanh(sqrt(nu)).

    Uses lam' = beta/sqrt(nu) and nu' = (1-nu) beta.  Singular at nu=0.
    """
    if nu <= 0.0:
        return 0.0, math.inf, math.inf, math.inf
    rn = math.sqrt(nu)
    lam = 2.0 * math.atanh(min(rn, 1.0 - 1e-16))
    lam_d1 = beta / rn
    lam_d2 = beta_d1 / rn - beta * beta * (1.0 - nu) / (2.0 * nu * rn)
    lam_d3 = (
        beta_d2 / rn
        - 2.0 * beta * beta_d1 * (1.0 - nu) / (nu * rn)
        + beta ** 3 * (1.0 - nu) / (2.0 * nu * rn)
        + 0.75 * beta ** 3 * (1.0 - nu) ** 2 / (nu * nu * rn)
    )
    return lam, lam_d1, lam_d2, lam_d3


def _eval_linear(p: Linear, t: float) -> ScheduleSample:
    beta = p.beta0 + 2.0 * p.beta1 * t
    nu = 1.0 - math.exp(-p.beta0 * t - p.beta1 * t * t)
    beta_d1 = 2.0 * p.beta1
    beta_d2 = 0.0
    lam, l1, l2, l3 = _lam_fields(nu, beta, beta_d1, beta_d2)
    return ScheduleSample(
        t=t, lam=lam, lam_d1=l1, lam_d2=l2, lam_d3=l3,
        nu=nu, beta=beta, beta_d1=beta_d1, beta_d2=beta_d2,
    )


def _eval_cosine(p: Cosine, t: float) -> ScheduleSample:
    half = 0.5 * math.pi * t
    s, c = math.sin(half), math.cos(half)
    nu = s * s
    raw = math.pi * s / c if c > 0.0 else math.inf
    clamped = raw > p.threshold
    beta = min(p.threshold, raw)
    # derivatives of the unclamped pi*tan(pi t/2); invalid once clamped
    sec2 = 1.0 / (c * c) if c > 0.0 else math.inf
    beta_d1 = 0.5 * math.pi ** 2 * sec2
    beta_d2 = 0.5 * math.pi ** 3 * sec2 * (s / c if c > 0.0 else math.inf)
    lam, l1, l2, l3 = _lam_fields(nu, beta, beta_d1, beta_d2)
    return ScheduleSample(
        t=t, lam=lam, lam_d1=l1, lam_d2=l2, lam_d3=l3,
        nu=nu, beta=beta, beta_d1=beta_d1, beta_d2=beta_d2, clamped=clamped,
    )


def eval_schedule(sched: NoiseSchedule, t: float) -> ScheduleSample:
    """Evaluate every schedule quantity at time t in [0, T]."""
    if not (-1e-12 <= t <= sched.T + 1e-12):
        raise ValueError(f"t={t} outside schedule domain [0, {sched.T}]")
    t = min(max(t, 0.0), sched.T)
    kind = sched.kind
    if isinstance(kind, TanhSoftplus):
        return _eval_tanh_softplus(kind, t)
    if isinstance(kind, Linear):
        return _eval_linear(kind, t)
    if isinstance(kind, Cosine):
        return _eval_cosine(kind, t)
    raise TypeError(f"unknown schedule kind {kind!r}")


def make_step_schedule(
    kind: str, N: int, T: float, terminal_ratio: float = 0.1
) -> StepSchedule:
    """Build a step-size sequence h_1..h_N summing to T.

    "constant" gives h_i = T/N.  "exponential" gives h_i = r^{i-1} h_1 with
    r = terminal_ratio^{1/N}, so the last step is about terminal_ratio times
    the first while the sum still equals T.
    """
    if N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    if kind == "constant":
        steps = tuple(T / N for _ in range(N))
    elif kind == "exponential":
        if not (0.0 < terminal_ratio < 1.0):
            raise ValueError(f"terminal_ratio must lie in (0,1), got {terminal_ratio}")
        r = terminal_ratio ** (1.0 / N)
        h1 = T * (1.0 - r) / (1.0 - r ** N)
        steps = tuple(h1 * r ** i for i in range(N))
    else:
        raise ValueError(f"unknown step schedule kind {kind!r}")
    return StepSchedule(kind=kind, N=N, T=T, steps=steps, terminal_ratio=terminal_ratio)
