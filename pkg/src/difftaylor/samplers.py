"""Refinement-step integrators for the reverse diffusion dynamics.

Deterministic solvers (Euler, Heun, RK4, DDIM, Taylor2, Taylor3) integrate the
probability-flow ODE; stochastic solvers (Euler-Maruyama, Ito-Taylor) simulate
the reverse SDE.  All of them consume a score field in the convention
S = -sqrt(nu) grad log p and step time downward from T to 0.

The Taylor solvers use closed-form score derivatives valid for near-delta
data, which turns the whole update into two scalar coefficients per step:
x <- rho x + mu S/sqrt(nu) (plus a correlated noise term for Ito-Taylor).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from difftaylor import rng
from difftaylor.schedules import NoiseSchedule, ScheduleSample, StepSchedule, eval_schedule
from difftaylor.score import ScoreField

SOLVERS = ("euler", "heun", "rk4", "ddim", "taylor2", "taylor3",
           "euler_maruyama", "ito_taylor")
STOCHASTIC_SOLVERS = ("euler_maruyama", "ito_taylor")
NFE_PER_STEP = {"heun": 2, "rk4": 4}


@dataclass(frozen=True)
class FlatCoefficients:
    rho: float
    mu: float
    order: int


@dataclass(frozen=True)
class SharpStep:
    """Stochastic Taylor update pieces: x <- rho x + mu S/sqrt(nu) + noise,
    noise = c_w w + c_wz (w - z) + c_z z with correlated normals (w, z)."""

    rho: float
    mu: float
    c_w: float
    c_wz: float
    c_z: float


@dataclass(frozen=True)
class ButcherTableau:
    name: str
    c: tuple[float, ...]
    a: tuple[tuple[float, ...], ...]
    b: tuple[float, ...]

    @property
    def stages(self) -> int:
        return len(self.b)


HEUN = ButcherTableau(name="heun", c=(0.0, 1.0), a=((), (1.0,)), b=(0.5, 0.5))
RK4 = ButcherTableau(
    name="rk4",
    c=(0.0, 0.5, 0.5, 1.0),
    a=((), (0.5,), (0.0, 0.5), (0.0, 0.0, 1.0)),
    b=(1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0),
)


@dataclass(frozen=True)
class SampleRun:
    solver: str
    final: np.ndarray
    nfe: int
    seed: int
    run_id: int
    trajectory: Optional[list] = field(default=None, repr=False)


def pf_ode_drift(x: np.ndarray, t: float, score: ScoreField, sched: NoiseSchedule) -> np.ndarray:
    """Reversed-time probability-flow drift: x_{t-h} ~ x + h * drift(x, t).

    Equals (beta/2) x - (beta/(2 sqrt(nu))) S(x, t).
    """
    s = eval_schedule(sched, t)
    S = score.score(x, t, sched)
    return 0.5 * s.beta * x - (0.5 * s.beta / math.sqrt(s.nu)) * S


def rsde_drift(x: np.ndarray, t: float, score: ScoreField, sched: NoiseSchedule) -> np.ndarray:
    """Reversed-time reverse-SDE drift: (beta/2) x - (beta/sqrt(nu)) S(x, t)."""
    s = eval_schedule(sched, t)
    S = score.score(x, t, sched)
    return 0.5 * s.beta * x - (s.beta / math.sqrt(s.nu)) * S


def _require_taylor_ready(s: ScheduleSample) -> None:
    if s.clamped:
        raise ValueError(
            "Taylor coefficients need differentiable beta; the cosine schedule "
            f"is clamped at t={s.t}"
        )


def taylor_flat_coeffs(s: ScheduleSample, h: float, order: int) -> FlatCoefficients:
    """Deterministic Taylor update coefficients through h^order (order 2 or 3)."""
    if order not in (2, 3):
        raise ValueError(f"order must be 2 or 3, got {order}")
    _require_taylor_ready(s)
    b, bd, bdd, nu = s.beta, s.beta_d1, s.beta_d2, s.nu
    rho = 1.0 + 0.5 * b * h + 0.25 * h * h * (0.5 * b * b - bd)
    mu = -0.5 * b * h + 0.25 * h * h * (bd - b * b / (2.0 * nu))
    if order == 3:
        h3 = 0.25 * h ** 3
        rho += h3 * (b ** 3 / 12.0 - 0.5 * b * bd + bdd / 3.0)
        mu += h3 * (
            b ** 3 * (-nu * nu + 3.0 * nu - 3.0) / (12.0 * nu * nu)
            + 0.5 * b * bd / nu
            - bdd / 3.0
        )
    return FlatCoefficients(rho=rho, mu=mu, order=order)


def taylor_sharp_step(s: ScheduleSample, h: float) -> SharpStep:
    """Stochastic Taylor update coefficients (weak order 2)."""
    _require_taylor_ready(s)
    b, bd, nu = s.beta, s.beta_d1, s.nu
    rho = 1.0 + 0.5 * b * h + 0.25 * h * h * (0.5 * b * b - bd)
    mu = -b * h + 0.5 * bd * h * h
    rb = math.sqrt(b)
    h32 = h * math.sqrt(h)
    return SharpStep(
        rho=rho,
        mu=mu,
        c_w=rb * math.sqrt(h),
        c_wz=-h32 * bd / (2.0 * rb) if b > 0 else 0.0,
        c_z=h32 * rb ** 3 * (nu - 2.0) / (2.0 * nu),
    )


def ddim_coeffs(nu_t: float, nu_prev: float) -> tuple[float, float]:
    """DDIM step coefficients: x <- rho x + mu S (mu multiplies S directly)."""
    if not (0.0 < nu_prev <= nu_t < 1.0):
        raise ValueError(f"need 0 < nu_prev <= nu_t < 1, got nu_t={nu_t} nu_prev={nu_prev}")
    rho = math.sqrt((1.0 - nu_prev) / (1.0 - nu_t))
    mu = (math.sqrt((1.0 - nu_t) * nu_prev) - math.sqrt((1.0 - nu_prev) * nu_t)) / math.sqrt(
        1.0 - nu_t
    )
    return rho, mu


def rk_step(
    tableau: ButcherTableau,
    x: np.ndarray,
    t: float,
    h: float,
    score: ScoreField,
    sched: NoiseSchedule,
) -> np.ndarray:
    """One reversed-time Runge-Kutta step of the probability-flow ODE."""
    ks: list[np.ndarray] = []
    for i in range(tableau.stages):
        xi = x
        for j, aij in enumerate(tableau.a[i]):
            if aij != 0.0:
                xi = xi + h * aij * ks[j]
        ks.append(pf_ode_drift(xi, t - h * tableau.c[i], score, sched))
    out = x
    for bi, ki in zip(tableau.b, ks):
        out = out + h * bi * ki
    return out


@dataclass(frozen=True)
class StartSpec:
    """Initial condition: pure noise, or the exact noised marginal of a point."""

    kind: str = "standard_normal"  # "standard_normal" | "exact_marginal"
    x0: Optional[np.ndarray] = None


def _initial_state(
    start: StartSpec, sched: NoiseSchedule, d: int, traj: np.ndarray, seed: int
) -> np.ndarray:
    g = rng.step_normals(seed, rng.PURPOSE_START, traj, 0, d)
    if start.kind == "standard_normal":
        return g
    if start.kind == "exact_marginal":
        if start.x0 is None:
            raise ValueError("exact_marginal start requires x0")
        sT = eval_schedule(sched, sched.T)
        return math.sqrt(1.0 - sT.nu) * np.asarray(start.x0, dtype=np.float64) + math.sqrt(
            sT.nu
        ) * g
    raise ValueError(f"unknown start kind {start.kind!r}")


def _sample_chunk(
    solver: str,
    sched: NoiseSchedule,
    steps: StepSchedule,
    score: ScoreField,
    d: int,
    traj: np.ndarray,
    seed: int,
    clip: Optional[tuple[float, float]],
    record_trajectory: bool,
    start: StartSpec,
    final_noise: bool = False,
) -> tuple[np.ndarray, Optional[list]]:
    x = _initial_state(start, sched, d, traj, seed)
    t = sched.T
    trajectory = [(t, x.copy())] if record_trajectory else None
    n_steps = steps.N
    for i, h in enumerate(steps.steps):
        last = i == n_steps - 1
        t_next = 0.0 if last else t - h
        if solver == "euler":
            x = x + h * pf_ode_drift(x, t, score, sched)
        elif solver == "heun":
            x = rk_step(HEUN, x, t, h, score, sched)
        elif solver == "rk4":
            x = rk_step(RK4, x, t, h, score, sched)
        elif solver == "ddim":
            nu_t = eval_schedule(sched, t).nu
            nu_prev = eval_schedule(sched, t_next).nu
            rho, mu = ddim_coeffs(nu_t, nu_prev)
            x = rho * x + mu * score.score(x, t, sched)
        elif solver in ("taylor2", "taylor3"):
            s = eval_schedule(sched, t)
            coeffs = taylor_flat_coeffs(s, h, 2 if solver == "taylor2" else 3)
            S = score.score(x, t, sched)
            x = coeffs.rho * x + coeffs.mu * S / math.sqrt(s.nu)
        elif solver == "euler_maruyama":
            s = eval_schedule(sched, t)
            x = x + h * rsde_drift(x, t, score, sched)
            if final_noise or not last:  # default: no noise at the final step
                w = rng.step_normals(seed, rng.PURPOSE_STEP_W, traj, i + 1, d)
                x = x + math.sqrt(h * s.beta) * w
        elif solver == "ito_taylor":
            s = eval_schedule(sched, t)
            step = taylor_sharp_step(s, h)
            S = score.score(x, t, sched)
            x = step.rho * x + step.mu * S / math.sqrt(s.nu)
            if final_noise or not last:
                w, z = rng.correlated_pair(seed, traj, i + 1, d)
                x = x + step.c_w * w + step.c_wz * (w - z) + step.c_z * z
        else:
            raise ValueError(f"unknown solver {solver!r}")
        if clip is not None:
            x = np.clip(x, clip[0], clip[1])
        t = t_next
        if record_trajectory:
            trajectory.append((t, x.copy()))
    return x, trajectory


def _run_chunks(
    solver: str,
    sched: NoiseSchedule,
    steps: StepSchedule,
    score: ScoreField,
    d: int,
    batch: int,
    seed: int,
    clip: Optional[tuple[float, float]],
    record_trajectory: bool,
    start: StartSpec,
    workers: int,
    final_noise: bool = False,
):
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; choose from {SOLVERS}")
    if score.d != d:
        raise ValueError(f"score field dimension {score.d} does not match d={d}")
    traj_all = np.arange(batch, dtype=np.uint64)
    if workers <= 1 or batch < 2 * workers:
        chunks = [traj_all]
    else:
        chunks = [c for c in np.array_split(traj_all, workers) if len(c)]
    args = [
        (solver, sched, steps, score, d, chunk, seed, clip, record_trajectory,
         start, final_noise)
        for chunk in chunks
    ]
    if len(args) == 1:
        results = [_sample_chunk(*args[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(args)) as pool:
            results = list(pool.map(lambda a: _sample_chunk(*a), args))
    finals = np.concatenate([r[0] for r in results], axis=0)
    return chunks, results, finals


def sample_finals(
    solver: str,
    sched: NoiseSchedule,
    steps: StepSchedule,
    score: ScoreField,
    d: int,
    batch: int,
    seed: int,
    clip: Optional[tuple[float, float]] = None,
    start: Union[StartSpec, None] = None,
    workers: int = 1,
    final_noise: bool = False,
) -> np.ndarray:
    """Batch-array variant of ``sample``: returns the (batch, d) final states.

    ``final_noise=True`` keeps the last-step noise injection of the stochastic
    solvers; the sampling default drops it, which costs O(h) in the terminal
    variance and would mask the schemes' weak order in convergence studies.
    """
    _, _, finals = _run_chunks(
        solver, sched, steps, score, d, batch, seed, clip, False,
        start or StartSpec(), workers, final_noise,
    )
    return finals


def sample(
    solver: str,
    sched: NoiseSchedule,
    steps: StepSchedule,
    score: ScoreField,
    d: int,
    batch: int,
    seed: int,
    clip: Optional[tuple[float, float]] = None,
    record_trajectory: bool = False,
    start: Union[StartSpec, None] = None,
    workers: int = 1,
) -> list[SampleRun]:
    """Run ``batch`` independent trajectories of ``solver`` from t=T to t=0.

    Results are bit-identical for a fixed seed regardless of ``workers`` or
    batch partitioning, because every random draw is keyed by the global
    trajectory index.
    """
    if start is None:
        start = StartSpec()
    chunks, results, finals = _run_chunks(
        solver, sched, steps, score, d, batch, seed, clip, record_trajectory,
        start, workers,
    )
    nfe = steps.N * NFE_PER_STEP.get(solver, 1)
    runs = []
    for b in range(batch):
        trajectory = None
        if record_trajectory:
            trajectory = []
            offset = 0
            for (chunk, (_, traj)) in zip(chunks, results):
                if offset <= b < offset + len(chunk):
                    trajectory = [(t, snap[b - offset]) for t, snap in traj]
                    break
                offset += len(chunk)
        runs.append(
            SampleRun(solver=solver, final=finals[b], nfe=nfe, seed=seed,
                      run_id=b, trajectory=trajectory)
        )
    return runs
