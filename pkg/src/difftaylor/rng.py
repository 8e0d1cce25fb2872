"""Counter-based random streams for reproducible Monte Carlo.

Every variate is a pure function of (seed, purpose, index words), so results
never depend on batch size, evaluation order, or worker-pool layout.  The
mixing core is the SplitMix64 finalizer applied once per index word, which is
statistically solid for simulation work and trivially vectorizable in numpy.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

# Stream purposes.  Distinct constants keep e.g. the start noise of a
# trajectory independent of its per-step driving noise.
PURPOSE_START = 1
PURPOSE_STEP_W = 2
PURPOSE_STEP_U = 3
PURPOSE_TRIAL = 4
PURPOSE_PARTICLE = 5

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = float(2.0**-53)


def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = (z + _GOLDEN) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def counter_bits(seed: int, *words) -> np.ndarray:
    """Hash (seed, words...) to uint64.  Array words broadcast together."""
    arrays = np.broadcast_arrays(*[np.asarray(w, dtype=np.uint64) for w in words])
    with np.errstate(over="ignore"):
        h = _splitmix64(np.uint64(seed) * np.ones_like(arrays[0]))
        for w in arrays:
            h = _splitmix64(h ^ w)
    return h


def counter_uniform(seed: int, *words) -> np.ndarray:
    """Uniforms in the open interval (0, 1)."""
    bits = counter_bits(seed, *words)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53


def counter_normal(seed: int, *words) -> np.ndarray:
    """Standard normals via the inverse CDF of counter uniforms."""
    return ndtri(counter_uniform(seed, *words))


def step_normals(seed: int, purpose: int, traj, step: int, d: int) -> np.ndarray:
    """Per-dimension standard normals for given trajectories at one step.

    ``traj`` is an int or an int array of trajectory indices; the result has
    shape ``(*traj.shape, d)``.
    """
    traj = np.asarray(traj, dtype=np.uint64)
    dims = np.arange(d, dtype=np.uint64)
    return counter_normal(seed, purpose, traj[..., None], step, dims)


def correlated_pair(seed: int, traj, step: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw the correlated pair (w, z) driving one stochastic refinement step.

    w = u1 and z = u1/2 + u2/(2*sqrt(3)) with u1, u2 iid standard normal, so
    that (sqrt(h) w, h sqrt(h) z) has the covariance (h, h^2/2, h^3/3) of the
    iterated Ito integrals over a step of size h.
    """
    u1 = step_normals(seed, PURPOSE_STEP_W, traj, step, d)
    u2 = step_normals(seed, PURPOSE_STEP_U, traj, step, d)
    w = u1
    z = 0.5 * u1 + (0.5 / np.sqrt(3.0)) * u2
    return w, z
