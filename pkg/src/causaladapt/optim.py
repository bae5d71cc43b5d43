"""Stochastic optimizers: averaged SGD and proximal gradient with log barrier.

Both optimizers work on flat parameter vectors, consume one fresh sample
per step through a gradient oracle ``grad(theta, t)`` that returns the
negative-log-likelihood gradient, and report the running average of the
iterates. The average at horizon T is (1/T) sum of iterates 0..T-1, so it
includes the starting point. Suboptimality of the averaged iterate is the
KL divergence to the sampling distribution, which callers supply as
``kl_fn``.

Step sizes are taken literally: conventions like c/sqrt(T) belong to the
caller, matching an experiment protocol that tunes a constant rate on a
grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sampling import RngStream


class DivergenceError(RuntimeError):
    """A run produced a non-finite parameter, gradient or KL value."""


@dataclass
class Trajectory:
    """Per-checkpoint KL of the averaged iterate for one optimization run."""

    step_index: np.ndarray
    kl_at_average: np.ndarray
    initial_distance: float
    final_kl: float
    theta_avg: np.ndarray
    theta_final: np.ndarray


@dataclass
class StepSchedule:
    """Constant step size; ``value`` is the literal gamma used every step."""

    value: float
    kind: str = "constant"

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError("step size must be positive")


def _gamma_value(gamma) -> float:
    return gamma.value if isinstance(gamma, StepSchedule) else float(gamma)


def _checkpoint_set(T: int, checkpoints) -> set[int]:
    if checkpoints is None:
        return {0, T}
    cps = {int(c) for c in checkpoints if 0 <= int(c) <= T}
    cps.update((0, T))
    return cps


def _check_finite(arr, what: str, step: int):
    if not np.all(np.isfinite(arr)):
        raise DivergenceError(f"non-finite {what} at step {step}")


def asgd(
    grad,
    theta0,
    gamma: float,
    T: int,
    kl_fn=None,
    checkpoints=None,
    initial_distance: float = float("nan"),
) -> Trajectory:
    """Averaged stochastic gradient descent with constant step size.

    theta_{t+1} = theta_t - gamma * grad(theta_t, t); the reported model at
    checkpoint t is the running average of iterates 0..t-1 (the start point
    itself at t = 0). ``gamma`` may be a float or a StepSchedule.
    """
    gamma = _gamma_value(gamma)
    if T < 1:
        raise ValueError("horizon must be at least 1")
    if gamma <= 0:
        raise ValueError("step size must be positive")
    theta = np.array(theta0, dtype=float)
    running = np.zeros_like(theta)
    cps = _checkpoint_set(T, checkpoints)
    steps, kls = [], []

    def record(t: int, avg: np.ndarray):
        if kl_fn is None:
            return
        val = float(kl_fn(avg))
        if not np.isfinite(val):
            raise DivergenceError(f"non-finite KL at step {t}")
        steps.append(t)
        kls.append(val)

    # oversized tuning candidates are allowed to blow up quietly; the
    # finiteness checks turn them into DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            if t in cps:
                record(t, running / t if t > 0 else theta)
            g = grad(theta, t)
            _check_finite(g, "gradient", t)
            running += theta
            theta = theta - gamma * np.asarray(g)
            _check_finite(theta, "parameters", t)
        theta_avg = running / T
        record(T, theta_avg)
    return Trajectory(
        step_index=np.array(steps, dtype=int),
        kl_at_average=np.array(kls, dtype=float),
        initial_distance=initial_distance,
        final_kl=kls[-1] if kls else float("nan"),
        theta_avg=theta_avg,
        theta_final=theta,
    )


def prox_log_barrier_diag(x, gamma: float):
    """Prox of -log on the positive reals: argmin -log(l) + (l - x)^2 / (2 gamma).

    Closed form (x + sqrt(x^2 + 4 gamma)) / 2, strictly positive for any
    real x, so it acts as a smooth projection onto the positive half-line.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    x = np.asarray(x, dtype=float)
    out = 0.5 * (x + np.sqrt(x * x + 4.0 * gamma))
    return float(out) if out.ndim == 0 else out


def stochastic_prox_grad(
    grad,
    theta0,
    gamma: float,
    T: int,
    diag_idx,
    kl_fn=None,
    checkpoints=None,
    initial_distance: float = float("nan"),
) -> Trajectory:
    """Stochastic proximal gradient for quadratic loss plus log-det barrier.

    Each step takes a gradient step of the smooth part on all coordinates,
    then applies the log-barrier prox to the coordinates listed in
    ``diag_idx`` (the diagonals of the Cholesky factors), which therefore
    stay strictly positive at every iterate.
    """
    gamma = _gamma_value(gamma)
    if T < 1:
        raise ValueError("horizon must be at least 1")
    if gamma <= 0:
        raise ValueError("step size must be positive")
    theta = np.array(theta0, dtype=float)
    diag_idx = np.asarray(diag_idx, dtype=int)
    if np.any(theta[diag_idx] <= 0):
        raise ValueError("initial factor diagonals must be strictly positive")
    running = np.zeros_like(theta)
    cps = _checkpoint_set(T, checkpoints)
    steps, kls = [], []

    def record(t: int, avg: np.ndarray):
        if kl_fn is None:
            return
        val = float(kl_fn(avg))
        if not np.isfinite(val):
            raise DivergenceError(f"non-finite KL at step {t}")
        steps.append(t)
        kls.append(val)

    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            if t in cps:
                record(t, running / t if t > 0 else theta)
            g = grad(theta, t)
            _check_finite(g, "gradient", t)
            running += theta
            theta = theta - gamma * np.asarray(g)
            theta[diag_idx] = prox_log_barrier_diag(theta[diag_idx], gamma)
            _check_finite(theta, "parameters", t)
            if np.any(theta[diag_idx] <= 0):
                raise DivergenceError(f"non-positive factor diagonal at step {t}")
        theta_avg = running / T
        record(T, theta_avg)
    return Trajectory(
        step_index=np.array(steps, dtype=int),
        kl_at_average=np.array(kls, dtype=float),
        initial_distance=initial_distance,
        final_kl=kls[-1] if kls else float("nan"),
        theta_avg=theta_avg,
        theta_final=theta,
    )


def tune_step_size(problem, grid, horizon: int, n_reps: int, rng: RngStream) -> float:
    """Pick the grid step size with the lowest mean KL at the horizon.

    ``problem(gamma, horizon, rng)`` runs one repetition and returns the KL
    of the averaged iterate after ``horizon`` steps. Repetitions reuse the
    same derived streams across candidates so the comparison sees common
    random numbers. A candidate is discarded if any repetition diverges;
    ties break toward the smaller step size.
    """
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise ValueError("step-size grid must be nonempty")
    best_gamma, best_mean = None, np.inf
    failures = []
    for gamma in grid:
        vals = []
        for rep in range(n_reps):
            try:
                val = float(problem(gamma, horizon, rng.child("tune", rep)))
            except DivergenceError as exc:
                failures.append(f"gamma={gamma:g} rep={rep}: {exc}")
                vals = None
                break
            if not np.isfinite(val):
                failures.append(f"gamma={gamma:g} rep={rep}: non-finite KL")
                vals = None
                break
            vals.append(val)
        if vals is None:
            continue
        mean = float(np.mean(vals))
        if mean < best_mean:
            best_gamma, best_mean = gamma, mean
    if best_gamma is None:
        raise RuntimeError(
            "every step-size candidate diverged: " + "; ".join(failures)
        )
    return best_gamma
