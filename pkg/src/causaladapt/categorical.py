"""Categorical cause-effect models in mean-zero score (logit) coordinates.

A model of a pair (X, Y) over {0..K-1} factors either causally,
p(x) p(y|x), or anticausally, p(y) p(x|y). Mechanisms are stored as score
vectors s with p proportional to exp(s), projected onto the mean-zero
hyperplane so that parameter distances are well defined. This module
provides the coordinate conversions, Bayes reversal, KL and gradients,
the Dirichlet priors and interventions, and the distance geometry that
compares how far each factorization sits from its post-intervention
optimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import polygamma

from .sampling import RngStream, dirichlet_sample

#: probabilities below this are clamped before taking logs, so that
#: near-degenerate draws from sparse priors map to large but finite scores
MIN_PROB = 1e-300


# ---------------------------------------------------------------------------
# score <-> probability coordinates
# ---------------------------------------------------------------------------

def to_probs(s) -> np.ndarray:
    """softargmax along the last axis: p_z = exp(s_z) / sum exp."""
    s = np.asarray(s, dtype=float)
    shifted = s - s.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def to_scores(p) -> np.ndarray:
    """Mean-zero scores of strictly positive probabilities (log p, centered)."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ValueError("scores are undefined for zero probabilities")
    logp = np.log(p)
    return logp - logp.mean(axis=-1, keepdims=True)


def scores_from_probs(p) -> np.ndarray:
    """Like :func:`to_scores` but clamps entries below MIN_PROB first."""
    return to_scores(np.maximum(np.asarray(p, dtype=float), MIN_PROB))


def project_mean_zero(s) -> np.ndarray:
    """Project scores onto the mean-zero hyperplane (softargmax unchanged)."""
    s = np.asarray(s, dtype=float)
    return s - s.mean(axis=-1, keepdims=True)


def _logsumexp_rows(s: np.ndarray) -> np.ndarray:
    mx = s.max(axis=-1)
    return mx + np.log(np.exp(s - mx[..., None]).sum(axis=-1))


# ---------------------------------------------------------------------------
# model containers
# ---------------------------------------------------------------------------

@dataclass
class CategoricalCausal:
    """Causal factorization p(x) p(y|x).

    ``s_y_given_x[x]`` is the mean-zero score vector of Y given X = x.
    """

    s_x: np.ndarray
    s_y_given_x: np.ndarray

    @property
    def k(self) -> int:
        return self.s_x.shape[0]


@dataclass
class CategoricalAnticausal:
    """Anticausal factorization p(y) p(x|y); ``s_x_given_y[y]`` is row y."""

    s_y: np.ndarray
    s_x_given_y: np.ndarray

    @property
    def k(self) -> int:
        return self.s_y.shape[0]


@dataclass
class CondStats:
    """Averages and log-partition of the conditional mechanism.

    m(y) is the average over x of s_{y|x}, n(x) the average over y of the
    reversed conditional scores s_{x|y}, log_partition(x) = log sum_y
    exp(s_{y|x}) and alpha its mean over x.
    """

    m: np.ndarray
    n: np.ndarray
    log_partition: np.ndarray
    alpha: float


@dataclass
class EffectGeometry:
    """Sphere in effect-marginal score space separating the two models.

    For an intervention replacing every conditional row by ``s_star_y``,
    ``delta`` is the causal-minus-anticausal squared distance gap; it is
    negative (causal advantaged) exactly when s_star_y falls inside the
    sphere of squared radius ``r_squared`` centered at ``center``.
    """

    center: np.ndarray
    r_squared: float
    delta: float


# ---------------------------------------------------------------------------
# joint distribution, reversal, divergence
# ---------------------------------------------------------------------------

def joint_probs(model: CategoricalCausal) -> np.ndarray:
    """K x K table p(x, y) implied by the causal parameters."""
    return to_probs(model.s_x)[:, None] * to_probs(model.s_y_given_x)


def joint_probs_anticausal(model: CategoricalAnticausal) -> np.ndarray:
    """K x K table p(x, y) implied by the anticausal parameters."""
    return (to_probs(model.s_y)[:, None] * to_probs(model.s_x_given_y)).T


def effect_marginal_scores(model: CategoricalCausal) -> np.ndarray:
    """Mean-zero scores of the effect marginal p(y) = sum_x p(x, y)."""
    return scores_from_probs(joint_probs(model).sum(axis=0))


def _reversed_conditional(s_x: np.ndarray, s_ygx: np.ndarray) -> np.ndarray:
    """Rows y of s_{x|y} = s_x + (s_{y|x} - m(y)) - (A(x) - alpha).

    This is Bayes rule written directly in mean-zero score coordinates;
    the output rows are mean-zero by construction.
    """
    m = s_ygx.mean(axis=0)
    log_part = _logsumexp_rows(s_ygx)
    alpha = log_part.mean()
    rows_y = s_x[None, :] + s_ygx.T - m[:, None] - (log_part[None, :] - alpha)
    return project_mean_zero(rows_y)


def cond_stats(model: CategoricalCausal) -> CondStats:
    """Conditional averages in both directions plus the log-partition."""
    m = model.s_y_given_x.mean(axis=0)
    log_part = _logsumexp_rows(model.s_y_given_x)
    alpha = float(log_part.mean())
    n = _reversed_conditional(model.s_x, model.s_y_given_x).mean(axis=0)
    return CondStats(m=m, n=n, log_partition=log_part, alpha=alpha)


def reverse_model(model: CategoricalCausal) -> CategoricalAnticausal:
    """Anticausal parameters of the same joint distribution.

    The conditional comes from score-space Bayes rule, the marginal from
    marginalizing the joint table.
    """
    s_xgy = _reversed_conditional(model.s_x, model.s_y_given_x)
    return CategoricalAnticausal(s_y=effect_marginal_scores(model), s_x_given_y=s_xgy)


def kl_categorical(p, q) -> float:
    """KL(p || q) = sum p log(p/q); +inf if q misses mass where p has some."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    support = p > 0
    if np.any(q[support] == 0):
        return float("inf")
    ps = p[support]
    return float(np.sum(ps * (np.log(ps) - np.log(q[support]))))


def nll_gradient(s, z: int) -> np.ndarray:
    """Gradient of -s_z + log sum_z' exp(s_z') at s, namely p - e_z.

    Its Euclidean norm never exceeds sqrt(2); stacking the two mechanism
    gradients of a cause-effect model therefore stays below 2.
    """
    s = np.asarray(s, dtype=float)
    if not 0 <= z < s.shape[-1]:
        raise ValueError(f"category index {z} out of range for K={s.shape[-1]}")
    g = to_probs(s)
    g[z] -= 1.0
    return g


# ---------------------------------------------------------------------------
# priors and interventions
# ---------------------------------------------------------------------------

def sample_prior(k: int, kind: str, rng: RngStream) -> CategoricalCausal:
    """Draw a reference model: marginal Dir(1_K); conditional rows Dir(1_K)
    for the dense prior or Dir(1_K / K) for the sparse one."""
    if k < 2:
        raise ValueError("need at least two categories")
    if kind not in ("dense", "sparse"):
        raise ValueError(f"unknown prior kind {kind!r}")
    s_x = scores_from_probs(dirichlet_sample(np.ones(k), rng))
    alpha = np.ones(k) if kind == "dense" else np.ones(k) / k
    rows = np.stack([scores_from_probs(dirichlet_sample(alpha, rng)) for _ in range(k)])
    return CategoricalCausal(s_x=s_x, s_y_given_x=rows)


def intervene(model: CategoricalCausal, kind: str, rng: RngStream) -> CategoricalCausal:
    """Transfer model after replacing one mechanism with a uniform-simplex draw.

    cause: new marginal, conditional untouched. effect: every conditional
    row set to the same fresh marginal, making X and Y independent.
    single_mechanism: only the row of the most probable cause value is
    replaced (lowest index wins ties).
    """
    fresh = scores_from_probs(dirichlet_sample(np.ones(model.k), rng))
    if kind == "cause":
        return CategoricalCausal(s_x=fresh, s_y_given_x=model.s_y_given_x.copy())
    if kind == "effect":
        return CategoricalCausal(
            s_x=model.s_x.copy(), s_y_given_x=np.tile(fresh, (model.k, 1))
        )
    if kind == "single_mechanism":
        x0 = int(np.argmax(to_probs(model.s_x)))
        rows = model.s_y_given_x.copy()
        rows[x0] = fresh
        return CategoricalCausal(s_x=model.s_x.copy(), s_y_given_x=rows)
    raise ValueError(f"unknown intervention kind {kind!r}")


# ---------------------------------------------------------------------------
# distance geometry
# ---------------------------------------------------------------------------

def _ssq(v: np.ndarray) -> float:
    return float(np.sum(np.square(v)))


def causal_param_vector(model: CategoricalCausal) -> np.ndarray:
    """Marginal scores followed by the conditional rows in index order."""
    return np.concatenate([model.s_x, model.s_y_given_x.ravel()])


def anticausal_param_vector(model: CategoricalAnticausal) -> np.ndarray:
    return np.concatenate([model.s_y, model.s_x_given_y.ravel()])


def distances(reference: CategoricalCausal, transfer: CategoricalCausal):
    """Squared parameter distance from reference to transfer, each direction.

    The anticausal side reverses both models first; both sides stack the
    marginal and all conditional rows into one flat vector.
    """
    if reference.k != transfer.k:
        raise ValueError("models must share the same number of categories")
    delta_causal = _ssq(causal_param_vector(reference) - causal_param_vector(transfer))
    delta_anticausal = _ssq(
        anticausal_param_vector(reverse_model(reference))
        - anticausal_param_vector(reverse_model(transfer))
    )
    return delta_causal, delta_anticausal


def effect_geometry(reference: CategoricalCausal, s_star_y) -> EffectGeometry:
    """Advantage sphere for an effect intervention moving the marginal to
    ``s_star_y``.

    delta equals delta_causal - delta_anticausal of the corresponding
    effect intervention, written as (K-1) (||s_star_y - center||^2 -
    r_squared).
    """
    s_star_y = np.asarray(s_star_y, dtype=float)
    k = reference.k
    stats = cond_stats(reference)
    s_y = effect_marginal_scores(reference)
    center = (k * stats.m - s_y) / (k - 1)
    r_squared = (
        k * _ssq(stats.n - reference.s_x)
        + (k - 1) * _ssq(center)
        + _ssq(s_y)
        - k * _ssq(stats.m)
    ) / (k - 1)
    r_squared = max(r_squared, 0.0)  # exact value is nonnegative; kill roundoff
    delta = (k - 1) * (_ssq(s_star_y - center) - r_squared)
    return EffectGeometry(center=center, r_squared=r_squared, delta=delta)


def single_mechanism_identity(
    reference: CategoricalCausal, transfer: CategoricalCausal
) -> float:
    """Residual of the distance identity for a one-row conditional change.

    With only row x0 replaced, delta_anticausal equals
    (K-1)/K delta_causal + ||s*_Y - s_Y||^2 + (K-1) (A*(x0) - A(x0))^2.
    Returns |lhs - rhs|; raises if more than one row (or the marginal)
    changed.
    """
    if reference.k != transfer.k:
        raise ValueError("models must share the same number of categories")
    if np.any(reference.s_x != transfer.s_x):
        raise ValueError("cause marginal must be unchanged")
    changed = np.flatnonzero(np.any(reference.s_y_given_x != transfer.s_y_given_x, axis=1))
    if changed.size > 1:
        raise ValueError("more than one conditional row differs")
    k = reference.k
    x0 = int(changed[0]) if changed.size else 0
    delta_causal, delta_anticausal = distances(reference, transfer)
    a_ref = _logsumexp_rows(reference.s_y_given_x[x0][None, :])[0]
    a_tra = _logsumexp_rows(transfer.s_y_given_x[x0][None, :])[0]
    marg_shift = _ssq(
        effect_marginal_scores(transfer) - effect_marginal_scores(reference)
    )
    rhs = (k - 1) / k * delta_causal + marg_shift + (k - 1) * (a_tra - a_ref) ** 2
    return abs(delta_anticausal - rhs)


def radius_estimate(k: int, kind: str) -> float:
    """Closed-form estimate K psi1(K lam) + psi1(lam) of the expected
    squared advantage radius, lam = 1 (dense) or 1/K (sparse).

    Derived from exp-gamma variances under an independence approximation;
    meant for K >= 10 and accurate only up to its O(1)-vs-O(K^2) scaling.
    """
    if kind not in ("dense", "sparse"):
        raise ValueError(f"unknown prior kind {kind!r}")
    lam = 1.0 if kind == "dense" else 1.0 / k
    return float(k * polygamma(1, k * lam) + polygamma(1, lam))


# ---------------------------------------------------------------------------
# direction identification under the dense prior
# ---------------------------------------------------------------------------

def bayes_direction_score(p_x, p_y) -> float:
    """KL(u||p_X) - KL(u||p_Y) with u uniform.

    Positive means X has the less uniform marginal, hence X is the cause;
    negative predicts the opposite direction; zero is a tie. This is the
    exact Bayes rule when both mechanisms are uniform on the simplex.
    """
    p_x = np.asarray(p_x, dtype=float)
    p_y = np.asarray(p_y, dtype=float)
    if np.any(p_x <= 0) or np.any(p_y <= 0):
        raise ValueError("marginals must be strictly positive")
    u = np.full(p_x.shape, 1.0 / p_x.size)
    return kl_categorical(u, p_x) - kl_categorical(u, p_y)


def estimate_bayes_error(k: int, n_trials: int, rng: RngStream) -> float:
    """Misclassification rate of the direction rule over dense-prior draws.

    Samples joint distributions with X as cause and a fair coin for the
    presented orientation; exact ties count half. Vectorized over batches,
    equivalent to scoring each draw with :func:`bayes_direction_score`.
    """
    if n_trials < 1:
        raise ValueError("need at least one trial")
    errors = 0.0
    done = 0
    batch_max = max(1, 2_000_000 // (k * k))
    while done < n_trials:
        b = min(n_trials - done, batch_max)
        g_x = rng.gen.gamma(1.0, size=(b, k))
        p_x = g_x / g_x.sum(axis=1, keepdims=True)
        g_c = rng.gen.gamma(1.0, size=(b, k, k))
        cond = g_c / g_c.sum(axis=2, keepdims=True)
        p_y = np.einsum("bk,bkj->bj", p_x, cond)
        # sign of KL(u||p_X) - KL(u||p_Y); the coin flip does not change
        # whether the prediction is wrong, so errors are score < 0
        score = np.log(p_y).sum(axis=1) - np.log(p_x).sum(axis=1)
        errors += np.count_nonzero(score < 0) + 0.5 * np.count_nonzero(score == 0)
        done += b
    return errors / n_trials
