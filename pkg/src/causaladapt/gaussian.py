"""Linear-Gaussian cause-effect models in three coordinate systems.

The causal model is X ~ N(mu_X, Sigma_X), Y|X ~ N(A x + a, Sigma_YgX).
Besides these mean parameters it can be written in natural coordinates
(eta = Sigma^-1 mu, Lambda = Sigma^-1, B = Lambda_YgX A, b = Lambda_YgX a),
where the negative log-likelihood is convex, and in Cholesky coordinates
(zeta = L^-1 eta, Lambda = L L^T), where the smooth part of the loss is a
plain quadratic and the log-det barrier has a one-dimensional prox. This
module holds the conversions, direction reversal, joint forms, KL in all
three systems, the stochastic gradient of the quadratic part, the
normal-Wishart style prior, interventions and parameter distances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .sampling import RngStream, WishartParams, wishart_sample


@dataclass
class GaussianMean:
    """Mean parametrization (mu_X, Sigma_X, A, a, Sigma_YgX)."""

    mu_x: np.ndarray
    cov_x: np.ndarray
    a_mat: np.ndarray
    a_vec: np.ndarray
    cov_ygx: np.ndarray

    @property
    def k(self) -> int:
        return self.mu_x.shape[0]


@dataclass
class GaussianNatural:
    """Natural parametrization (eta_X, Lambda_X, B, b, Lambda_YgX).

    The same container represents an anticausal model, with the marginal
    slots holding (eta_Y, Lambda_Y) and the conditional slots X given Y.
    """

    eta_x: np.ndarray
    prec_x: np.ndarray
    b_mat: np.ndarray
    b_vec: np.ndarray
    prec_ygx: np.ndarray

    @property
    def k(self) -> int:
        return self.eta_x.shape[0]


@dataclass
class GaussianCholesky:
    """Cholesky parametrization (zeta_X, L_X, M, m, L_YgX).

    L factors are lower triangular with positive diagonal; the conditional
    natural mean is zeta_YgX = M x + m.
    """

    zeta_x: np.ndarray
    chol_x: np.ndarray
    m_mat: np.ndarray
    m_vec: np.ndarray
    chol_ygx: np.ndarray

    @property
    def k(self) -> int:
        return self.zeta_x.shape[0]


@dataclass
class GaussianJointNatural:
    """Natural parameters (eta, Lambda) of the joint 2K-dimensional law."""

    eta: np.ndarray
    prec: np.ndarray


def _sym(mat: np.ndarray) -> np.ndarray:
    return (mat + mat.T) / 2


def _logdet_from_cho(cf) -> float:
    return float(2.0 * np.sum(np.log(np.diag(cf[0]))))


# ---------------------------------------------------------------------------
# conversions
# ---------------------------------------------------------------------------

def mean_to_natural(model: GaussianMean) -> GaussianNatural:
    cf_x = cho_factor(model.cov_x, lower=True)
    cf_c = cho_factor(model.cov_ygx, lower=True)
    prec_x = _sym(cho_solve(cf_x, np.eye(model.k)))
    prec_ygx = _sym(cho_solve(cf_c, np.eye(model.k)))
    return GaussianNatural(
        eta_x=prec_x @ model.mu_x,
        prec_x=prec_x,
        b_mat=prec_ygx @ model.a_mat,
        b_vec=prec_ygx @ model.a_vec,
        prec_ygx=prec_ygx,
    )


def natural_to_mean(model: GaussianNatural) -> GaussianMean:
    cf_x = cho_factor(model.prec_x, lower=True)
    cf_c = cho_factor(model.prec_ygx, lower=True)
    cov_x = _sym(cho_solve(cf_x, np.eye(model.k)))
    cov_ygx = _sym(cho_solve(cf_c, np.eye(model.k)))
    return GaussianMean(
        mu_x=cho_solve(cf_x, model.eta_x),
        cov_x=cov_x,
        a_mat=cho_solve(cf_c, model.b_mat),
        a_vec=cho_solve(cf_c, model.b_vec),
        cov_ygx=cov_ygx,
    )


def natural_to_cholesky(model: GaussianNatural) -> GaussianCholesky:
    chol_x = np.linalg.cholesky(model.prec_x)
    chol_ygx = np.linalg.cholesky(model.prec_ygx)
    return GaussianCholesky(
        zeta_x=solve_triangular(chol_x, model.eta_x, lower=True),
        chol_x=chol_x,
        m_mat=solve_triangular(chol_ygx, model.b_mat, lower=True),
        m_vec=solve_triangular(chol_ygx, model.b_vec, lower=True),
        chol_ygx=chol_ygx,
    )


def cholesky_to_natural(model: GaussianCholesky) -> GaussianNatural:
    return GaussianNatural(
        eta_x=model.chol_x @ model.zeta_x,
        prec_x=_sym(model.chol_x @ model.chol_x.T),
        b_mat=model.chol_ygx @ model.m_mat,
        b_vec=model.chol_ygx @ model.m_vec,
        prec_ygx=_sym(model.chol_ygx @ model.chol_ygx.T),
    )


_FORMS = {
    "mean": GaussianMean,
    "natural": GaussianNatural,
    "cholesky": GaussianCholesky,
}


def convert(model, to: str):
    """Convert between mean, natural and Cholesky forms (natural as hub)."""
    if to not in _FORMS:
        raise ValueError(f"unknown form {to!r}")
    target = _FORMS[to]
    if isinstance(model, target):
        return model
    if isinstance(model, GaussianMean):
        nat = mean_to_natural(model)
    elif isinstance(model, GaussianCholesky):
        nat = cholesky_to_natural(model)
    elif isinstance(model, GaussianNatural):
        nat = model
    else:
        raise TypeError(f"not a Gaussian model: {type(model).__name__}")
    if target is GaussianNatural:
        return nat
    return natural_to_mean(nat) if target is GaussianMean else natural_to_cholesky(nat)


# ---------------------------------------------------------------------------
# joint forms and reversal
# ---------------------------------------------------------------------------

def joint_natural(model: GaussianNatural) -> GaussianJointNatural:
    """Natural parameters of the joint (X, Y) law."""
    cf = cho_factor(model.prec_ygx, lower=True)
    top_left = _sym(model.prec_x + model.b_mat.T @ cho_solve(cf, model.b_mat))
    prec = np.block([[top_left, -model.b_mat.T], [-model.b_mat, model.prec_ygx]])
    eta = np.concatenate(
        [model.eta_x - model.b_mat.T @ cho_solve(cf, model.b_vec), model.b_vec]
    )
    return GaussianJointNatural(eta=eta, prec=_sym(prec))


def joint_mean(model: GaussianMean):
    """Mean and covariance of the joint (X, Y) law."""
    mu = np.concatenate([model.mu_x, model.a_mat @ model.mu_x + model.a_vec])
    cross = model.cov_x @ model.a_mat.T
    cov = np.block(
        [
            [model.cov_x, cross],
            [cross.T, model.cov_ygx + model.a_mat @ cross],
        ]
    )
    return mu, _sym(cov)


def joint_cholesky(model: GaussianCholesky):
    """Joint Cholesky parameters in (Y, X) ordering.

    Returns (zeta, L) with L = [[L_YgX, 0], [-M^T, L_X]] and
    zeta = (m, zeta_X); L L^T is the joint precision with Y listed first.
    The stacking is exactly the five conditional-form blocks, so distances
    between joint factors equal distances between model parameters.
    """
    k = model.k
    factor = np.zeros((2 * k, 2 * k))
    factor[:k, :k] = model.chol_ygx
    factor[k:, :k] = -model.m_mat.T
    factor[k:, k:] = model.chol_x
    zeta = np.concatenate([model.m_vec, model.zeta_x])
    return zeta, factor


def reverse_model_natural(model: GaussianNatural) -> GaussianNatural:
    """Anticausal natural parameters (Y marginal, X given Y) of the same joint.

    Conditional: C = B^T, c = eta_X - B^T Lambda_YgX^-1 b,
    Lambda_XgY = Lambda_X + B^T Lambda_YgX^-1 B. Marginal by eliminating
    the conditional from the joint. Applying it twice returns the original
    model.
    """
    cf = cho_factor(model.prec_ygx, lower=True)
    c_mat = model.b_mat.T.copy()
    c_vec = model.eta_x - model.b_mat.T @ cho_solve(cf, model.b_vec)
    prec_xgy = _sym(model.prec_x + model.b_mat.T @ cho_solve(cf, model.b_mat))
    cf_xgy = cho_factor(prec_xgy, lower=True)
    prec_y = _sym(model.prec_ygx - c_mat.T @ cho_solve(cf_xgy, c_mat))
    eta_y = model.b_vec + c_mat.T @ cho_solve(cf_xgy, c_vec)
    return GaussianNatural(
        eta_x=eta_y, prec_x=prec_y, b_mat=c_mat, b_vec=c_vec, prec_ygx=prec_xgy
    )


def log_density(model: GaussianNatural, x, y) -> float:
    """Joint log density at (x, y) evaluated through the two mechanisms."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def _term(eta, prec, v):
        cf = cho_factor(prec, lower=True)
        return (
            0.5 * _logdet_from_cho(cf)
            - 0.5 * v.shape[0] * np.log(2 * np.pi)
            - 0.5 * v @ prec @ v
            + eta @ v
            - 0.5 * eta @ cho_solve(cf, eta)
        )

    cond_eta = model.b_mat @ x + model.b_vec
    return float(_term(model.eta_x, model.prec_x, x) + _term(cond_eta, model.prec_ygx, y))


# ---------------------------------------------------------------------------
# KL divergence in the three parametrizations
# ---------------------------------------------------------------------------

def _kl_mean_joint(mu0, cov0, mu1, cov1) -> float:
    k = mu0.shape[0]
    cf1 = cho_factor(cov1, lower=True)
    diff = mu1 - mu0
    logdet0 = _logdet_from_cho(cho_factor(cov0, lower=True))
    logdet1 = _logdet_from_cho(cf1)
    return 0.5 * (
        diff @ cho_solve(cf1, diff)
        + np.trace(cho_solve(cf1, cov0))
        - k
        - (logdet0 - logdet1)
    )


def _kl_natural_joint(eta0, prec0, eta1, prec1) -> float:
    k = eta0.shape[0]
    cf0 = cho_factor(prec0, lower=True)
    cf1 = cho_factor(prec1, lower=True)
    mu0 = cho_solve(cf0, eta0)
    return 0.5 * (
        eta1 @ cho_solve(cf1, eta1)
        - 2.0 * eta1 @ mu0
        + mu0 @ prec1 @ mu0
        + np.trace(cho_solve(cf0, prec1))
        - k
        - (_logdet_from_cho(cf1) - _logdet_from_cho(cf0))
    )


def kl_joint_cholesky(zeta0, chol0, zeta1, chol1) -> float:
    """2 KL = ||V^T zeta0 - zeta1||^2 + ||V||_F^2 - k - 2 log|V|, V = L0^-1 L1."""
    k = zeta0.shape[0]
    v = solve_triangular(chol0, chol1, lower=True)
    return 0.5 * (
        float(np.sum((v.T @ zeta0 - zeta1) ** 2))
        + float(np.sum(v * v))
        - k
        - 2.0 * float(np.sum(np.log(np.diag(v))))
    )


def kl_gaussian(p0, p1, form: str = "cholesky") -> float:
    """KL(p0 || p1) between the joint laws, computed in the chosen form.

    Inputs may be given in any parametrization; they are converted as
    needed. The three forms agree up to roundoff.
    """
    if form == "mean":
        m0, m1 = convert(p0, "mean"), convert(p1, "mean")
        return float(_kl_mean_joint(*joint_mean(m0), *joint_mean(m1)))
    if form == "natural":
        j0 = joint_natural(convert(p0, "natural"))
        j1 = joint_natural(convert(p1, "natural"))
        return float(_kl_natural_joint(j0.eta, j0.prec, j1.eta, j1.prec))
    if form == "cholesky":
        z0, l0 = joint_cholesky(convert(p0, "cholesky"))
        z1, l1 = joint_cholesky(convert(p1, "cholesky"))
        return float(kl_joint_cholesky(z0, l0, z1, l1))
    raise ValueError(f"unknown form {form!r}")


# ---------------------------------------------------------------------------
# stochastic gradient of the smooth loss part (Cholesky coordinates)
# ---------------------------------------------------------------------------

def nll_smooth_gradient(params: GaussianCholesky, x, y) -> GaussianCholesky:
    """Gradient of 1/2 ||L_X^T x - zeta_X||^2 + 1/2 ||L_YgX^T y - (M x + m)||^2.

    Only the quadratic part; the log-barrier on the L diagonals is handled
    by the prox. Gradients for the L factors are restricted to the lower
    triangle since upper entries are structurally zero. Returned in a
    parameter-shaped container.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    res_x = params.chol_x.T @ x - params.zeta_x
    res_c = params.chol_ygx.T @ y - (params.m_mat @ x + params.m_vec)
    return GaussianCholesky(
        zeta_x=-res_x,
        chol_x=np.tril(np.outer(x, res_x)),
        m_mat=-np.outer(res_c, x),
        m_vec=-res_c,
        chol_ygx=np.tril(np.outer(y, res_c)),
    )


# ---------------------------------------------------------------------------
# prior and interventions
# ---------------------------------------------------------------------------

def _draw_marginal(k: int, n0: int, scale: np.ndarray, rng: RngStream):
    """(eta, Lambda) with Lambda ~ W(n0, scale) and eta | Lambda ~ N(0, Lambda/n0)."""
    prec = wishart_sample(WishartParams(dof=n0, scale=scale), rng)
    eta = np.linalg.cholesky(prec / n0) @ rng.gen.standard_normal(k)
    return eta, prec


def sample_prior(k: int, rng: RngStream) -> GaussianNatural:
    """Pseudo-conjugate prior with n0 = 2K + 2 pseudo-observations.

    Lambda_X ~ W(n0, I/K); eta_X | Lambda_X ~ N(0, Lambda_X / n0);
    Lambda_YgX ~ W(n0, 10 I/K) (the conditional is nearly deterministic);
    b | Lambda_YgX ~ N(0, Lambda_YgX / n0); B = Lambda_YgX A with the
    entries of A iid N(0, 1/K) so the linear map preserves the scale of X
    and the implied law of (eta_Y, Lambda_Y) roughly matches the marginal
    prior.
    """
    if k < 1:
        raise ValueError("dimension must be positive")
    n0 = 2 * k + 2
    eye = np.eye(k)
    eta_x, prec_x = _draw_marginal(k, n0, eye / k, rng)
    b_vec, prec_ygx = _draw_marginal(k, n0, 10 * eye / k, rng)
    a_mat = rng.gen.standard_normal((k, k)) / np.sqrt(k)
    return GaussianNatural(
        eta_x=eta_x,
        prec_x=prec_x,
        b_mat=prec_ygx @ a_mat,
        b_vec=b_vec,
        prec_ygx=prec_ygx,
    )


def intervene_gaussian(model: GaussianNatural, kind: str, rng: RngStream) -> GaussianNatural:
    """Transfer model after an intervention drawn from the marginal prior.

    cause: fresh (eta_X, Lambda_X), conditional untouched. effect: the
    conditional becomes the fresh Y marginal itself (B = 0, b = eta_Y,
    Lambda_YgX = Lambda_Y), making X and Y independent.
    """
    k = model.k
    n0 = 2 * k + 2
    fresh_eta, fresh_prec = _draw_marginal(k, n0, np.eye(k) / k, rng)
    if kind == "cause":
        return GaussianNatural(
            eta_x=fresh_eta,
            prec_x=fresh_prec,
            b_mat=model.b_mat.copy(),
            b_vec=model.b_vec.copy(),
            prec_ygx=model.prec_ygx.copy(),
        )
    if kind == "effect":
        return GaussianNatural(
            eta_x=model.eta_x.copy(),
            prec_x=model.prec_x.copy(),
            b_mat=np.zeros((k, k)),
            b_vec=fresh_eta,
            prec_ygx=fresh_prec,
        )
    raise ValueError(f"unknown intervention kind {kind!r}")


# ---------------------------------------------------------------------------
# parameter distances
# ---------------------------------------------------------------------------

def natural_param_vector(model: GaussianNatural) -> np.ndarray:
    """All five natural blocks stacked into one flat vector."""
    return np.concatenate(
        [
            model.eta_x,
            model.prec_x.ravel(),
            model.b_mat.ravel(),
            model.b_vec,
            model.prec_ygx.ravel(),
        ]
    )


def cholesky_param_vector(model: GaussianCholesky) -> np.ndarray:
    """Flat Cholesky parameters; L factors contribute lower triangles only.

    Layout: zeta_X, tril(L_X), M row-major, m, tril(L_YgX), with the lower
    triangles in numpy's row-major tril order. :func:`cholesky_unpack`
    inverts the packing and :func:`cholesky_diag_indices` locates the
    factor diagonals inside the flat vector.
    """
    low = np.tril_indices(model.k)
    return np.concatenate(
        [
            model.zeta_x,
            model.chol_x[low],
            model.m_mat.ravel(),
            model.m_vec,
            model.chol_ygx[low],
        ]
    )


def cholesky_unpack(vec: np.ndarray, k: int) -> GaussianCholesky:
    """Inverse of :func:`cholesky_param_vector`."""
    vec = np.asarray(vec, dtype=float)
    low = np.tril_indices(k)
    n_tril = low[0].size
    parts = np.split(vec, np.cumsum([k, n_tril, k * k, k])[:4])
    chol_x = np.zeros((k, k))
    chol_x[low] = parts[1]
    chol_ygx = np.zeros((k, k))
    chol_ygx[low] = parts[4]
    return GaussianCholesky(
        zeta_x=parts[0],
        chol_x=chol_x,
        m_mat=parts[2].reshape(k, k),
        m_vec=parts[3],
        chol_ygx=chol_ygx,
    )


def cholesky_diag_indices(k: int) -> np.ndarray:
    """Positions of the two factor diagonals in the packed Cholesky vector."""
    rows, cols = np.tril_indices(k)
    within = np.flatnonzero(rows == cols)
    n_tril = rows.size
    first = k + within
    second = k + n_tril + k * k + k + within
    return np.concatenate([first, second])


def intervention_distances(
    reference: GaussianNatural, transfer: GaussianNatural, form: str = "natural"
):
    """Squared distance to the post-intervention optimum, each direction.

    Euclidean on vectors and Frobenius on matrices, summed over the five
    parameter blocks; the anticausal side reverses both models first. For
    cause interventions the natural form always satisfies
    delta_anticausal > delta_causal; the Cholesky form carries no such
    guarantee.
    """
    if reference.k != transfer.k:
        raise ValueError("models must share the same dimension")
    if form == "natural":
        pack = natural_param_vector
        fwd_ref, fwd_tra = reference, transfer
    elif form == "cholesky":
        pack = cholesky_param_vector
        fwd_ref = natural_to_cholesky(reference)
        fwd_tra = natural_to_cholesky(transfer)
    else:
        raise ValueError(f"unknown form {form!r}")
    delta_causal = float(np.sum((pack(fwd_ref) - pack(fwd_tra)) ** 2))
    rev_ref = reverse_model_natural(reference)
    rev_tra = reverse_model_natural(transfer)
    if form == "cholesky":
        rev_ref = natural_to_cholesky(rev_ref)
        rev_tra = natural_to_cholesky(rev_tra)
    delta_anticausal = float(np.sum((pack(rev_ref) - pack(rev_tra)) ** 2))
    return delta_causal, delta_anticausal
