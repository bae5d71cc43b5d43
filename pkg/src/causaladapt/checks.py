"""Randomized invariant suites runnable from the CLI.

``check_properties`` draws ``n_cases`` random instances at size K and
verifies the structural identities and inequalities each module promises:
reversal consistency, the intervention-distance inequalities and
identities, gradient bounds against finite differences, prior
factorization moments, optimizer averaging and positivity, and the
convergence-rate envelope. Failures are report content, not exceptions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import categorical as cat, gaussian as gau
from .optim import asgd, stochastic_prox_grad
from .sampling import RngStream, dirichlet_sample


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class CheckReport:
    family: str
    k: int
    n_cases: int
    results: list = field(default_factory=list)

    def add(self, name: str, passed: bool, detail: str = ""):
        self.results.append(CheckResult(name, bool(passed), detail))

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results)

    def lines(self):
        for r in self.results:
            status = "PASS" if r.passed else "FAIL"
            yield f"{status} {r.name}" + (f" ({r.detail})" if r.detail else "")


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-30)


def _fd_gradient(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# ---------------------------------------------------------------------------
# categorical family
# ---------------------------------------------------------------------------

def _check_categorical(report: CheckReport, k: int, n: int, rng: RngStream):
    max_joint = max_lemma = max_prop4 = 0.0
    prop1_viol = 0
    max_prop2 = 0.0
    max_grad_norm = 0.0
    max_fd = 0.0
    max_shift = 0.0
    for i in range(n):
        kind = "dense" if i % 2 == 0 else "sparse"
        model = cat.sample_prior(k, kind, rng.child("model", i))
        rev = cat.reverse_model(model)
        stats = cat.cond_stats(model)

        jc = cat.joint_probs(model)
        ja = cat.joint_probs_anticausal(rev)
        max_joint = max(max_joint, float(np.abs(jc - ja).max()))

        lemma = (rev.s_x_given_y - stats.n[None, :]) - (
            model.s_y_given_x.T - stats.m[:, None]
        )
        max_lemma = max(max_lemma, float(np.abs(lemma).max()))

        max_prop4 = max(
            max_prop4,
            _rel(
                float(np.sum((model.s_x - stats.n) ** 2)),
                k * float(np.var(stats.log_partition)),
            ),
        )

        tra_c = cat.intervene(model, "cause", rng.child("cause", i))
        dc, da = cat.distances(model, tra_c)
        if da < k * dc * (1 - 1e-9) - 1e-12:
            prop1_viol += 1

        tra_e = cat.intervene(model, "effect", rng.child("effect", i))
        dc_e, da_e = cat.distances(model, tra_e)
        geom = cat.effect_geometry(model, tra_e.s_y_given_x[0])
        max_prop2 = max(max_prop2, _rel(geom.delta, dc_e - da_e))

        s = model.s_y_given_x[0]
        z = int(rng.child("z", i).gen.integers(k))
        g = cat.nll_gradient(s, z)
        max_grad_norm = max(max_grad_norm, float(np.linalg.norm(g)))
        fd = _fd_gradient(
            lambda v: -v[z] + np.log(np.exp(v - v.max()).sum()) + v.max(), s.copy()
        )
        max_fd = max(max_fd, float(np.abs(g - fd).max()))

        lam = float(rng.child("lam", i).gen.normal())
        shift = cat.to_probs(s + lam) - cat.to_probs(s)
        max_shift = max(max_shift, float(np.abs(shift).max()))

    report.add("reversal joint consistency", max_joint <= 1e-12, f"max abs {max_joint:.2e}")
    report.add("conditional average identity", max_lemma <= 1e-10, f"max abs {max_lemma:.2e}")
    report.add(
        "cause-intervention distance factor K",
        prop1_viol == 0,
        f"{prop1_viol} violations over {n} cases",
    )
    report.add(
        "effect-intervention distance identity", max_prop2 <= 1e-9, f"max rel {max_prop2:.2e}"
    )
    report.add(
        "log-partition variance identity", max_prop4 <= 1e-9, f"max rel {max_prop4:.2e}"
    )
    report.add(
        "score gradient bound sqrt(2)",
        max_grad_norm <= np.sqrt(2) + 1e-12,
        f"max norm {max_grad_norm:.6f}",
    )
    report.add("score gradient finite differences", max_fd <= 1e-6, f"max abs {max_fd:.2e}")
    report.add("softargmax translation invariance", max_shift <= 1e-12, f"max abs {max_shift:.2e}")

    _check_sparse_factorization(report, rng.child("factorization"))
    _check_sparse_kl_scale(report, rng.child("kl-scale"))
    _check_asgd_properties(report, k, rng.child("optim"))


def _check_sparse_factorization(report: CheckReport, rng: RngStream):
    """Sparse-prior joint moments match direct Dirichlet(1/K over K^2 cells)."""
    k, n = 4, 20000
    gen_a = rng.child("factored").gen
    gx = gen_a.gamma(1.0, size=(n, k))
    px = gx / gx.sum(axis=1, keepdims=True)
    gc = gen_a.gamma(1.0 / k, size=(n, k, k))
    gc_sum = gc.sum(axis=2, keepdims=True)
    cond = gc / np.maximum(gc_sum, 1e-300)
    joint_f = (px[:, :, None] * cond).reshape(n, k * k)
    gen_b = rng.child("direct").gen
    gd = gen_b.gamma(1.0 / k, size=(n, k * k))
    joint_d = gd / np.maximum(gd.sum(axis=1, keepdims=True), 1e-300)
    band = 5.0 / np.sqrt(n)
    mean_gap = float(np.abs(joint_f.mean(0) - joint_d.mean(0)).max())
    var_gap = float(np.abs(joint_f.var(0) - joint_d.var(0)).max())
    ok = mean_gap <= band and var_gap <= band
    report.add(
        "sparse prior joint factorization moments",
        ok,
        f"mean gap {mean_gap:.4f}, var gap {var_gap:.4f}, band {band:.4f}",
    )


def _check_sparse_kl_scale(report: CheckReport, rng: RngStream):
    """Effect interventions under the sparse prior blow up the initial KL.

    Native size of the phenomenon is K = 20; the median ratio to cause
    interventions must be at least 5.
    """
    k, n = 20, 60
    ratios_c, ratios_e = [], []
    for i in range(n):
        model = cat.sample_prior(k, "sparse", rng.child("m", i))
        p_ref = cat.joint_probs(model).ravel()
        tra_c = cat.intervene(model, "cause", rng.child("c", i))
        tra_e = cat.intervene(model, "effect", rng.child("e", i))
        ratios_c.append(cat.kl_categorical(cat.joint_probs(tra_c).ravel(), p_ref))
        ratios_e.append(cat.kl_categorical(cat.joint_probs(tra_e).ravel(), p_ref))
    ratio = float(np.median(ratios_e) / np.median(ratios_c))
    report.add(
        "sparse effect-intervention KL scale",
        ratio >= 5.0,
        f"median effect/cause initial KL ratio {ratio:.1f}",
    )


def _check_asgd_properties(report: CheckReport, k: int, rng: RngStream):
    # running-average identity on a recorded trajectory
    gen = rng.child("avg").gen
    p_star = dirichlet_sample(np.ones(k), rng.child("target"))
    cells = gen.choice(k, size=200, p=p_star)
    iterates = []

    def grad(theta, t):
        iterates.append(theta.copy())
        return cat.nll_gradient(theta, int(cells[t]))

    traj = asgd(grad, np.zeros(k), 0.2, 200, kl_fn=None)
    gap = float(np.abs(np.mean(iterates, axis=0) - traj.theta_avg).max())
    report.add("averaged iterate identity", gap <= 1e-12, f"max abs {gap:.2e}")

    # all models of the same reference start at the same KL
    model = cat.sample_prior(k, "dense", rng.child("ref"))
    transfer = cat.intervene(model, "cause", rng.child("int"))
    from .harness import CategoricalProblem

    kls = [
        CategoricalProblem(model, transfer, m).kl_fn(
            CategoricalProblem(model, transfer, m).theta0
        )
        for m in ("causal", "anticausal", "joint")
    ]
    spread = max(kls) - min(kls)
    report.add("equal initial KL across models", spread <= 1e-9, f"spread {spread:.2e}")

    # rate envelope on the marginal problem: mean KL within the bound
    c, horizon, seeds = 0.5, 400, 100
    gamma = c / np.sqrt(horizon)
    s_star = cat.scores_from_probs(p_star)
    delta = float(np.sum(s_star**2))
    finals = []
    for s in range(seeds):
        gen_s = rng.child("rate", s).gen
        data = gen_s.choice(k, size=horizon, p=p_star)
        traj = asgd(
            lambda th, t: cat.nll_gradient(th, int(data[t])),
            np.zeros(k),
            gamma,
            horizon,
            kl_fn=lambda th: cat.kl_categorical(p_star, cat.to_probs(th)),
        )
        finals.append(traj.final_kl)
    finals = np.array(finals)
    bound = (delta / c + c * 2.0) / (2 * np.sqrt(horizon))
    se = float(finals.std(ddof=1) / np.sqrt(seeds))
    ok = finals.mean() <= bound + 3 * se
    report.add(
        "averaged-SGD rate envelope",
        ok,
        f"mean KL {finals.mean():.4f} vs bound {bound:.4f} + 3se {3 * se:.4f}",
    )


# ---------------------------------------------------------------------------
# gaussian family
# ---------------------------------------------------------------------------

def _check_gaussian(report: CheckReport, k: int, n: int, rng: RngStream):
    max_round = max_logdens = max_double = max_kl = 0.0
    nat_viol = 0
    cho_viol = 0
    max_effect_id = 0.0
    max_fd = 0.0
    for i in range(n):
        model = gau.sample_prior(k, rng.child("model", i))

        # conversion round trip through all three forms
        mean = gau.natural_to_mean(model)
        back = gau.cholesky_to_natural(
            gau.natural_to_cholesky(gau.mean_to_natural(mean))
        )
        for a, b in [
            (model.eta_x, back.eta_x),
            (model.prec_x, back.prec_x),
            (model.b_mat, back.b_mat),
            (model.b_vec, back.b_vec),
            (model.prec_ygx, back.prec_ygx),
        ]:
            max_round = max(max_round, float(np.abs(a - b).max() / max(np.abs(a).max(), 1e-12)))

        rev = gau.reverse_model_natural(model)
        gen = rng.child("pts", i).gen
        for _ in range(5):
            x = gen.standard_normal(k)
            y = gen.standard_normal(k)
            ld_c = gau.log_density(model, x, y)
            ld_a = gau.log_density(rev, y, x)
            max_logdens = max(max_logdens, _rel(ld_c, ld_a))
        back2 = gau.reverse_model_natural(rev)
        for a, b in [
            (model.eta_x, back2.eta_x),
            (model.prec_x, back2.prec_x),
            (model.b_mat, back2.b_mat),
            (model.b_vec, back2.b_vec),
            (model.prec_ygx, back2.prec_ygx),
        ]:
            max_double = max(max_double, float(np.abs(a - b).max() / max(np.abs(a).max(), 1e-12)))

        other = gau.sample_prior(k, rng.child("other", i))
        kls = [gau.kl_gaussian(model, other, form) for form in ("mean", "natural", "cholesky")]
        max_kl = max(max_kl, _rel(min(kls), max(kls)))

        tra = gau.intervene_gaussian(model, "cause", rng.child("cause", i))
        dc, da = gau.intervention_distances(model, tra, "natural")
        if not da > dc:
            nat_viol += 1
        dc_c, da_c = gau.intervention_distances(model, tra, "cholesky")
        if da_c <= dc_c:
            cho_viol += 1

        tra_e = gau.intervene_gaussian(model, "effect", rng.child("effect", i))
        rev_e = gau.reverse_model_natural(tra_e)
        max_effect_id = max(
            max_effect_id,
            float(np.abs(rev_e.prec_ygx - model.prec_x).max()),
            float(np.abs(rev_e.b_vec - model.eta_x).max()),
            float(np.abs(rev_e.b_mat).max()),
        )

        # finite differences on the smooth gradient (packed coordinates)
        params = gau.natural_to_cholesky(model)
        theta = gau.cholesky_param_vector(params)
        x = gen.standard_normal(k)
        y = gen.standard_normal(k)

        def smooth_loss(vec):
            p = gau.cholesky_unpack(vec, k)
            rx = p.chol_x.T @ x - p.zeta_x
            rc = p.chol_ygx.T @ y - (p.m_mat @ x + p.m_vec)
            return 0.5 * float(rx @ rx + rc @ rc)

        g = gau.cholesky_param_vector(gau.nll_smooth_gradient(params, x, y))
        fd = _fd_gradient(smooth_loss, theta, h=1e-6)
        max_fd = max(max_fd, float(np.abs(g - fd).max()))

    report.add("conversion round trips", max_round <= 1e-9, f"max rel {max_round:.2e}")
    report.add("reversal joint log-density", max_logdens <= 1e-8, f"max rel {max_logdens:.2e}")
    report.add("double reversal identity", max_double <= 1e-9, f"max rel {max_double:.2e}")
    report.add("KL agreement across forms", max_kl <= 1e-8, f"max rel {max_kl:.2e}")
    report.add(
        "cause-intervention natural distance inequality",
        nat_viol == 0,
        f"{nat_viol} violations over {n} cases (cholesky-form violations: {cho_viol})",
    )
    report.add(
        "effect-intervention reversal identity", max_effect_id <= 1e-9, f"max abs {max_effect_id:.2e}"
    )
    report.add("smooth gradient finite differences", max_fd <= 1e-5, f"max abs {max_fd:.2e}")
    _check_prox_properties(report, k, rng.child("prox"))


def _check_prox_properties(report: CheckReport, k: int, rng: RngStream):
    model = gau.sample_prior(k, rng.child("ref"))
    transfer = gau.intervene_gaussian(model, "cause", rng.child("int"))
    from .harness import GaussianProblem

    problem = GaussianProblem(model, transfer, "causal")
    iterates = []
    data = rng.child("data").gen.standard_normal((300, 2 * k))
    base_grad = problem.grad_fn(data[:, :k], data[:, k:])

    def grad(theta, t):
        iterates.append(theta.copy())
        return base_grad(theta, t)

    traj = stochastic_prox_grad(
        grad, problem.theta0, 0.01, 300, problem.diag_idx, kl_fn=None
    )
    gap = float(np.abs(np.mean(iterates, axis=0) - traj.theta_avg).max())
    report.add("prox averaged iterate identity", gap <= 1e-12, f"max abs {gap:.2e}")
    diag_min = min(
        float(it[problem.diag_idx].min()) for it in iterates + [traj.theta_final]
    )
    report.add(
        "prox keeps factor diagonals positive", diag_min > 0, f"min diagonal {diag_min:.3g}"
    )


def check_properties(family: str, k: int, n_cases: int, seed: int) -> CheckReport:
    """Run the invariant suite for one family at size K."""
    report = CheckReport(family=family, k=k, n_cases=n_cases)
    rng = RngStream(seed).child("checks", family, k)
    if family == "categorical":
        _check_categorical(report, k, n_cases, rng)
    elif family == "gaussian":
        _check_gaussian(report, k, n_cases, rng)
    else:
        raise ValueError(f"unknown family {family!r}")
    return report
