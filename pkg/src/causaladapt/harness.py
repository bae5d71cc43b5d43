"""Experiment orchestration: priors, interventions, tuning, runs, CSV output.

One experiment samples reference distributions from a prior, applies
interventions, and lets each candidate model (causal, anticausal, and for
categorical data a joint model over the K^2 cells) adapt to fresh samples
from the transfer distribution with its stochastic optimizer. Per run the
harness tunes a constant step size on the KL after ``eval_step`` samples,
then records the KL trajectory of the averaged iterate together with the
initial parameter distance.

Outputs are flat files in the output directory:

- ``runs.csv``: one row per checkpoint,
  ``reference_id,intervention,model,gamma,delta_init,step,kl``
- ``summary.csv``: per-step percentiles, ``step,model,intervention,p05,p50,p95``
- ``scatter.csv``: ``model,intervention,delta_init,kl_at_eval``
- ``meta.json``: resolved configuration and code version
- ``radius.csv`` (categorical only): advantage-sphere study rows
  ``prior,r_squared,deviation_sq``
- ``pooled.csv`` (when both cause and effect interventions ran):
  ``model,group,step,kl`` averaged over small groups of interventions

Numbers are written with shortest round-trip decimals, and identical
config plus seed reproduces byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import __version__, categorical as cat, gaussian as gau
from .optim import Trajectory, asgd, stochastic_prox_grad, tune_step_size
from .sampling import RngStream, dirichlet_sample

#: repetitions used when tuning the step size for one run
TUNE_REPS = 2

#: draws used for the advantage-radius study written next to categorical runs
RADIUS_DRAWS = 1000

DEFAULT_GRIDS = {
    "categorical": (0.03, 0.1, 0.3, 1.0, 3.0, 10.0),
    "gaussian": (0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0),
}

MODELS = {
    "categorical": ("causal", "anticausal", "joint"),
    "gaussian": ("causal", "anticausal"),
}

INTERVENTIONS = {
    "categorical": ("cause", "effect", "single_mechanism"),
    "gaussian": ("cause", "effect"),
}


@dataclass
class ExperimentConfig:
    family: str = "categorical"
    k: int = 20
    prior: str = "dense"
    interventions: tuple = ("cause",)
    n_references: int = 10
    t: int = 500
    eval_step: int | None = None
    step_grid: tuple | None = None
    n_pool_cause: int = 5
    n_pool_effect: int = 5
    seed: int = 0
    out_dir: str = "out"

    def resolved(self) -> "ExperimentConfig":
        """Fill derived defaults (eval step K^2/4, per-family step grid)."""
        cfg = ExperimentConfig(**asdict(self))
        if cfg.eval_step is None:
            cfg.eval_step = max(1, cfg.k * cfg.k // 4)
        if cfg.step_grid is None:
            cfg.step_grid = DEFAULT_GRIDS[cfg.family]
        cfg.interventions = tuple(cfg.interventions)
        cfg.step_grid = tuple(float(g) for g in cfg.step_grid)
        cfg.validate()
        return cfg

    def validate(self):
        if self.family not in MODELS:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "categorical" and self.prior not in ("dense", "sparse"):
            raise ValueError("categorical prior must be dense or sparse")
        if self.family == "gaussian" and self.prior != "normal_wishart":
            raise ValueError("gaussian prior must be normal_wishart")
        bad = set(self.interventions) - set(INTERVENTIONS[self.family])
        if bad or not self.interventions:
            raise ValueError(f"invalid interventions {sorted(bad)} for {self.family}")
        if self.n_references < 1:
            raise ValueError("n_references must be at least 1")
        if self.eval_step is not None and self.eval_step > self.t:
            raise ValueError("eval_step must not exceed the horizon")
        if self.step_grid is not None and (
            not self.step_grid or any(g <= 0 for g in self.step_grid)
        ):
            raise ValueError("step grid must be nonempty and positive")


_CONFIG_PARSERS = {
    "family": str,
    "k": int,
    "prior": str,
    "interventions": lambda v: tuple(s.strip() for s in v.split(",") if s.strip()),
    "n_references": int,
    "t": int,
    "eval_step": int,
    "step_grid": lambda v: tuple(float(s) for s in v.split(",") if s.strip()),
    "n_pool_cause": int,
    "n_pool_effect": int,
    "seed": int,
    "out_dir": str,
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat ``key = value`` config format; unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_PARSERS:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _CONFIG_PARSERS[key](val.strip())
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


@dataclass
class RunRecord:
    """KL trajectory and metadata for one (reference, intervention, model)."""

    reference_id: int
    intervention: str
    model: str
    gamma: float
    delta_init: float
    steps: np.ndarray
    kls: np.ndarray
    kl_at_eval: float


# ---------------------------------------------------------------------------
# adaptation problems: one per (family, model kind)
# ---------------------------------------------------------------------------

class CategoricalProblem:
    """ASGD adaptation of one categorical model to a transfer distribution."""

    def __init__(self, reference: cat.CategoricalCausal, transfer: cat.CategoricalCausal, model: str):
        self.k = reference.k
        self.model = model
        self.p_star = cat.joint_probs(transfer).ravel()
        if model == "causal":
            theta0 = cat.causal_param_vector(reference)
            theta_star = cat.causal_param_vector(transfer)
        elif model == "anticausal":
            theta0 = cat.anticausal_param_vector(cat.reverse_model(reference))
            theta_star = cat.anticausal_param_vector(cat.reverse_model(transfer))
        elif model == "joint":
            theta0 = cat.scores_from_probs(cat.joint_probs(reference).ravel())
            theta_star = cat.scores_from_probs(self.p_star)
        else:
            raise ValueError(f"unknown model kind {model!r}")
        self.theta0 = theta0
        self.delta = float(np.sum((theta0 - theta_star) ** 2))

    def _model_joint(self, theta: np.ndarray) -> np.ndarray:
        k = self.k
        if self.model == "joint":
            return cat.to_probs(theta)
        marg = cat.to_probs(theta[:k])
        rows = cat.to_probs(theta[k:].reshape(k, k))
        table = marg[:, None] * rows
        if self.model == "anticausal":
            table = table.T  # rows were x-given-y, marginal was y
        return table.ravel()

    def kl_fn(self, theta: np.ndarray) -> float:
        return cat.kl_categorical(self.p_star, self._model_joint(theta))

    def grad_fn(self, cells: np.ndarray):
        k = self.k
        model = self.model

        def grad(theta, t):
            x, y = divmod(int(cells[t]), k)
            if model == "joint":
                g = cat.to_probs(theta)
                g[x * k + y] -= 1.0
                return g
            first, row_of, within = (x, x, y) if model == "causal" else (y, y, x)
            g = np.zeros_like(theta)
            gm = cat.to_probs(theta[:k])
            gm[first] -= 1.0
            g[:k] = gm
            row = cat.to_probs(theta[k + row_of * k : k + (row_of + 1) * k])
            row[within] -= 1.0
            g[k + row_of * k : k + (row_of + 1) * k] = row
            return g

        return grad

    def run(self, gamma: float, T: int, rng: RngStream, checkpoints=None) -> Trajectory:
        cells = rng.gen.choice(self.k * self.k, size=T, p=self.p_star)
        return asgd(
            self.grad_fn(cells),
            self.theta0,
            gamma,
            T,
            kl_fn=self.kl_fn,
            checkpoints=checkpoints,
            initial_distance=self.delta,
        )


class GaussianProblem:
    """Prox-gradient adaptation of one Gaussian model in Cholesky coordinates."""

    def __init__(self, reference: gau.GaussianNatural, transfer: gau.GaussianNatural, model: str):
        self.k = reference.k
        self.model = model
        if model == "causal":
            start, target = reference, transfer
        elif model == "anticausal":
            start = gau.reverse_model_natural(reference)
            target = gau.reverse_model_natural(transfer)
        else:
            raise ValueError(f"unknown model kind {model!r}")
        start_c = gau.natural_to_cholesky(start)
        target_c = gau.natural_to_cholesky(target)
        self.theta0 = gau.cholesky_param_vector(start_c)
        self.delta = float(
            np.sum((self.theta0 - gau.cholesky_param_vector(target_c)) ** 2)
        )
        self.truth_joint = gau.joint_cholesky(target_c)
        self.diag_idx = gau.cholesky_diag_indices(self.k)
        # sampling happens in the joint mean form of the transfer law
        mu, cov = gau.joint_mean(gau.natural_to_mean(transfer))
        self._mu, self._cov_chol = mu, np.linalg.cholesky(cov)

    def kl_fn(self, theta: np.ndarray) -> float:
        params = gau.cholesky_unpack(theta, self.k)
        z1, l1 = gau.joint_cholesky(params)
        return gau.kl_joint_cholesky(*self.truth_joint, z1, l1)

    def grad_fn(self, xs: np.ndarray, ys: np.ndarray):
        k = self.k

        def grad(theta, t):
            params = gau.cholesky_unpack(theta, k)
            g = gau.nll_smooth_gradient(params, xs[t], ys[t])
            return gau.cholesky_param_vector(g)

        return grad

    def run(self, gamma: float, T: int, rng: RngStream, checkpoints=None) -> Trajectory:
        z = rng.gen.standard_normal((T, 2 * self.k))
        data = z @ self._cov_chol.T + self._mu
        xs, ys = data[:, : self.k], data[:, self.k :]
        if self.model == "anticausal":
            xs, ys = ys, xs  # marginal variable first
        return stochastic_prox_grad(
            self.grad_fn(xs, ys),
            self.theta0,
            gamma,
            T,
            diag_idx=self.diag_idx,
            kl_fn=self.kl_fn,
            checkpoints=checkpoints,
            initial_distance=self.delta,
        )


def _sample_reference(config: ExperimentConfig, rng: RngStream):
    if config.family == "categorical":
        return cat.sample_prior(config.k, config.prior, rng)
    return gau.sample_prior(config.k, rng)


def _intervene(config: ExperimentConfig, reference, kind: str, rng: RngStream):
    if config.family == "categorical":
        return cat.intervene(reference, kind, rng)
    return gau.intervene_gaussian(reference, kind, rng)


def _make_problem(config: ExperimentConfig, reference, transfer, model: str):
    if config.family == "categorical":
        return CategoricalProblem(reference, transfer, model)
    return GaussianProblem(reference, transfer, model)


def checkpoint_steps(t: int, eval_step: int) -> list[int]:
    """Every T/200 steps, always including 0, the eval step and the horizon."""
    stride = max(1, -(-t // 200))
    steps = set(range(0, t + 1, stride))
    steps.update((0, eval_step, t))
    return sorted(steps)


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------

def run_experiment(config: ExperimentConfig, write: bool = True) -> list[RunRecord]:
    """Run the full protocol and (optionally) write the output files."""
    config = config.resolved()
    out = Path(config.out_dir)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")  # fail before any computation if not writable
        probe.unlink()
    root = RngStream(config.seed)
    cps = checkpoint_steps(config.t, config.eval_step)
    records = []
    for ref_id in range(config.n_references):
        reference = _sample_reference(config, root.child("reference", ref_id))
        for interv in config.interventions:
            transfer = _intervene(
                config, reference, interv, root.child("intervention", ref_id, interv)
            )
            for model in MODELS[config.family]:
                problem = _make_problem(config, reference, transfer, model)

                def tune_run(gamma, horizon, rng):
                    return problem.run(gamma, horizon, rng).final_kl

                gamma = tune_step_size(
                    tune_run,
                    config.step_grid,
                    config.eval_step,
                    TUNE_REPS,
                    root.child("tune", ref_id, interv, model),
                )
                traj = problem.run(
                    gamma, config.t, root.child("final", ref_id, interv, model), cps
                )
                at_eval = int(np.searchsorted(traj.step_index, config.eval_step))
                records.append(
                    RunRecord(
                        reference_id=ref_id,
                        intervention=interv,
                        model=model,
                        gamma=gamma,
                        delta_init=traj.initial_distance,
                        steps=traj.step_index,
                        kls=traj.kl_at_average,
                        kl_at_eval=float(traj.kl_at_average[at_eval]),
                    )
                )
    records.sort(key=lambda r: (r.reference_id, r.intervention, r.model))
    if write:
        write_outputs(records, config, out)
    return records


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def summarize(records: list[RunRecord]):
    """Percentile table, scatter table and rank correlations.

    Returns (summary_rows, scatter_rows, stats) where summary rows are
    (step, model, intervention, p05, p50, p95), scatter rows are
    (model, intervention, delta_init, kl_at_eval) and stats holds the
    Spearman correlation of delta vs KL at eval, pooled over models, per
    intervention.
    """
    from scipy.stats import spearmanr

    if not records:
        raise ValueError("no records to summarize")
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec.model, rec.intervention), []).append(rec)
    summary_rows = []
    for (model, interv) in sorted(groups):
        recs = groups[(model, interv)]
        steps = recs[0].steps
        kls = np.stack([r.kls for r in recs])
        p05, p50, p95 = np.percentile(kls, [5, 50, 95], axis=0)
        for i, step in enumerate(steps):
            summary_rows.append(
                (int(step), model, interv, float(p05[i]), float(p50[i]), float(p95[i]))
            )
    scatter_rows = [
        (r.model, r.intervention, float(r.delta_init), float(r.kl_at_eval))
        for r in records
    ]
    stats = {}
    for interv in sorted({r.intervention for r in records}):
        sel = [r for r in records if r.intervention == interv]
        deltas = [r.delta_init for r in sel]
        kls = [r.kl_at_eval for r in sel]
        if len(sel) > 2:
            rho = float(spearmanr(deltas, kls).statistic)
        else:
            rho = float("nan")
        stats[interv] = {"spearman_delta_kl": rho}
    return summary_rows, scatter_rows, stats


def pool_runs(records: list[RunRecord], n_cause: int, n_effect: int, rng: RngStream):
    """Average KL trajectories over random groups of interventions.

    For each model, partitions the cause and effect runs into disjoint
    groups of ``n_cause`` and ``n_effect`` trajectories and averages each
    combined group per step, mimicking an agent that experiences a small
    balanced batch of interventions. Returns {model: [(steps, mean_kls)]}.
    """
    by_model: dict = {}
    for rec in records:
        if rec.intervention in ("cause", "effect"):
            by_model.setdefault(rec.model, {"cause": [], "effect": []})[
                rec.intervention
            ].append(rec)
    pooled = {}
    for model in sorted(by_model):
        causes = sorted(by_model[model]["cause"], key=lambda r: r.reference_id)
        effects = sorted(by_model[model]["effect"], key=lambda r: r.reference_id)
        n_groups = min(
            len(causes) // n_cause if n_cause else 0,
            len(effects) // n_effect if n_effect else 0,
        )
        if n_groups < 1:
            raise ValueError(
                f"not enough records to pool for model {model!r}: "
                f"{len(causes)} cause / {len(effects)} effect runs"
            )
        perm_c = rng.gen.permutation(len(causes))
        perm_e = rng.gen.permutation(len(effects))
        steps = causes[0].steps
        rows = []
        for g in range(n_groups):
            members = [causes[i] for i in perm_c[g * n_cause : (g + 1) * n_cause]]
            members += [effects[i] for i in perm_e[g * n_effect : (g + 1) * n_effect]]
            kls = np.stack([m.kls for m in members]).mean(axis=0)
            rows.append((steps, kls))
        pooled[model] = rows
    return pooled


def radius_study(k: int, n_draws: int, rng: RngStream):
    """Advantage-sphere radii and intervention deviations for both priors.

    Each draw samples a reference model and an independent effect
    intervention target, recording the squared radius and the squared
    distance of the target from the sphere's center. Rows are
    (prior, r_squared, deviation_sq).
    """
    rows = []
    for prior in ("dense", "sparse"):
        for _ in range(n_draws):
            model = cat.sample_prior(k, prior, rng)
            target = cat.scores_from_probs(dirichlet_sample(np.ones(k), rng))
            geom = cat.effect_geometry(model, target)
            dev = float(np.sum((target - geom.center) ** 2))
            rows.append((prior, float(geom.r_squared), dev))
    return rows


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    """Shortest decimal that round-trips to the same float."""
    return repr(float(x))


def _write_csv(path: Path, header: str, rows):
    lines = [header]
    lines.extend(",".join(str(c) for c in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def write_outputs(records: list[RunRecord], config: ExperimentConfig, out: Path):
    out = Path(out)
    run_rows = []
    for r in records:
        for step, kl in zip(r.steps, r.kls):
            run_rows.append(
                (r.reference_id, r.intervention, r.model, _fmt(r.gamma),
                 _fmt(r.delta_init), int(step), _fmt(kl))
            )
    _write_csv(
        out / "runs.csv",
        "reference_id,intervention,model,gamma,delta_init,step,kl",
        run_rows,
    )
    summary_rows, scatter_rows, stats = summarize(records)
    _write_csv(
        out / "summary.csv",
        "step,model,intervention,p05,p50,p95",
        [(s, m, i, _fmt(a), _fmt(b), _fmt(c)) for s, m, i, a, b, c in summary_rows],
    )
    _write_csv(
        out / "scatter.csv",
        "model,intervention,delta_init,kl_at_eval",
        [(m, i, _fmt(d), _fmt(kl)) for m, i, d, kl in scatter_rows],
    )
    meta = {
        "config": asdict(config),
        "stats": stats,
        "version": __version__,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    root = RngStream(config.seed)
    if config.family == "categorical":
        rows = radius_study(config.k, RADIUS_DRAWS, root.child("radius"))
        _write_csv(
            out / "radius.csv",
            "prior,r_squared,deviation_sq",
            [(p, _fmt(r2), _fmt(dev)) for p, r2, dev in rows],
        )
    if {"cause", "effect"} <= set(config.interventions):
        try:
            pooled = pool_runs(
                records, config.n_pool_cause, config.n_pool_effect, root.child("pool")
            )
        except ValueError:
            pooled = {}
        rows = []
        for model in sorted(pooled):
            for g, (steps, kls) in enumerate(pooled[model]):
                rows.extend(
                    (model, g, int(s), _fmt(v)) for s, v in zip(steps, kls)
                )
        if rows:
            _write_csv(out / "pooled.csv", "model,group,step,kl", rows)
