import json

import numpy as np
import pytest

from causaladapt import cli
from causaladapt.checks import check_properties
from causaladapt.harness import (
    ExperimentConfig,
    RunRecord,
    checkpoint_steps,
    parse_config,
    pool_runs,
    radius_study,
    run_experiment,
    summarize,
)
from causaladapt.sampling import RngStream

TINY = """
family = categorical
k = 4
prior = dense
interventions = cause, effect
n_references = 2
t = 20
eval_step = 10
step_grid = 0.1, 0.3
n_pool_cause = 1
n_pool_effect = 1
seed = 3
"""


def tiny_config(out_dir):
    cfg = parse_config(TINY)
    cfg.out_dir = str(out_dir)
    return cfg


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def test_parse_config_round_trip():
    cfg = parse_config(TINY).resolved()
    assert cfg.family == "categorical"
    assert cfg.k == 4
    assert cfg.interventions == ("cause", "effect")
    assert cfg.step_grid == (0.1, 0.3)
    assert cfg.eval_step == 10


def test_parse_config_rejects_unknown_key():
    with pytest.raises(ValueError, match="unknown config key"):
        parse_config("famly = categorical")


def test_parse_config_defaults():
    cfg = parse_config("family = categorical\nk = 20\n").resolved()
    assert cfg.eval_step == 100  # K^2 / 4
    assert cfg.step_grid == (0.03, 0.1, 0.3, 1.0, 3.0, 10.0)


def test_config_validation_errors():
    with pytest.raises(ValueError):
        ExperimentConfig(family="categorical", prior="normal_wishart").resolved()
    with pytest.raises(ValueError):
        ExperimentConfig(family="gaussian", prior="dense").resolved()
    with pytest.raises(ValueError):
        ExperimentConfig(interventions=("cause", "bogus")).resolved()
    with pytest.raises(ValueError):
        ExperimentConfig(t=10, eval_step=11).resolved()
    with pytest.raises(ValueError):
        ExperimentConfig(n_references=0).resolved()


def test_checkpoints_contain_landmarks():
    steps = checkpoint_steps(500, 100)
    assert steps[0] == 0 and steps[-1] == 500 and 100 in steps
    assert len(steps) <= 203


# ---------------------------------------------------------------------------
# experiment runs
# ---------------------------------------------------------------------------

def test_run_counts_and_determinism(tmp_path):
    cfg = tiny_config(tmp_path / "a")
    records = run_experiment(cfg)
    assert len(records) == 2 * 2 * 3  # references x interventions x models
    first = (tmp_path / "a" / "runs.csv").read_bytes()
    cfg2 = tiny_config(tmp_path / "b")
    run_experiment(cfg2)
    assert (tmp_path / "b" / "runs.csv").read_bytes() == first
    for name in ("summary.csv", "scatter.csv", "radius.csv", "pooled.csv"):
        assert (
            (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        )


def test_meta_records_resolved_config(tmp_path):
    cfg = tiny_config(tmp_path)
    run_experiment(cfg)
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["config"]["k"] == 4
    assert meta["config"]["eval_step"] == 10
    assert "version" in meta
    assert "cause" in meta["stats"]


def test_models_start_at_equal_kl(tmp_path):
    cfg = tiny_config(tmp_path)
    records = run_experiment(cfg, write=False)
    by_key = {}
    for rec in records:
        assert rec.steps[0] == 0
        by_key.setdefault((rec.reference_id, rec.intervention), []).append(rec.kls[0])
    for kls in by_key.values():
        assert max(kls) - min(kls) <= 1e-9


def test_eval_step_is_recorded(tmp_path):
    cfg = tiny_config(tmp_path)
    records = run_experiment(cfg, write=False)
    for rec in records:
        assert 10 in rec.steps
        idx = list(rec.steps).index(10)
        assert rec.kl_at_eval == rec.kls[idx]
        assert rec.delta_init >= 0


def test_unwritable_out_dir_fails_before_compute(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    cfg = tiny_config(blocker / "sub")
    with pytest.raises(OSError):
        run_experiment(cfg)


def test_gaussian_family_runs(tmp_path):
    cfg = ExperimentConfig(
        family="gaussian",
        k=2,
        prior="normal_wishart",
        interventions=("cause",),
        n_references=1,
        t=20,
        eval_step=10,
        step_grid=(0.01, 0.03),
        seed=1,
        out_dir=str(tmp_path),
    )
    records = run_experiment(cfg)
    assert {r.model for r in records} == {"causal", "anticausal"}
    assert not (tmp_path / "radius.csv").exists()  # categorical artifact only


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def fake_record(model, interv, ref_id, kls, delta=1.0):
    kls = np.asarray(kls, dtype=float)
    return RunRecord(
        reference_id=ref_id,
        intervention=interv,
        model=model,
        gamma=0.1,
        delta_init=delta,
        steps=np.arange(kls.size),
        kls=kls,
        kl_at_eval=float(kls[-1]),
    )


def test_summarize_single_record_percentiles():
    rec = fake_record("causal", "cause", 0, [3.0, 2.0, 1.0])
    summary, scatter, stats = summarize([rec])
    for step, model, interv, p05, p50, p95 in summary:
        assert p05 == p50 == p95 == rec.kls[step]
    assert scatter == [("causal", "cause", 1.0, 1.0)]
    assert np.isnan(stats["cause"]["spearman_delta_kl"])


def test_summarize_spearman_sign():
    records = [
        fake_record("causal", "cause", i, [float(i)], delta=float(i)) for i in range(10)
    ]
    _, _, stats = summarize(records)
    assert stats["cause"]["spearman_delta_kl"] == pytest.approx(1.0)


def test_pool_constant_series():
    records = []
    for i in range(10):
        records.append(fake_record("causal", "cause", i, [2.0, 2.0]))
        records.append(fake_record("causal", "effect", i, [2.0, 2.0]))
    pooled = pool_runs(records, 5, 5, RngStream(0))
    assert len(pooled["causal"]) == 2  # 10 runs of each kind in groups of 5
    for steps, kls in pooled["causal"]:
        assert np.all(kls == 2.0)


def test_pool_rejects_insufficient_records():
    records = [fake_record("causal", "cause", 0, [1.0])]
    with pytest.raises(ValueError, match="not enough"):
        pool_runs(records, 5, 5, RngStream(0))


def test_sparse_pooled_trajectories_show_no_ordering():
    # under the sparse prior, effect-intervention KL dwarfs the cause
    # signal, so pooled causal and anticausal bands overlap at the eval step
    cfg = ExperimentConfig(
        family="categorical",
        k=20,
        prior="sparse",
        interventions=("cause", "effect"),
        n_references=30,
        t=150,
        eval_step=100,
        seed=21,
    )
    records = run_experiment(cfg, write=False)
    pooled = pool_runs(records, 5, 5, RngStream(1))
    eval_idx = int(np.searchsorted(records[0].steps, 100))
    bands = {
        model: np.percentile([kls[eval_idx] for _, kls in pooled[model]], [5, 95])
        for model in ("causal", "anticausal")
    }
    lo = max(bands["causal"][0], bands["anticausal"][0])
    hi = min(bands["causal"][1], bands["anticausal"][1])
    assert lo <= hi  # the (5, 95) bands overlap


def test_radius_study_rows():
    rows = radius_study(12, 20, RngStream(1))
    priors = {r[0] for r in rows}
    assert priors == {"dense", "sparse"}
    assert all(r[1] >= 0 and r[2] >= 0 for r in rows)
    sparse_med = np.median([r[1] for r in rows if r[0] == "sparse"])
    dense_med = np.median([r[1] for r in rows if r[0] == "dense"])
    assert sparse_med > dense_med


# ---------------------------------------------------------------------------
# property suites and CLI
# ---------------------------------------------------------------------------

def test_check_properties_small_smoke():
    report = check_properties("categorical", 2, 10, seed=0)
    assert report.ok, [r.name for r in report.results if not r.passed]
    report = check_properties("gaussian", 2, 10, seed=0)
    assert report.ok, [r.name for r in report.results if not r.passed]


def test_cli_run_and_check(tmp_path, capsys):
    config_path = tmp_path / "exp.cfg"
    config_path.write_text(TINY + f"out_dir = {tmp_path / 'out'}\n")
    assert cli.main(["run", "--config", str(config_path)]) == 0
    assert (tmp_path / "out" / "runs.csv").exists()
    # seed override changes the outputs
    assert cli.main(["run", "--config", str(config_path), "--out", str(tmp_path / "o2"), "--seed", "9"]) == 0
    assert (
        (tmp_path / "out" / "runs.csv").read_bytes()
        != (tmp_path / "o2" / "runs.csv").read_bytes()
    )
    assert cli.main(["check", "--family", "categorical", "--k", "2", "--cases", "5"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out


def test_cli_bayes_error_and_radius(tmp_path, capsys):
    assert cli.main(["bayes-error", "--k", "2", "--trials", "3000"]) == 0
    assert cli.main(
        ["radius-study", "--k", "12", "--draws", "30", "--out", str(tmp_path / "r.csv")]
    ) == 0
    out = capsys.readouterr().out
    assert "bayes error" in out and "median r_squared" in out
    header = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert header == "prior,r_squared,deviation_sq"
