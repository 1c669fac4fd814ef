import json
import math
from pathlib import Path

import numpy as np
import pytest

from spectral_lab import experiments as ex
from spectral_lab import freeconv as fc
from spectral_lab import measure as ms
from spectral_lab.errors import SchemaError, TrialFailureBudgetExceeded, ValidationError

GOLDEN = json.loads((Path(__file__).parent / "golden" / "derive_seed.json").read_text())


def small_cfg(**kw):
    base = dict(a=2, b=2, lam=2.0, n=40, trials=6, mode="weibull", master_seed=11)
    base.update(kw)
    return ex.ExperimentConfig(**base)


def synthetic(ec, n, devs, n0=3, rng=None):
    """Weibull records with mu_k = L_+ - C_lam (1 - v_k) + dev N^{-1/(b+1)}."""
    rng = rng or np.random.default_rng(0)
    s = n ** (-1 / (ec.beta_exp + 1))
    out = []
    for i, dev in enumerate(devs):
        v = np.sort(1 - rng.uniform(0, 0.3, n0))[::-1]
        mu = ec.l_plus - ec.c_lambda * (1 - v) + dev * s
        out.append(ex.TrialRecord(i, 0, v.tolist(), mu.tolist(), [], [], [], None))
    return out


# --------------------------------------------------------------------------- config


def test_config_validation():
    small_cfg().validate()
    with pytest.raises(ValidationError):
        small_cfg(lam=1.0).validate()
    with pytest.raises(ValidationError):
        small_cfg(mode="gaussian-edge").validate()
    with pytest.raises(ValidationError):
        small_cfg(mode="banana").validate()
    with pytest.raises(ValidationError):
        small_cfg(b=0.5).validate()
    with pytest.raises(ValidationError):
        small_cfg(mode="eigenvector", lam=math.sqrt(2.5)).validate()
    small_cfg(mode="eigenvector", lam=1.0).validate()


# --------------------------------------------------------------------------- seeds


def test_derive_seed_golden():
    # first output of a SplitMix64 generator started at state 0
    assert ex.derive_seed(0, 0) == 0xE220A8397B1DCDAF
    for case in GOLDEN["cases"]:
        assert ex.derive_seed(case["master"], case["index"]) == case["seed"]


def test_derive_seed_properties():
    assert ex.derive_seed(5, 9) == ex.derive_seed(5, 9)
    assert ex.derive_seed(5, 0) != ex.derive_seed(5, 1)
    seeds = {ex.derive_seed(123, i) for i in range(100_000)}
    assert len(seeds) == 100_000
    assert all(0 <= s < 2 ** 64 for s in seeds)


# --------------------------------------------------------------------------- records


def test_record_round_trip():
    rec = ex.run_trial(small_cfg(), 3)
    line = ex.record_to_json(rec)
    assert ex.record_from_json(line) == rec
    assert ex.record_to_json(ex.run_trial(small_cfg(), 3)) == line


def test_record_schema_errors(tmp_path):
    with pytest.raises(SchemaError):
        ex.record_from_json('{"trial_index": 0}')
    with pytest.raises(SchemaError):
        ex.record_from_json("not json")
    p = tmp_path / "r.jsonl"
    good = ex.record_to_json(ex.run_trial(small_cfg(), 0))
    p.write_text(good + "\n" + good[:20])
    assert len(ex.load_records(p, tolerate_partial_tail=True)) == 1
    with pytest.raises(SchemaError):
        ex.load_records(p)


def test_dumps17_round_trips_floats():
    xs = [0.1, 1 / 3, -2.5e-300, 2.0, math.pi * 1e20]
    assert json.loads(ex.dumps17(xs)) == xs


# --------------------------------------------------------------------------- trials


def test_gaussian_edge_record():
    rec = ex.run_trial(small_cfg(mode="gaussian-edge", lam=1.0), 0)
    assert rec.top_mu == [] and rec.l_hat is not None
    assert len(rec.top_v) == 5


def test_weibull_trial_near_edge():
    cfg = ex.ExperimentConfig(a=2, b=2, lam=2.0, n=400, trials=1, mode="weibull", master_seed=3)
    rec = ex.run_trial(cfg, 0)
    assert abs(rec.top_mu[0] - 2.625) <= 0.25
    assert rec.top_mu == sorted(rec.top_mu, reverse=True)


def test_trial_mass_bookkeeping():
    cfg = small_cfg(mode="eigenvector", n=60)
    rec = ex.run_trial(cfg, 2)
    block = np.array(rec.off_mass_block)
    np.testing.assert_allclose(np.diag(block), rec.vector_masses, atol=0)
    assert np.all(block.sum(axis=1) <= 1 + 1e-12)
    for k in range(cfg.n0):
        others = np.delete(block[k], k)
        assert rec.max_off_mass[k] >= others.max()


def test_trial_errors_carry_index(monkeypatch):
    def boom(cfg, index, m):
        raise ArithmeticError("bad luck")

    monkeypatch.setattr(ex, "_trial", boom)
    with pytest.raises(ArithmeticError, match="trial 4: bad luck"):
        ex.run_trial(small_cfg(), 4)


# --------------------------------------------------------------------------- runs


def test_workers_do_not_change_records(tmp_path):
    cfg = small_cfg(trials=8)
    p1, p4 = tmp_path / "w1.jsonl", tmp_path / "w4.jsonl"
    r1, s1 = ex.run_experiment(cfg, workers=1, records_path=p1)
    r4, s4 = ex.run_experiment(cfg, workers=4, records_path=p4)
    assert p1.read_bytes() == p4.read_bytes()
    assert r1 == r4 and s1.to_dict() == s4.to_dict()


def test_resume_after_truncation(tmp_path):
    cfg = small_cfg(trials=7)
    full = tmp_path / "full.jsonl"
    _, s_full = ex.run_experiment(cfg, records_path=full)
    part = tmp_path / "part.jsonl"
    lines = full.read_text().splitlines()
    part.write_text("\n".join(lines[:3]) + "\n" + lines[3][:25])
    _, s_part = ex.run_experiment(cfg, records_path=part, resume=True)
    assert part.read_bytes() == full.read_bytes()
    assert s_part.to_dict() == s_full.to_dict()


def test_resume_rejects_foreign_records(tmp_path):
    p = tmp_path / "r.jsonl"
    ex.run_experiment(small_cfg(trials=2), records_path=p)
    with pytest.raises(SchemaError):
        ex.run_experiment(small_cfg(trials=2, master_seed=12), records_path=p, resume=True)


def test_failure_budget(monkeypatch):
    real = ex._trial

    def flaky(cfg, index, m):
        if index in (3, 50):
            raise FloatingPointError("injected")
        return real(cfg, index, m)

    monkeypatch.setattr(ex, "_trial", flaky)
    cfg = small_cfg(mode="gaussian-edge", lam=1.0, trials=200, n=400)
    records, summary = ex.run_experiment(cfg, workers=1)
    assert summary.failed == 2 and len(records) == 198
    with pytest.raises(TrialFailureBudgetExceeded):
        ex.run_experiment(small_cfg(mode="gaussian-edge", lam=1.0, trials=50, n=400), workers=1)


def test_single_trial_summary():
    records, summary = ex.run_experiment(small_cfg(trials=1, n0=2), workers=1)
    row = summary.coupling["per_rank"][0]
    assert row["median"] == row["p90"]
    ec = fc.edge_constants(ms.build_measure(2, 2), 2.0)
    mu_side, v_side = ex.edge_samples(records, ec, 40)
    assert row["median"] == pytest.approx(abs(mu_side[0] - v_side[0]), abs=1e-15)


def test_summary_keys_and_ranges():
    _, summary = ex.run_experiment(small_cfg(trials=5), workers=1)
    d = summary.to_dict()
    for key in ("ks_weibull", "ks_weibull_v", "ks_coupling"):
        assert 0 <= d[key] <= 1
    assert len(d["coupling"]["per_rank"]) == 4
    assert all("." in k or k in ("mode", "trials", "failed", "ks_weibull", "ks_weibull_v", "ks_coupling")
               for k, _ in summary.flat_rows())


# --------------------------------------------------------------------------- statistics


def test_weibull_cdf():
    assert ex.weibull_cdf(0.0, 2.0, 80 / 9) == 0.0
    assert ex.weibull_cdf(-1.0, 2.0, 80 / 9) == 0.0
    assert ex.weibull_cdf(1e3, 2.0, 80 / 9) == 1.0
    median = (27 * math.log(2) / 80) ** (1 / 3)
    assert median == pytest.approx(0.616169, abs=1e-6)
    assert ex.weibull_cdf(median, 2.0, 80 / 9) == pytest.approx(0.5, abs=1e-14)


def test_ks_statistic():
    uniform = lambda x: np.clip(x, 0, 1)  # noqa: E731
    assert ex.ks_statistic([0.5], uniform) == 0.5
    n = 40
    assert ex.ks_statistic((np.arange(1, n + 1) - 0.5) / n, uniform) == pytest.approx(0.5 / n, abs=1e-15)
    draws = np.random.default_rng(50).uniform(size=10 ** 5)
    assert ex.ks_statistic(draws, uniform) <= 0.006


def test_ks_two_sample_against_direct_formula():
    rng = np.random.default_rng(51)
    x, y = rng.normal(size=70), rng.normal(0.3, 1, size=50)
    grid = np.concatenate([x, y])
    direct = np.max(np.abs((x[:, None] <= grid).mean(0) - (y[:, None] <= grid).mean(0)))
    assert ex.ks_two_sample(x, y) == pytest.approx(direct, abs=1e-15)


def test_coupling_summary_synthetic(quartic_edge):
    exact = synthetic(quartic_edge, 1000, [0.0] * 20)
    row = ex.coupling_summary(exact, quartic_edge, 1000, rank=1)
    assert row["median"] == pytest.approx(0.0, abs=1e-12)
    shifted = synthetic(quartic_edge, 1000, [0.3] * 21)
    assert ex.coupling_summary(shifted, quartic_edge, 1000, rank=2)["median"] == pytest.approx(0.3, abs=1e-12)


def test_eigenvector_summary_synthetic(quartic_edge):
    n0 = 3
    rec = ex.TrialRecord(0, 0, [0.99, 0.9, 0.8], [2.6, 2.5, 2.4], [1.0] * n0, [0.0] * n0,
                         np.eye(n0).tolist(), None)
    s = ex.eigenvector_summary([rec, rec], quartic_edge, 1000)
    assert s["target_mass"] == pytest.approx(0.375, abs=1e-12)
    assert s["residual_target"] == pytest.approx(0.625, abs=1e-12)
    first = s["per_rank"][0]
    assert first["mass_mean"] == 1.0 and first["residual_mass_mean"] == 0.0 and first["block_mass_mean"] == 0.0
    assert first["mass_mean"] + first["residual_mass_mean"] == pytest.approx(1.0, abs=1e-10)
    assert first["band_fraction"] == 0.0 and s["delocalized_fraction"] == 0.0


def test_gaussian_edge_summary_trivial(quartic):
    ec = fc.edge_constants(quartic, 1.0)
    records = [ex.TrialRecord(i, 0, [], [], [], [], [], ec.l_plus) for i in range(5)]
    emp, target = ex.gaussian_edge_summary(records, quartic, 1.0, 10 ** 4, ec)
    assert emp == 0.0 and 0 < target < 1
    with pytest.raises(ValueError):
        ex.gaussian_edge_summary(records, quartic, 2.0, 10 ** 4)


# --------------------------------------------------------------------------- order statistics law


def _top_gap_ks(quartic, quartic_edge, n):
    """KS between the exact law of C_lam N^{1/3}(1 - v_1) for N iid draws and G_3."""
    s = np.linspace(1e-4, 4.0, 4000)
    x = 1 - s / (quartic_edge.c_lambda * n ** (1 / 3))
    exact = 1 - ms.cdf(quartic, np.clip(x, -1, 1)) ** n
    return float(np.max(np.abs(exact - ex.weibull_cdf(s, 2.0, quartic_edge.c_mu))))


def test_order_statistics_law_converges(quartic, quartic_edge):
    ks = [_top_gap_ks(quartic, quartic_edge, n) for n in (10 ** 3, 10 ** 4, 10 ** 5)]
    assert ks[0] > ks[1] > ks[2]


def test_sampled_top_gap_follows_exact_law(quartic, quartic_edge):
    n = 1000
    rng = np.random.default_rng(52)
    gaps = np.array([1 - ms.sample_sorted(quartic, n, rng)[0] for _ in range(2000)])
    exact = lambda g: 1 - ms.cdf(quartic, 1 - g) ** n  # noqa: E731
    assert ex.ks_statistic(gaps, exact) <= 1.36 / math.sqrt(gaps.size) * 1.5
