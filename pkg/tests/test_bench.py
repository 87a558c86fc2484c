import csv
import json
import math

import numpy as np
import pytest
import yaml

from sda_bandits import __version__
from sda_bandits.arms import BanditInstance
from sda_bandits.bench import (
    QUANTILES,
    ConfigError,
    EmitError,
    ExperimentConfig,
    Summary,
    algorithm_id,
    draw_instances,
    emit,
    load_config,
    lower_bound_curve,
    make_policy,
    mix_seed,
    preset,
    read_summary_json,
    run_bayesian_experiment,
    run_experiment,
    splitmix64,
)
from sda_bandits.sda import SdaPolicy


def small(**kw):
    d = dict(family="bernoulli", means=[0.4, 0.6], horizon=500, runs=6,
             algorithms=["RB-SDA", "TS", {"name": "PHE", "a": 1.1}], checkpoints=[50, 500],
             base_seed=3)
    d.update(kw)
    return ExperimentConfig.from_dict(d)


class TestSeeding:
    def test_splitmix_reference_values(self):
        # published SplitMix64 outputs for state 0: successive calls advance by the golden gamma
        assert splitmix64(0) == 0xE220A8397B1DCDAF
        assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4

    def test_mix_is_sensitive_to_every_input(self):
        base = mix_seed(1, 2, 3)
        assert len({base, mix_seed(2, 2, 3), mix_seed(1, 3, 3), mix_seed(1, 2, 4)}) == 4
        assert 0 <= base < 2**64

    def test_algorithm_id_is_stable(self):
        assert algorithm_id("RB-SDA") == algorithm_id("RB-SDA") != algorithm_id("WR-SDA")


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig.from_dict(dict(family="bernoulli", means=[0.8, 0.9],
                                              horizon=20000, algorithms=["RB-SDA"]))
        assert cfg.checkpoints == (100, 1000, 10000, 15000, 20000)
        assert cfg.runs == 1000 and cfg.K == 2

    def test_round_trip(self):
        cfg = small()
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
        assert ExperimentConfig.from_dict(yaml.safe_load(yaml.safe_dump(cfg.to_dict()))) == cfg

    @pytest.mark.parametrize("change,field", [
        (dict(family="cauchy"), "family"),
        (dict(means=[0.5]), "means"),
        (dict(means=[0.5, 1.5]), "means"),
        (dict(horizon=1), "horizon"),
        (dict(runs=0), "runs"),
        (dict(checkpoints=[500, 50]), "checkpoints"),
        (dict(checkpoints=[50, 600]), "checkpoints"),
        (dict(algorithms=[]), "algorithms"),
        (dict(algorithms=["UCB"]), "algorithms[0].name"),
        (dict(algorithms=[{"name": "PHE", "b": 1}]), "algorithms[0].b"),
        (dict(algorithms=["RB-SDA", "RB"]), "algorithms"),
        (dict(algorithms=["IMED"], family="tg", sigma=0.3), "algorithms"),
        (dict(sigma=-1.0), "sigma"),
        (dict(colour="red"), "colour"),
    ])
    def test_rejections_name_the_field(self, change, field):
        with pytest.raises(ConfigError) as info:
            small(**change)
        assert info.value.field == field

    def test_prior_validation(self):
        d = dict(family="bernoulli", prior="normal(0,1)", K=10, horizon=100,
                 algorithms=["RB-SDA"])
        with pytest.raises(ConfigError, match="prior"):
            ExperimentConfig.from_dict(d)
        d["prior"] = "uniform[0,1]"
        assert ExperimentConfig.from_dict(d).K == 10
        with pytest.raises(ConfigError, match="prior"):
            ExperimentConfig.from_dict({**d, "prior": "beta(1,1)"})

    def test_load_yaml(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text(yaml.safe_dump(small().to_dict()))
        assert load_config(p) == small()
        p.write_text("family: [unclosed")
        with pytest.raises(ConfigError):
            load_config(p)
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.yaml")

    def test_presets(self):
        cfg = preset("tg-4")
        assert cfg.K == 4 and cfg.sigma == 1.0 and "NP-TS" in cfg.labels
        assert preset("bernoulli-1", runs=5).runs == 5
        assert preset("bayes-gaussian").prior.kind == "normal"

    def test_ts_on_truncated_gaussian_is_binarized(self):
        pol = make_policy(preset("tg-1").algorithms[0], preset("tg-1").family)
        assert pol.binarized


class TestCampaigns:
    def test_identical_arms_zero_regret(self):
        res = run_experiment(small(means=[0.5, 0.5], runs=1))
        for s in res.summary.algorithms.values():
            assert s.mean.tolist() == [0.0, 0.0]

    def test_deterministic_and_thread_invariant(self):
        a = run_experiment(small(), threads=1)
        b = run_experiment(small(), threads=1)
        c = run_experiment(small(), threads=4)
        assert a.summary == b.summary == c.summary
        for label in a.traces:
            for x, y in zip(a.traces[label], c.traces[label]):
                assert np.array_equal(x.regrets, y.regrets)

    def test_run_seed_independent_of_other_algorithms(self):
        a = run_experiment(small(algorithms=["RB-SDA"]))
        b = run_experiment(small())
        assert np.array_equal(a.summary["RB-SDA"].mean, b.summary["RB-SDA"].mean)

    def test_summary_statistics(self):
        res = run_experiment(small(runs=20))
        s = res.summary["RB-SDA"]
        R = np.stack([tr.regrets for tr in res.traces["RB-SDA"]])
        np.testing.assert_allclose(s.mean, R.mean(0))
        np.testing.assert_allclose(s.std, R.std(0))
        assert s.quantiles.shape == (len(QUANTILES), 2)
        assert np.all(np.diff(s.quantiles, axis=0) >= 0)
        assert np.all(np.diff(s.mean) >= 0) and np.all(s.std >= 0)
        assert s.runs == 20
        assert [tr.run_index for tr in res.traces["RB-SDA"]] == list(range(20))

    def test_point_mass_prior_reduces_to_fixed_instance(self):
        fixed = small()
        bayes = ExperimentConfig.from_dict({**{k: v for k, v in fixed.to_dict().items()
                                               if k != "means"}, "prior": [0.4, 0.6]})
        a, b = run_bayesian_experiment(bayes).summary, run_experiment(fixed).summary
        for label, s in a.algorithms.items():
            t = b[label]
            assert np.array_equal(s.mean, t.mean) and np.array_equal(s.quantiles, t.quantiles)
            # the Bayesian bound is an average over instances, equal up to rounding
            assert s.lower_bound_constant == pytest.approx(t.lower_bound_constant, rel=1e-12)

    def test_bayesian_instances_shared_across_algorithms(self):
        cfg = ExperimentConfig.from_dict(dict(family="gaussian", prior="normal(0,1)", K=4,
                                              horizon=200, runs=5,
                                              algorithms=["RB-SDA", "TS"]))
        other = cfg.replace(algorithms=["BESA"])
        a, b = draw_instances(cfg), draw_instances(other)
        assert len({tuple(i.means) for i in a}) == 5
        assert [tuple(i.means) for i in a] == [tuple(i.means) for i in b]
        assert run_bayesian_experiment(cfg).summary == run_bayesian_experiment(cfg).summary
        with pytest.raises(ConfigError):
            run_experiment(cfg)


class TestLowerBound:
    def test_values(self):
        inst = BanditInstance.from_means("bernoulli", [0.8, 0.9])
        curve = dict(lower_bound_curve(inst, [1, 20000]))
        assert curve[1] == 0.0
        assert curve[20000] == pytest.approx(2.2521 * math.log(20000), abs=1e-2)
        assert curve[20000] == pytest.approx(22.31, abs=0.01)

    def test_zero_gap(self):
        inst = BanditInstance.from_means("gaussian", [0.3, 0.3])
        assert all(v == 0 for _, v in lower_bound_curve(inst, [10, 100]))

    def test_truncated_gaussian_uses_bk(self):
        inst = BanditInstance.from_means("tg", [1.5, 2.0], 1.0)
        assert lower_bound_curve(inst, [math.e])[0][1] == pytest.approx(1.2039559, rel=1e-6)


class TestEmit:
    def test_one_row(self, tmp_path):
        res = run_experiment(small(runs=1, algorithms=["RB-SDA"], checkpoints=[500]))
        rows = list(csv.reader(emit(res, tmp_path / "t.csv", "csv").open()))
        assert rows[0] == ["algorithm", "run", "t", "regret"] and len(rows) == 2

    def test_json_round_trip(self, tmp_path):
        res = run_experiment(small())
        path = emit(res, tmp_path / "s.json", "json")
        cfg, summary = read_summary_json(path)
        assert summary == res.summary and cfg == res.config
        doc = json.loads(path.read_text())
        assert doc["version"] == __version__ and doc["seed"] == 3

    def test_bit_stable(self, tmp_path):
        a = emit(run_experiment(small()), tmp_path / "a.csv")
        b = emit(run_experiment(small()), tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()

    def test_csv_regrets_finite(self, tmp_path):
        cfg = small(runs=1000, horizon=200, checkpoints=[200], algorithms=["RB-SDA"])
        path = emit(run_experiment(cfg), tmp_path / "big.csv")
        with path.open() as fh:
            vals = [float(r["regret"]) for r in csv.DictReader(fh)]
        assert len(vals) == 1000 and all(math.isfinite(v) for v in vals)

    def test_unwritable(self, tmp_path):
        res = run_experiment(small(runs=1))
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(EmitError, match="cannot write"):
            emit(res, blocker / "sub" / "t.csv")
        with pytest.raises(EmitError):
            emit(res, tmp_path / "x.bin", "parquet")

    def test_summary_from_dict_handles_missing_bound(self):
        s = Summary.from_dict({"A": {"checkpoints": [1], "mean": [0.0], "std": [0.0],
                                     "quantiles": {str(q): [0.0] for q in QUANTILES},
                                     "lower_bound_constant": None, "runs": 1}})
        assert math.isnan(s["A"].lower_bound_constant)


def test_factory_names():
    fam = preset("bernoulli-1").family
    for name in ["RB-SDA", "WR-SDA", "LB-SDA", "LDS-SDA", "SSMC"]:
        cfg = small(algorithms=[name])
        assert isinstance(make_policy(cfg.algorithms[0], fam), SdaPolicy)
    assert small(algorithms=[{"name": "RB-SDA", "forced_exploration": True}]).labels == \
        ["RB-SDA+FE"]
