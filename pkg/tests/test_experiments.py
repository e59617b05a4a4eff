import pytest

import experiments
import run
from diagnostics import check_entry
from errors import EigenError


@pytest.fixture
def config():
    return run.resolve(run.DEFAULTS)


def recording(name, calls, passed=True):
    def check(cfg, seed, **kwargs):
        calls.append(name)
        yield check_entry(name, passed, 0.5)

    check.__name__ = name
    return check


def failing(name, calls):
    def check(cfg, seed):
        calls.append(name)
        raise EigenError("no convergence")
        yield

    check.__name__ = name
    return check


class TestRunChecks:
    def test_slow_checks_only_when_full(self, config, monkeypatch):
        calls = []
        monkeypatch.setattr(experiments, "FAST_CHECKS", [recording("fast", calls)])
        monkeypatch.setattr(experiments, "SLOW_CHECKS", [recording("slow", calls)])

        quick = experiments.run_checks(config)
        assert calls == ["fast"]
        assert quick.summary == {"passed": True, "failed": [], "count": 1}

        calls.clear()
        full = experiments.run_checks(config, full=True)
        assert calls == ["fast", "slow"]
        assert full.summary["count"] == 2
        assert [e["seed"] for e in full.documents["checks.json"]] == [config["experiment"]["seed"]] * 2

    def test_numeric_failure_is_reported(self, config, monkeypatch, capsys):
        calls = []
        monkeypatch.setattr(experiments, "FAST_CHECKS", [failing("broken", calls), recording("fine", calls)])
        result = experiments.run_checks(config)
        assert calls == ["broken", "fine"]
        assert result.summary["failed"] == ["broken"]
        assert "Failed: broken: no convergence" in capsys.readouterr().out

    def test_registry(self):
        slow = {check.__name__ for check in experiments.SLOW_CHECKS}
        assert slow == {
            "check_semigroup", "check_smoothing", "check_resolvent", "check_sweep_p2",
            "check_sweep_p3", "check_virial", "check_h1_growth",
        }
        assert not slow & {check.__name__ for check in experiments.FAST_CHECKS}


class TestOperatorSections:
    def test_section_overrides_linop(self, config):
        op = experiments.operator_from(config, "semigroup")
        assert (op.half_width, op.m) == (40.0, 800)
        assert experiments.operator_from(config).half_width == 60.0

    def test_missing_section_falls_back(self, config):
        config.pop("resolvent")
        op = experiments.operator_from(config, "resolvent")
        assert (op.half_width, op.m) == (60.0, 800)

    @pytest.mark.parametrize("p,sample_every", [(2, 50), (3, 500)])
    def test_checks_space_samples_per_exponent(self, config, p, sample_every):
        cfg = experiments._for_p(config, p)
        assert cfg["evolve"]["sample_every"] == sample_every


# every remaining slow check except the amplitude sweeps, which run through `check --full`
@pytest.mark.slow
@pytest.mark.parametrize(
    "check",
    [
        experiments.check_semigroup,
        experiments.check_smoothing,
        experiments.check_resolvent,
        experiments.check_virial,
        experiments.check_h1_growth,
    ],
    ids=lambda check: check.__name__,
)
def test_slow_check_passes(config, check):
    config["resolvent"]["samples"] = 5
    entries = list(check(config, config["experiment"]["seed"]))
    assert entries
    for entry in entries:
        assert entry["passed"], entry
