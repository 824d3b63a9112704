import math
import sys

import pytest

from conftest import DATA, make_ds, numeric_space, write_table
from dspace.actuators import (
    UNCHARACTERIZED,
    SyntheticSurface,
    TabularWorkload,
    command_measure,
    resolve_actuator,
    synthetic_measure,
    tabular_measure,
)
from dspace.engine import measure
from dspace.errors import ConfigurationError
from dspace.space import ActionSpace, Experiment, canonical_id, enumerate_space


@pytest.fixture
def small_table(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text(
        "x,y,perf,status\n"
        "a,1,10.0,ok\n"
        "a,2,12.5,ok\n"
        "b,1,,failed\n",
        encoding="utf-8",
    )
    return path


EXP = Experiment("bench", {"kind": "tabular"}, ("perf",))
EXP_TP = Experiment("tpcds-replay", {"kind": "tabular"}, ("runtime_s",))


def test_tabular_lookup(small_table):
    w = TabularWorkload.load(small_table, ["perf"])
    r = tabular_measure(w, {"x": "a", "y": 1}, EXP)
    assert r.ok and r.values() == {"perf": 10.0}


def test_tabular_failed_row(small_table):
    w = TabularWorkload.load(small_table, ["perf"])
    r = tabular_measure(w, {"x": "b", "y": 1}, EXP)
    assert r.status == "failed" and r.reason


def test_tabular_missing_row(small_table):
    w = TabularWorkload.load(small_table, ["perf"])
    r = tabular_measure(w, {"x": "b", "y": 2}, EXP)
    assert r.status == "failed" and r.reason == UNCHARACTERIZED


def test_tabular_numeric_keys_normalized(small_table):
    w = TabularWorkload.load(small_table, ["perf"])
    assert tabular_measure(w, {"x": "a", "y": 2.0}, EXP).values() == {"perf": 12.5}


def test_tabular_duplicate_rows_rejected(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x,perf,status\n1,2.0,ok\n1.0,3.0,ok\n")
    with pytest.raises(ConfigurationError):
        TabularWorkload.load(path, ["perf"])


def test_tabular_validate_against_space(small_table):
    w = TabularWorkload.load(small_table, ["perf"])
    w.validate(numeric_space({"x": ["a", "b"], "y": [1, 2]}))
    with pytest.raises(ConfigurationError):
        w.validate(numeric_space({"x": ["a"], "y": [1, 2]}))
    with pytest.raises(ConfigurationError):
        w.validate(numeric_space({"x": ["a", "b"], "z": [1, 2]}))


def test_tabular_cost_column():
    w = TabularWorkload.load(DATA / "tp_opt.csv", ["runtime_s"])
    r = tabular_measure(w, {"executors": 12, "cores": 1, "memory_gb": 1}, EXP_TP)
    assert w.has_cost and r.cost_s is not None and r.cost_s > 0


def test_tabular_sweep_reconstructs_table(store, tmp_path):
    dims = {"x": [1, 2, 3], "y": ["p", "q"], "z": [0.5, 1.5]}
    path = write_table(tmp_path / "f.csv", dims,
                       lambda c: c["x"] * 10 + (c["y"] == "q") + c["z"],
                       failed=lambda c: c["x"] == 3 and c["y"] == "q")
    ds = make_ds(store, "sweep", dims, path)
    for config in enumerate_space(ds.space):
        ds.sample(config, "sweep")
    table = TabularWorkload.load(path, ["perf"])
    ents = {e.entity_id: e for e in store.entities()}
    assert len(ents) == len(table.rows) == 12
    for key, row in table.rows.items():
        config = ds.space.configuration(dict(zip(table.dimensions, key)))
        res = ents[canonical_id(config)].results
        assert len(res) == 1
        if row["status"] == "failed":
            assert res[0].status == "failed"
        else:
            assert res[0].values()["perf"] == float(row["perf"])


def test_measure_two_experiments(tmp_path):
    path = tmp_path / "two.csv"
    path.write_text("x,perf,status\n1,2.0,ok\n")
    actions = ActionSpace((
        Experiment("e-perf", {"kind": "tabular", "path": str(path)}, ("perf",)),
        Experiment("e-cost", {"kind": "synthetic", "coefficients": {"x": 2}}, ("cost_model",)),
    ))
    results = measure(actions, {"x": 1})
    assert [r.experiment_name for r in results] == ["e-perf", "e-cost"]
    assert results[0].values() == {"perf": 2.0} and results[1].values() == {"cost_model": 2.0}


def test_unknown_actuator_kind():
    with pytest.raises(ConfigurationError):
        resolve_actuator(Experiment("e", {"kind": "quantum"}, ("p",)))


# -- synthetic ---------------------------------------------------------------

SYN = Experiment("syn", {"kind": "synthetic"}, ("f",))


def test_synthetic_linear_sum():
    surface = SyntheticSurface.from_settings({"coefficients": {"a": 1, "b": 1, "c": 1}})
    r = synthetic_measure(surface, {"a": 1, "b": 2, "c": 3}, SYN)
    assert r.values() == {"f": 6.0}


def test_synthetic_pure_without_noise():
    surface = SyntheticSurface.from_settings({
        "coefficients": {"a": 0.5}, "effects": {"m": {"x": 1.0, "y": -2.0}},
        "interactions": [{"dims": ["a", "m"], "weight": 3.0}], "offset": 7,
    })
    values = {synthetic_measure(surface, {"a": 4, "m": "y"}, SYN).values()["f"] for _ in range(100)}
    # 7 + 0.5*4 + (-2) + 3*4*index(y)=1
    assert values == {7 + 2 - 2 + 12.0}


def test_synthetic_seeded_noise_deterministic():
    settings = {"coefficients": {"a": 1}, "noise": {"kind": "gaussian", "sigma": 1.0}, "seed": 4}
    s1, s2 = SyntheticSurface.from_settings(settings), SyntheticSurface.from_settings(settings)
    assert synthetic_measure(s1, {"a": 3}, SYN).values() == synthetic_measure(s2, {"a": 3}, SYN).values()


def test_synthetic_noise_mean_monte_carlo():
    n = 10_000
    total = 0.0
    for seed in range(n):
        s = SyntheticSurface.from_settings(
            {"coefficients": {"a": 1, "b": 1, "c": 1}, "noise": {"kind": "gaussian", "sigma": 1.0},
             "seed": seed})
        total += s.evaluate({"a": 1, "b": 2, "c": 3}) + s.noise({"a": 1, "b": 2, "c": 3})
    assert abs(total / n - 6.0) <= 4 * 1.0 / math.sqrt(n)


def test_synthetic_failure_predicate():
    s = SyntheticSurface.from_settings({"coefficients": {"a": 1}, "fail_when": [{"a": 2, "m": "x"}]})
    assert synthetic_measure(s, {"a": 2, "m": "x"}, SYN).status == "failed"
    assert synthetic_measure(s, {"a": 2, "m": "y"}, SYN).ok


def test_synthetic_affine_by():
    s = SyntheticSurface.from_settings({
        "effects": {"t": {"1": 10, "2": 20}},
        "affine_by": {"dimension": "model", "values": {"src": [1, 0], "dst": [2, 5]}},
    })
    assert s.evaluate({"t": 2, "model": "src"}) == 20.0
    assert s.evaluate({"t": 2, "model": "dst"}) == 45.0


def test_synthetic_unknown_noise_kind():
    with pytest.raises(ConfigurationError):
        SyntheticSurface.from_settings({"noise": {"kind": "cauchy"}})


# -- command -----------------------------------------------------------------

PY = sys.executable
CMD = Experiment("cmd", {"kind": "command"}, ("perf",))


def test_command_echo_stub():
    settings = {"command": f"{PY} -c 'print(\"warming up\"); print(\"{{\\\"perf\\\": $x}}\")'"}
    r = command_measure(settings, {"x": 1.5}, CMD)
    assert r.ok and r.values() == {"perf": 1.5}


def test_command_nonzero_exit():
    settings = {"command": [PY, "-c", "import sys; sys.stderr.write('boom'); sys.exit(1)"]}
    r = command_measure(settings, {}, CMD)
    assert r.status == "failed" and "boom" in r.reason


def test_command_timeout():
    settings = {"command": [PY, "-c", "import time; time.sleep(5)"], "timeout": 0.3}
    r = command_measure(settings, {}, CMD)
    assert r.status == "failed" and r.reason == "timeout"


def test_command_unparseable_output():
    settings = {"command": [PY, "-c", "print('not json')"]}
    assert command_measure(settings, {}, CMD).status == "failed"


def test_command_missing_property():
    settings = {"command": [PY, "-c", "print('{\"other\": 1}')"]}
    assert command_measure(settings, {}, CMD).status == "failed"


def test_command_parameters_substituted():
    exp = Experiment("cmd", {"kind": "command"}, ("perf",), {"scale": 3})
    settings = {"command": [PY, "-c", "print('{\"perf\": ' + str($scale * $x) + '}')"]}
    assert command_measure(settings, {"x": 2}, exp).values() == {"perf": 6.0}
