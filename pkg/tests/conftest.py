import csv
import itertools
from collections import Counter
from pathlib import Path

import pytest

from dspace.actuators import register_actuator, resolve_actuator
from dspace.engine import DiscoverySpace
from dspace.space import ActionSpace, Dimension, Experiment, ProbabilitySpace, canonical_id
from dspace.store import SampleStore

DATA = Path(__file__).parent / "data"

# Actuator invocations seen by the "counting" kind, keyed by (entity_id, experiment).
INVOCATIONS: Counter = Counter()


def _counting_factory(experiment, store=None):
    inner = Experiment(
        experiment.name,
        dict(experiment.actuator["inner"]),
        experiment.measured_properties,
        experiment.parameters,
    )
    act = resolve_actuator(inner, store)

    def run(config):
        INVOCATIONS[(canonical_id(config), experiment.name)] += 1
        return act(config)

    return run


register_actuator("counting", _counting_factory)


@pytest.fixture(autouse=True)
def _reset_invocations():
    INVOCATIONS.clear()
    yield


@pytest.fixture
def store(tmp_path):
    return SampleStore(tmp_path / "store.db")


def write_table(path, dims: dict, fn, prop="perf", failed=lambda c: False):
    """Write an exhaustive tabular fixture; ``fn(config_dict) -> value``."""
    names = list(dims)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, prop, "status"])
        for combo in itertools.product(*dims.values()):
            cfg = dict(zip(names, combo))
            if failed(cfg):
                w.writerow([*combo, "", "failed"])
            else:
                w.writerow([*combo, repr(float(fn(cfg))), "ok"])
    return path


def numeric_space(dims: dict) -> ProbabilitySpace:
    return ProbabilitySpace(tuple(
        Dimension(name, tuple(vals), "discrete" if all(isinstance(v, (int, float)) for v in vals)
                  else "categorical")
        for name, vals in dims.items()
    ))


def tabular_actions(path, prop="perf", name="bench", counting=False) -> ActionSpace:
    actuator = {"kind": "tabular", "path": str(path)}
    if counting:
        actuator = {"kind": "counting", "inner": actuator}
    return ActionSpace((Experiment(name, actuator, (prop,)),))


@pytest.fixture
def tp_space(store):
    """The committed 120-point TP-OPT-shaped tabular space."""
    import yaml

    from dspace.documents import resolve_paths
    from dspace.engine import create_space

    doc = yaml.safe_load((DATA / "tp_opt_space.yaml").read_text())
    resolve_paths(doc, DATA)
    return create_space(doc, store)


def make_ds(store, space_id, dims, path, prop="perf", counting=False) -> DiscoverySpace:
    return DiscoverySpace.create(store, space_id, numeric_space(dims),
                                 tabular_actions(path, prop, counting=counting))


# -- transfer fixtures -------------------------------------------------------

FT_MAPPING = {"model": {"llama-7b": "mistral-7b"}}


def load_space_doc(name):
    import yaml

    return yaml.safe_load((DATA / name).read_text())


def ft_pair(store, sweep=True):
    """The 56-point source/target pair whose target is exactly 2 * source + 5."""
    from dspace.engine import create_space
    from dspace.space import enumerate_space

    src = create_space(load_space_doc("ft_source.yaml"), store)
    tgt = create_space(load_space_doc("ft_target.yaml"), store)
    if sweep:
        for config in enumerate_space(src.space):
            src.sample(config, "characterize")
    return src, tgt


def permuted_pair(tmp_path, seed):
    """Source as in ``ft_pair``; target values are a seeded permutation of the source's."""
    import numpy as np

    from dspace.actuators import SyntheticSurface
    from dspace.space import enumerate_space

    src_doc = load_space_doc("ft_source.yaml")
    src_space = ProbabilitySpace.from_document(src_doc["space"])
    tgt_space = ProbabilitySpace.from_document(load_space_doc("ft_target.yaml")["space"])
    surface = SyntheticSurface.from_settings(src_doc["actions"][0]["actuator"])
    configs = list(enumerate_space(src_space))
    values = [surface.evaluate(c) for c in configs]
    perm = np.random.default_rng(seed).permutation(len(values))
    path = tmp_path / f"permuted-{seed}.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("model,batch_size,gpus,tokens_per_sample,tokens_per_second,status\n")
        for model, order in (("llama-7b", range(len(values))), ("mistral-7b", perm)):
            for c, j in zip(configs, order):
                fh.write(f"{model},{c['batch_size']},{c['gpus']},{c['tokens_per_sample']},"
                         f"{values[j]!r},ok\n")
    actions = ActionSpace((Experiment("replay", {"kind": "tabular", "path": str(path)},
                                      ("tokens_per_second",)),))
    store = SampleStore(tmp_path / f"permuted-{seed}.db")
    src = DiscoverySpace.create(store, "src", src_space, actions)
    tgt = DiscoverySpace.create(store, "tgt", tgt_space, actions)
    for c in configs:
        src.sample(c, "characterize")
    return src, tgt


# -- acceptance reporting ----------------------------------------------------

_ACCEPTANCE: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when not in ("setup", "call"):
        return
    key = (marker.kwargs["criterion"], marker.kwargs["name"])
    # several tests may share one criterion; it passes only if all of them do
    _ACCEPTANCE[key] = _ACCEPTANCE.get(key, True) and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (num, name), ok in sorted(_ACCEPTANCE.items()):
        terminalreporter.write_line(f"criterion {num} {name}: {'PASS' if ok else 'FAIL'}")
