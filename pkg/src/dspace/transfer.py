"""Representative sub-space comparison: transfer measured knowledge to a related space.

Pipeline: cluster the source samples on the property to transfer, take the
sample nearest each centroid as a representative, map the representatives
into the target space and sample them there, fit target ~ source linearly,
and if the fit passes the criteria register the line as a surrogate
experiment in a new discovery space that predicts every other target point.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
import numpy as np

from . import metrics
from .actuators import register_actuator, succeeded, failed
from .engine import PREDICTED, DiscoverySpace, Sample
from .errors import ConfigurationError, DegenerateDataError, InsufficientDataError
from .optimizers import MINIMIZE, Objective
from .space import (
    Configuration,
    Experiment,
    ValueMapping,
    canonical_id,
    cardinality,
    enumerate_space,
    map_configuration,
)
from .stats import LinearFit, best_kmeans, linear_fit, silhouette_score

log = logging.getLogger(__name__)

R_THRESHOLD = 0.7
P_THRESHOLD = 0.01
SURROGATE = "surrogate"


@dataclass
class ClusterModel:
    k: int
    labels: np.ndarray
    centroids: np.ndarray
    silhouette: float
    properties: tuple
    means: np.ndarray
    scales: np.ndarray
    samples: list
    features: np.ndarray
    scores: dict = field(default_factory=dict)

    def members(self, cluster: int) -> list[int]:
        return [i for i, lab in enumerate(self.labels) if lab == cluster]


def _feature_matrix(samples, properties) -> np.ndarray:
    rows = []
    for s in samples:
        try:
            rows.append([float(s.values[p]) for p in properties])
        except KeyError as exc:
            raise InsufficientDataError(f"sample {s.entity_id} lacks property {exc}") from None
    return np.asarray(rows, dtype=float)


def cluster_samples(samples: Sequence[Sample], properties, k_range=None, restarts: int = 10,
                    seed: int = 0) -> ClusterModel:
    """k-means on z-scored property values, k chosen by mean silhouette.

    Ties in silhouette go to the smaller k.
    """
    properties = (properties,) if isinstance(properties, str) else tuple(properties)
    samples = list(samples)
    n = len(samples)
    if n < 3:
        raise InsufficientDataError(f"clustering needs at least 3 samples, got {n}")
    raw = _feature_matrix(samples, properties)
    means = raw.mean(axis=0)
    scales = raw.std(axis=0)
    if np.all(scales == 0):
        raise DegenerateDataError("all samples are identical in feature space")
    scales = np.where(scales == 0, 1.0, scales)
    X = (raw - means) / scales
    distinct = len(np.unique(X, axis=0))
    if k_range is None:
        k_range = range(2, min(10, n - 1) + 1)
    ks = [k for k in k_range if 2 <= k <= min(n - 1, distinct)]
    if not ks:
        raise InsufficientDataError(f"no admissible cluster count in {list(k_range)} for {n} samples")
    best = None
    scores = {}
    for k in ks:
        labels, centers, _ = best_kmeans(X, k, restarts=restarts, seed=seed)
        score = silhouette_score(X, labels)
        scores[k] = score
        if best is None or score > best[0] + 1e-12:
            best = (score, k, labels, centers)
    score, k, labels, centers = best
    return ClusterModel(k, labels, centers, score, properties, means, scales, samples, X, scores)


def _ranked(samples, prop, direction):
    sign = 1.0 if direction == MINIMIZE else -1.0
    usable = [s for s in samples if prop in s.values]
    return sorted(usable, key=lambda s: (sign * s.values[prop], s.entity_id))


def select_representatives(source, method: str = "clustering", *, property: str | None = None,
                           direction: str = MINIMIZE, n_points: int | None = None) -> list[Sample]:
    """Pick representative samples.

    ``clustering`` takes a ``ClusterModel`` and returns, per cluster, the
    member nearest its centroid (ties to the lower entity id). ``top5`` and
    ``linspace`` take samples ranked on ``property``; linspace spreads
    ``n_points`` ranks evenly with both endpoints included.
    """
    if method == "clustering":
        if not isinstance(source, ClusterModel):
            raise TypeError("clustering selection needs a ClusterModel")
        reps = []
        for j in range(source.k):
            members = source.members(j)
            dist = np.linalg.norm(source.features[members] - source.centroids[j], axis=1)
            order = sorted(range(len(members)),
                           key=lambda i: (dist[i], source.samples[members[i]].entity_id))
            reps.append(source.samples[members[order[0]]])
        return reps
    if property is None:
        raise ValueError(f"{method} selection needs the ranking property")
    ranked = _ranked(source.samples if isinstance(source, ClusterModel) else source,
                     property, direction)
    if method == "top5":
        if len(ranked) < 5:
            raise InsufficientDataError(f"top5 needs 5 ranked samples, got {len(ranked)}")
        return ranked[:5]
    if method == "linspace":
        if n_points is None:
            raise ValueError("linspace selection needs n_points")
        if n_points > len(ranked) or n_points < 1:
            raise InsufficientDataError(f"cannot pick {n_points} of {len(ranked)} ranked samples")
        if n_points == 1:
            return [ranked[0]]
        idx = [int(round(i * (len(ranked) - 1) / (n_points - 1))) for i in range(n_points)]
        return [ranked[i] for i in idx]
    raise ConfigurationError(f"unknown selection method {method!r}")


@dataclass(frozen=True)
class TransferDecision:
    r: float
    p: float
    n: int
    transfer: bool

    def to_document(self) -> dict:
        return {"n": self.n, "p": self.p, "r": self.r, "transfer": self.transfer}


def evaluate_transfer_criteria(fit: LinearFit | tuple) -> TransferDecision:
    """Transfer iff r > 0.7 and p < 0.01."""
    if isinstance(fit, LinearFit):
        r, p, n = fit.r, fit.p, fit.n
    else:
        r, p = fit[0], fit[1]
        n = fit[2] if len(fit) > 2 else 0
    return TransferDecision(r, p, n, bool(r > R_THRESHOLD and p < P_THRESHOLD))


@dataclass(frozen=True)
class SurrogateModel:
    """target ~ slope * source + intercept, fitted on the representatives."""

    slope: float
    intercept: float
    source_property: str
    source_space: str
    fit: LinearFit

    def predict(self, source_value):
        return self.slope * source_value + self.intercept

    @property
    def predicted_property(self) -> str:
        return f"{self.source_property}_predicted"

    def experiment(self, mapping: ValueMapping) -> Experiment:
        return Experiment(
            name=f"{SURROGATE}-{self.source_property}",
            actuator={"kind": SURROGATE, "inverse_mapping": mapping.inverse().to_document()},
            measured_properties=(self.predicted_property,),
            parameters={
                "intercept": self.intercept,
                "slope": self.slope,
                "source_property": self.source_property,
                "source_space": self.source_space,
            },
        )


def source_values(ds: DiscoverySpace, prop: str) -> dict[str, float]:
    """First ok value of ``prop`` per configuration in the space's record."""
    out: dict[str, float] = {}
    for s in ds.read():
        if prop in s.values and s.origin != PREDICTED:
            out.setdefault(s.entity_id, s.values[prop])
    return out


def _surrogate_factory(experiment: Experiment, store=None):
    if store is None:
        raise ConfigurationError("surrogate actuator needs the sample store")
    params = experiment.parameters
    inverse = ValueMapping(experiment.actuator.get("inverse_mapping") or {})
    cache: dict[str, dict] = {}

    def predict(config: Configuration):
        if "values" not in cache:
            src = DiscoverySpace.open(store, params["source_space"])
            cache["values"] = source_values(src, params["source_property"])
        key = canonical_id(map_configuration(config, inverse))
        if key not in cache["values"]:
            return failed(experiment, "no source value for configuration")
        value = params["slope"] * cache["values"][key] + params["intercept"]
        return succeeded(experiment, {experiment.measured_properties[0]: value})

    return predict


register_actuator(SURROGATE, _surrogate_factory)


@dataclass
class TransferReport:
    source_space: str
    target_space: str
    property: str
    selection: str
    decision: TransferDecision
    fit: LinearFit | None
    representatives: list
    cluster_count: int | None = None
    silhouette: float | None = None
    surrogate: SurrogateModel | None = None
    pred_space_id: str | None = None
    predictions: list = field(default_factory=list)
    quality: dict | None = None
    new_measurements: int = 0
    percent_savings: float | None = None

    def to_document(self) -> dict:
        return {
            "cluster_count": self.cluster_count,
            "decision": self.decision.to_document(),
            "fit": None if self.fit is None else {
                "intercept": self.fit.intercept, "slope": self.fit.slope,
            },
            "new_measurements": self.new_measurements,
            "percent_savings": self.percent_savings,
            "pred_space_id": self.pred_space_id,
            "predicted_count": len(self.predictions),
            "property": self.property,
            "quality": self.quality,
            "representatives": self.representatives,
            "selection": self.selection,
            "silhouette": self.silhouette,
            "source_space": self.source_space,
            "target_space": self.target_space,
        }

    def predictions_csv(self, dimensions: Sequence[str]) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["entity_id", *dimensions, f"{self.property}_predicted"])
        for config, value in self.predictions:
            w.writerow([canonical_id(config), *(config[d] for d in dimensions), repr(value)])
        return buf.getvalue()


def quality_metrics(predicted: Mapping[str, float], truth: Mapping[str, float],
                    direction: str = MINIMIZE) -> dict:
    """best%, top5% and rank resolution of predictions against a full characterization."""
    common = sorted(set(predicted) & set(truth))
    if len(common) < 5:
        raise InsufficientDataError("quality metrics need at least 5 characterized predictions")
    pred = {k: predicted[k] for k in common}
    true = {k: truth[k] for k in common}
    pred_rank = metrics.rank_ids(pred, direction)
    true_rank = metrics.rank_ids(truth, direction)
    cdf = metrics.SpaceCDF.from_values(truth.values(), direction)
    return {
        "best_percent": metrics.best_percentile(truth[pred_rank[0]], cdf),
        "rank_resolution": metrics.rank_resolution([pred[k] for k in common],
                                                   [true[k] for k in common]),
        "top5_percent": metrics.top5_overlap(pred_rank, true_rank),
    }


def _check_actions(source: DiscoverySpace, target: DiscoverySpace) -> None:
    if source.actions.to_document() != target.actions.to_document():
        raise ConfigurationError("source and target spaces must share an identical action space")


def run_rssc(source: DiscoverySpace, target: DiscoverySpace, mapping: ValueMapping | Mapping | None,
             property: str, selection: str = "clustering", *, direction: str = MINIMIZE,
             k_range=None, n_points: int | None = None, ground_truth: Mapping[str, float] | None = None,
             operation_id: str | None = None, pred_space_id: str | None = None,
             seed: int = 0, predict: bool = True) -> TransferReport:
    """Run the full transfer pipeline from ``source`` to ``target``.

    ``ground_truth`` maps target entity ids to true property values; when
    given, the report carries best%, top5% and rank resolution.
    """
    if not isinstance(mapping, ValueMapping):
        mapping = ValueMapping(mapping or {})
    direction = Objective(property, direction).direction
    _check_actions(source, target)
    mapping.validate(source.space)
    src_samples = _dedupe(s for s in source.read() if property in s.values and s.origin != PREDICTED)

    model = None
    if selection == "clustering" or (selection == "linspace" and n_points is None):
        # Fewer than three representatives cannot be fitted, so k starts at 3.
        ks = k_range or range(3, min(10, len(src_samples) - 1) + 1)
        model = cluster_samples(src_samples, [property], ks, seed=seed)
        n_points = model.k
    if selection == "clustering":
        reps = select_representatives(model, "clustering")
    else:
        reps = select_representatives(src_samples, selection, property=property,
                                      direction=direction, n_points=n_points)

    operation_id = operation_id or target.unique_operation_id(f"rssc-{source.space_id}")
    pairs = []
    new_measurements = 0
    for rep in reps:
        mapped = map_configuration(rep.configuration, mapping)
        got = target.sample(mapped, operation_id)
        if got.origin == "measured":
            new_measurements += 1
        pairs.append((rep, got))
    usable = [(r, t) for r, t in pairs if property in t.values]
    representatives = [
        {
            "source": r.configuration.as_dict(),
            "source_value": r.values[property],
            "target": t.configuration.as_dict(),
            "target_value": t.values.get(property),
        }
        for r, t in pairs
    ]
    report = TransferReport(
        source_space=source.space_id,
        target_space=target.space_id,
        property=property,
        selection=selection,
        decision=TransferDecision(float("nan"), float("nan"), len(usable), False),
        fit=None,
        representatives=representatives,
        cluster_count=model.k if model else None,
        silhouette=model.silhouette if model else None,
        new_measurements=new_measurements,
    )
    try:
        fit = linear_fit([r.values[property] for r, _ in usable], [t.values[property] for _, t in usable])
    except (InsufficientDataError, DegenerateDataError) as exc:
        log.warning("transfer criteria not evaluable: %s", exc)
        return report
    report.fit = fit
    report.decision = evaluate_transfer_criteria(fit)
    if not report.decision.transfer:
        return report

    surrogate = SurrogateModel(fit.slope, fit.intercept, property, source.space_id, fit)
    report.surrogate = surrogate
    report.percent_savings = metrics.percent_savings(new_measurements, cardinality(target.space))
    src_values = {k: v for k, v in source_values(source, property).items()}
    inverse = mapping.inverse()

    def model_prediction(config):
        key = canonical_id(map_configuration(config, inverse))
        return surrogate.predict(src_values[key]) if key in src_values else None

    if ground_truth is not None:
        predicted = {}
        for config in enumerate_space(target.space):
            value = model_prediction(config)
            if value is not None:
                predicted[canonical_id(config)] = value
        report.quality = quality_metrics(predicted, ground_truth, direction)

    if predict:
        exp = surrogate.experiment(mapping)
        pred_id = pred_space_id or _unique_space_id(target, f"{target.space_id}-pred")
        pred = DiscoverySpace.create(target.store, pred_id, target.space,
                                     target.actions.with_experiment(exp), target.reuse_policy)
        report.pred_space_id = pred_id
        real = [e.name for e in target.actions]
        rep_ids = set()
        for _, t in pairs:
            pred.sample(t.configuration, operation_id, experiments=real)
            rep_ids.add(t.entity_id)
        for config in enumerate_space(target.space):
            if canonical_id(config) in rep_ids:
                continue
            s = pred.sample(config, operation_id, experiments=[exp.name])
            if exp.measured_properties[0] in s.values:
                report.predictions.append((s.configuration, s.values[exp.measured_properties[0]]))
    return report


def _dedupe(samples) -> list[Sample]:
    seen = set()
    out = []
    for s in samples:
        if s.entity_id not in seen:
            seen.add(s.entity_id)
            out.append(s)
    return out


def _unique_space_id(ds: DiscoverySpace, base: str) -> str:
    existing = set(ds.store.space_ids())
    if base not in existing:
        return base
    n = 2
    while f"{base}-{n}" in existing:
        n += 1
    return f"{base}-{n}"


def ground_truth_from_samples(samples, prop: str) -> dict[str, float]:
    return {s.entity_id: s.values[prop] for s in samples if prop in s.values}


def ground_truth_from_actuator(ds: DiscoverySpace, prop: str) -> dict[str, float]:
    """Characterize every point directly with the provider actuator, bypassing the store."""
    from .actuators import resolve_actuator

    exp = ds.actions.provider(prop)
    act = resolve_actuator(exp, ds.store)
    out = {}
    for config in enumerate_space(ds.space):
        result = act(config)
        if result.ok and not math.isnan(result.property_values[prop].value):
            out[canonical_id(config)] = result.property_values[prop].value
    return out
