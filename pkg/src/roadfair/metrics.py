"""Accuracy and fairness metrics, worst-k aggregation and Pareto fronts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Mapping

import numpy as np

from .errors import UndefinedMetricError, UsageError


@dataclass(frozen=True)
class Predictions:
    scores: np.ndarray
    hard: np.ndarray

    @classmethod
    def from_scores(cls, scores) -> "Predictions":
        s = np.asarray(scores, dtype=np.float64).ravel()
        # strict inequality: exactly 0.5 is a negative
        return cls(s, (s > 0.5).astype(np.int64))

    def __len__(self):
        return self.hard.size


def _as_hard(pred) -> np.ndarray:
    if isinstance(pred, Predictions):
        return pred.hard
    return np.asarray(pred).astype(np.int64).ravel()


def accuracy(pred, labels) -> float:
    hard = _as_hard(pred)
    y = np.asarray(labels).ravel()
    if hard.size == 0:
        raise UsageError("accuracy of an empty prediction set")
    if hard.size != y.size:
        raise UsageError(f"{hard.size} predictions vs {y.size} labels")
    return float(np.mean(hard == y))


def _rate(hard, mask, what):
    if not mask.any():
        raise UndefinedMetricError(f"{what} is empty")
    return hard[mask].mean()


def global_di(pred, sensitive) -> float:
    """|P(f_hat = 1 | s = 1) - P(f_hat = 1 | s = 0)|."""
    hard = _as_hard(pred)
    s = np.asarray(sensitive).ravel()
    if s.size != hard.size:
        raise UsageError(f"{hard.size} predictions vs {s.size} sensitive values")
    return float(abs(_rate(hard, s == 1, "group s=1") - _rate(hard, s == 0, "group s=0")))


def local_di(pred, sensitive, subgroups) -> Dict[str, float]:
    hard = _as_hard(pred)
    s = np.asarray(sensitive).ravel()
    return {g.identifier: global_di(hard[g.member_indices], s[g.member_indices]) for g in subgroups}


def worst_k_di(local: Mapping[str, float], k: int = 1) -> float:
    """k-th largest local DI; falls back to the smallest one when k exceeds the count."""
    if not local:
        raise UsageError("no local DI values")
    if k < 1:
        raise UsageError("k must be >= 1")
    ordered = sorted(local.values(), reverse=True)
    return float(ordered[min(k, len(ordered)) - 1])


def eo_gap(pred, labels, sensitive) -> float:
    """max(|TPR_1 - TPR_0|, |FPR_1 - FPR_0|)."""
    hard = _as_hard(pred)
    y = np.asarray(labels).ravel()
    s = np.asarray(sensitive).ravel()
    if not (hard.size == y.size == s.size):
        raise UsageError("predictions, labels and sensitive differ in length")
    rates = {}
    for yv in (0, 1):
        for sv in (0, 1):
            rates[yv, sv] = _rate(hard, (y == yv) & (s == sv), f"cell (y={yv}, s={sv})")
    tpr_gap = abs(rates[1, 1] - rates[1, 0])
    fpr_gap = abs(rates[0, 1] - rates[0, 0])
    return float(max(tpr_gap, fpr_gap))


def pareto_front(points: Iterable[Mapping[str, Any]], constraint: Callable[[Mapping], bool] | None = None,
                 x: str = "x", y: str = "y") -> List[Mapping[str, Any]]:
    """Non-dominated points (``x`` minimized, ``y`` maximized), sorted by ``x``.

    Exact duplicates do not dominate each other, so both are kept.
    """
    pts = [p for p in points if constraint is None or constraint(p)]
    # sweep in x order: a point survives iff its y beats every y seen at strictly smaller x,
    # and it is not beaten by a same-x point with larger y
    pts.sort(key=lambda p: (p[x], -p[y]))
    front = []
    best_y = -np.inf
    i = 0
    while i < len(pts):
        j = i
        while j < len(pts) and pts[j][x] == pts[i][x]:
            j += 1
        same_x = pts[i:j]
        top = same_x[0][y]
        if top > best_y:
            front.extend(p for p in same_x if p[y] == top)
            best_y = top
        i = j
    return front


@dataclass
class RunReport:
    accuracy: float
    global_di: float
    eo_gap: float | None
    local_di: Dict[str, float]
    worst_k_di: Dict[int, float]
    subgroup_sizes: Dict[str, int] = field(default_factory=dict)
    mean_r: Dict[str, float] = field(default_factory=dict)
    r_histogram: Dict[str, list] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def worst_1_di(self) -> float:
        return self.worst_k_di[1]

    @property
    def worst_3_di(self) -> float:
        return self.worst_k_di[3]

    def to_flat(self) -> Dict[str, Any]:
        """One-level dict for JSON lines: nested maps become dotted keys."""
        out: Dict[str, Any] = {
            "accuracy": self.accuracy,
            "global_di": self.global_di,
            "eo_gap": self.eo_gap,
        }
        for k, v in sorted(self.worst_k_di.items()):
            out[f"worst_{k}_di"] = v
        for gid, v in self.local_di.items():
            out[f"local_di.{gid}"] = v
        for gid, v in self.subgroup_sizes.items():
            out[f"subgroup_n.{gid}"] = v
        for gid, v in self.mean_r.items():
            out[f"mean_r.{gid}"] = v
        if self.r_histogram:
            out["r_hist.edges"] = list(self.r_histogram["edges"])
            out["r_hist.counts"] = list(self.r_histogram["counts"])
        for k, v in self.config.items():
            out[f"config.{k}"] = v
        return out

    @classmethod
    def from_flat(cls, flat: Mapping[str, Any]) -> "RunReport":
        def section(prefix):
            return {k[len(prefix):]: v for k, v in flat.items() if k.startswith(prefix)}

        worst = {int(k[len("worst_"):-len("_di")]): v for k, v in flat.items()
                 if k.startswith("worst_") and k.endswith("_di")}
        hist = {}
        if "r_hist.edges" in flat:
            hist = {"edges": flat["r_hist.edges"], "counts": flat["r_hist.counts"]}
        return cls(flat["accuracy"], flat["global_di"], flat.get("eo_gap"), section("local_di."), worst,
                   section("subgroup_n."), section("mean_r."), hist, section("config."))


def build_report(pred: Predictions, labels, sensitive, subgroups, ks=(1, 3), weights=None,
                 config=None, hist_bins=20, hist_max=5.0) -> RunReport:
    """Evaluate every metric on one prediction set.

    ``weights`` (per-sample r) feeds the mean-r and histogram diagnostics.
    The EO gap is None when a (y, s) cell is empty.
    """
    local = local_di(pred, sensitive, subgroups)
    try:
        eo = eo_gap(pred, labels, sensitive)
    except UndefinedMetricError:
        eo = None
    report = RunReport(
        accuracy=accuracy(pred, labels),
        global_di=global_di(pred, sensitive),
        eo_gap=eo,
        local_di=local,
        worst_k_di={k: worst_k_di(local, k) for k in ks},
        subgroup_sizes={g.identifier: g.size for g in subgroups},
        config=dict(config or {}),
    )
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64).ravel()
        report.mean_r = {g.identifier: float(w[g.member_indices].mean()) for g in subgroups}
        counts, edges = np.histogram(np.minimum(w, hist_max), bins=hist_bins, range=(0.0, hist_max))
        report.r_histogram = {"edges": edges.tolist(), "counts": counts.tolist()}
    return report
