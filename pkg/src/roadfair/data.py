"""Datasets: CSV ingestion, standardization, stratified splits, batching,
subgroup construction and a synthetic generator with planted local bias."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Sequence

import numpy as np

from .errors import ConfigurationError, ParseError, UnsupportedError
from .nn import make_rng


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    sensitive: np.ndarray
    column_names: tuple
    # untransformed features, used for subgroup binning
    raw_features: np.ndarray | None = None
    value_maps: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise ConfigurationError("features must be a 2-d matrix")
        y = np.asarray(self.labels).astype(np.int64).ravel()
        s = np.asarray(self.sensitive).astype(np.int64).ravel()
        if x.shape[0] < 1 or y.size != x.shape[0] or s.size != x.shape[0]:
            raise ConfigurationError("features, labels and sensitive must have the same non-zero length")
        if not (np.isin(y, (0, 1)).all() and np.isin(s, (0, 1)).all()):
            raise ConfigurationError("labels and sensitive values must be 0/1")
        if np.isnan(x).any():
            raise ConfigurationError("NaN in features")
        if len(self.column_names) != x.shape[1]:
            raise ConfigurationError(f"{len(self.column_names)} column names for {x.shape[1]} feature columns")
        raw = x if self.raw_features is None else np.asarray(self.raw_features, dtype=np.float64)
        for name, value in (("features", x), ("labels", y), ("sensitive", s), ("raw_features", raw)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def column_index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise ConfigurationError(f"unknown column {name!r}; have {list(self.column_names)}") from None

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            features=self.features[idx],
            labels=self.labels[idx],
            sensitive=self.sensitive[idx],
            raw_features=self.raw_features[idx],
        )

    def has_both_groups(self) -> bool:
        return np.unique(self.sensitive).size == 2


def _binary_map(values: Sequence[str], column: str) -> tuple[np.ndarray, dict]:
    distinct = list(dict.fromkeys(values))
    if len(distinct) > 2:
        raise UnsupportedError(f"column {column!r} has {len(distinct)} distinct values; only binary is supported")
    if set(distinct) <= {"0", "1"} or set(distinct) <= {"0.0", "1.0"}:
        mapping = {v: int(float(v)) for v in distinct}
    else:
        mapping = {v: i for i, v in enumerate(distinct)}
    return np.array([mapping[v] for v in values], dtype=np.int64), mapping


def load_csv(path, label_column: str, sensitive_column: str) -> Dataset:
    """Read a headered CSV. Remaining columns must be numeric and become features."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigurationError(f"{path}: empty file")
    header, body = [h.strip() for h in rows[0]], [r for r in rows[1:] if r]
    for col in (label_column, sensitive_column):
        if col not in header:
            raise ConfigurationError(f"{path}: missing column {col!r}")
    if not body:
        raise ConfigurationError(f"{path}: no data rows")
    li, si = header.index(label_column), header.index(sensitive_column)
    feature_idx = [j for j in range(len(header)) if j not in (li, si)]
    x = np.empty((len(body), len(feature_idx)))
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}: row {i} has {len(row)} cells, header has {len(header)}")
        for k, j in enumerate(feature_idx):
            try:
                x[i - 2, k] = float(row[j])
            except ValueError:
                raise ParseError(f"{path}: row {i}, column {header[j]!r}: {row[j]!r} is not numeric") from None
    y, ymap = _binary_map([r[li].strip() for r in body], label_column)
    s, smap = _binary_map([r[si].strip() for r in body], sensitive_column)
    return Dataset(x, y, s, tuple(header[j] for j in feature_idx), value_maps={"label": ymap, "sensitive": smap})


@dataclass(frozen=True)
class Standardizer:
    columns: tuple
    mean: np.ndarray
    std: np.ndarray

    def apply(self, ds: Dataset) -> Dataset:
        if tuple(ds.column_names) != tuple(self.columns):
            missing = sorted(set(self.columns) ^ set(ds.column_names))
            raise ConfigurationError(f"feature schema mismatch; differing columns: {missing or list(ds.column_names)}")
        scale = np.where(self.std < 1e-12, 1.0, self.std)
        return replace(ds, features=(ds.raw_features - self.mean) / scale, raw_features=ds.raw_features)

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Standardizer":
        return cls(tuple(d["columns"]), np.asarray(d["mean"], float), np.asarray(d["std"], float))


def standardize(ds: Dataset) -> tuple[Dataset, Standardizer]:
    """Population-std z-scoring; near-constant columns are only centered."""
    if ds.n < 2:
        raise ConfigurationError("standardize needs at least 2 rows")
    mean = ds.raw_features.mean(axis=0)
    std = ds.raw_features.std(axis=0)
    std = np.where(std < 1e-12, 0.0, std)
    st = Standardizer(ds.column_names, mean, std)
    return st.apply(ds), st


def split(ds: Dataset, test_fraction: float, rng) -> tuple[Dataset, Dataset]:
    """Shuffled split stratified on the (label, sensitive) cells."""
    if not 0 < test_fraction < 1:
        raise ConfigurationError("test_fraction must be in (0, 1)")
    train_idx, test_idx = [], []
    # per-cell rounding can drift from the overall target; hand out the remainder largest-first
    cells = []
    for y in (0, 1):
        for s in (0, 1):
            idx = np.flatnonzero((ds.labels == y) & (ds.sensitive == s))
            if idx.size == 0:
                warnings.warn(f"split: (y={y}, s={s}) cell is empty", RuntimeWarning, stacklevel=2)
            cells.append(rng.permutation(idx))
    exact = [c.size * test_fraction for c in cells]
    n_test = [math.floor(e) for e in exact]
    target = round(ds.n * test_fraction)
    order = sorted(range(4), key=lambda k: exact[k] - n_test[k], reverse=True)
    for k in order:
        if sum(n_test) >= target:
            break
        if n_test[k] < cells[k].size:
            n_test[k] += 1
    for c, k in zip(cells, n_test):
        test_idx.extend(c[:k])
        train_idx.extend(c[k:])
    if not train_idx or not test_idx:
        raise ConfigurationError("split would leave an empty side")
    train_idx = rng.permutation(np.array(train_idx, dtype=np.int64))
    test_idx = rng.permutation(np.array(test_idx, dtype=np.int64))
    return ds.subset(train_idx), ds.subset(test_idx)


@dataclass(frozen=True)
class Batch:
    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    sensitive: np.ndarray

    def __len__(self):
        return self.indices.size

    def has_both_groups(self) -> bool:
        return np.unique(self.sensitive).size == 2


def iterate_batches(ds: Dataset, batch_size: int, rng) -> List[Batch]:
    """One epoch of shuffled batches.

    A trailing batch that is shorter than ``batch_size`` is kept only if it
    has at least two samples from both sensitive groups together; otherwise
    it is merged into the previous batch.
    """
    if batch_size < 2:
        raise ConfigurationError("batch_size must be >= 2")
    perm = rng.permutation(ds.n)
    chunks = [perm[i : i + batch_size] for i in range(0, ds.n, batch_size)]
    if len(chunks) > 1 and chunks[-1].size < batch_size:
        tail = chunks[-1]
        if tail.size < 2 or np.unique(ds.sensitive[tail]).size < 2:
            chunks = chunks[:-2] + [np.concatenate(chunks[-2:])]
    return [Batch(c, ds.features[c], ds.labels[c], ds.sensitive[c]) for c in chunks]


@dataclass(frozen=True)
class SubgroupSpec:
    bin_column: str
    bin_width: float
    cross_columns: tuple = ()
    min_size: int = 1
    # optional population restriction, e.g. {"gender": 1}
    where: tuple = ()

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ConfigurationError("bin_width must be > 0")
        if self.min_size < 1:
            raise ConfigurationError("min_size must be >= 1")
        object.__setattr__(self, "cross_columns", tuple(self.cross_columns))
        where = self.where.items() if isinstance(self.where, dict) else self.where
        object.__setattr__(self, "where", tuple(sorted(where)))

    def describe(self) -> str:
        parts = [f"{self.bin_column}/{self.bin_width:g}"]
        parts += [f"x{c}" for c in self.cross_columns]
        parts += [f"{c}={v:g}" for c, v in self.where]
        return " ".join(parts)


@dataclass(frozen=True)
class Subgroup:
    identifier: str
    member_indices: np.ndarray

    @property
    def size(self) -> int:
        return self.member_indices.size


def _fmt(v: float) -> str:
    return f"{v:g}"


def build_subgroups(ds: Dataset, spec: SubgroupSpec) -> List[Subgroup]:
    """Half-open bins ``[k w, (k+1) w)`` on the raw bin column, crossed with
    the exact values of ``cross_columns``."""
    bcol = ds.raw_features[:, ds.column_index(spec.bin_column)]
    crosses = [ds.raw_features[:, ds.column_index(c)] for c in spec.cross_columns]
    mask = np.ones(ds.n, dtype=bool)
    for col, value in spec.where:
        mask &= ds.raw_features[:, ds.column_index(col)] == value
    bins = np.floor(bcol / spec.bin_width).astype(np.int64)
    keys: Dict[tuple, list] = {}
    for i in np.flatnonzero(mask):
        key = (bins[i], *(c[i] for c in crosses))
        keys.setdefault(key, []).append(i)
    groups = []
    dropped_small = dropped_single = 0
    for key in sorted(keys):
        members = np.array(keys[key], dtype=np.int64)
        k = key[0]
        ident = f"{spec.bin_column}[{_fmt(k * spec.bin_width)},{_fmt((k + 1) * spec.bin_width)})"
        ident += "".join(f"|{c}={_fmt(v)}" for c, v in zip(spec.cross_columns, key[1:]))
        ident += "".join(f"|{c}={_fmt(v)}" for c, v in spec.where)
        if members.size < spec.min_size:
            dropped_small += 1
            continue
        if np.unique(ds.sensitive[members]).size < 2:
            dropped_single += 1
            warnings.warn(f"subgroup {ident} has a single sensitive value; dropped", RuntimeWarning, stacklevel=2)
            continue
        groups.append(Subgroup(ident, members))
    if not groups:
        raise ConfigurationError(
            f"no subgroup survives ({spec.describe()}, min_size={spec.min_size}): "
            f"{dropped_small} below min_size, {dropped_single} with a single sensitive value"
        )
    return groups


@dataclass(frozen=True)
class SyntheticConfig:
    """Planted-bias generator settings.

    Region k is the age band ``[20 + 10k, 30 + 10k)``. Inside region k the
    label gap P(Y=1|S=1) - P(Y=1|S=0) is ``base_bias * per_region_bias[k]``
    when ``label_noise`` is near zero; Gaussian label noise shrinks it (to
    about two thirds at noise 1.0, which the preset accounts for).
    ``region_weights`` sets how populated each band is and ``s1_rate`` the
    share of S=1 per band (shifted by +/-0.15 with the gender feature).
    """

    n: int = 4000
    seed: int = 0
    n_subregions: int = 6
    base_bias: float = 0.3
    per_region_bias: tuple | None = None
    drift_shift: float = 0.0
    region_weights: tuple | None = None
    s1_rate: tuple | None = None
    label_noise: float = 0.1
    proxy_noise: float = 1.0
    # per-band intercept added to the label margin of both groups
    region_shift: tuple | None = None

    def resolved(self):
        k = self.n_subregions
        bias = np.ones(k) if self.per_region_bias is None else np.asarray(self.per_region_bias, float)
        weights = np.ones(k) if self.region_weights is None else np.asarray(self.region_weights, float)
        s1 = np.full(k, 0.5) if self.s1_rate is None else np.asarray(self.s1_rate, float)
        if not (bias.size == weights.size == s1.size == k):
            raise ConfigurationError("per-region settings must have n_subregions entries")
        return self.base_bias * bias, weights / weights.sum(), s1


def local_bias_config(n: int = 4000, seed: int = 0, **overrides) -> SyntheticConfig:
    """Benchmark preset: dense, mildly biased young bands and sparse, strongly
    biased, S-imbalanced older bands. Global label gap is about 0.31."""
    kw = dict(
        n=n,
        seed=seed,
        n_subregions=6,
        base_bias=0.55,
        per_region_bias=(0.6, 0.6, 1.0, 1.4, 1.8, 1.8),
        region_weights=(0.3, 0.3, 0.2, 0.1, 0.06, 0.04),
        s1_rate=(0.5, 0.5, 0.4, 0.3, 0.25, 0.2),
        label_noise=1.0,
        proxy_noise=0.1,
    )
    kw.update(overrides)
    return SyntheticConfig(**kw)


SYNTHETIC_COLUMNS = ("age", "gender", "skill", "history", "proxy")
BAND_WIDTH = 10.0
AGE_MIN = 20.0


def synthesize(cfg: SyntheticConfig, drifted: bool = False) -> Dataset:
    """Draw a dataset with a known local label bias per age band.

    With ``drifted=True`` an independent sample is drawn from the shifted
    distribution: band boundaries move right by ``drift_shift * 10`` years
    and band populations tilt towards older bands.
    """
    if cfg.n < 200 or cfg.n_subregions < 2:
        raise ConfigurationError("synthesize needs n >= 200 and n_subregions >= 2")
    offsets, weights, s1_rate = cfg.resolved()
    stream = 1 if drifted else 0
    rng = make_rng(np.random.SeedSequence([cfg.seed, stream]).generate_state(1, np.uint64)[0])
    k = cfg.n_subregions
    shift = cfg.drift_shift if drifted else 0.0
    if shift:
        tilt = np.exp(shift * np.linspace(-1.0, 1.0, k))
        weights = weights * tilt / np.dot(weights, tilt)
    region = rng.choice(k, size=cfg.n, p=weights)
    age = AGE_MIN + BAND_WIDTH * (region + rng.uniform(0.0, 1.0, cfg.n)) + BAND_WIDTH * shift
    gender = rng.integers(0, 2, cfg.n)
    p_s1 = np.clip(s1_rate[region] + 0.15 * (2 * gender - 1), 0.02, 0.98)
    s = (rng.uniform(size=cfg.n) < p_s1).astype(np.int64)
    skill = rng.uniform(-1.0, 1.0, cfg.n)
    history = rng.normal(0.0, 1.0, cfg.n)
    proxy = s + cfg.proxy_noise * rng.normal(0.0, 1.0, cfg.n)
    # skill ~ U(-1, 1): shifting its threshold by +/-b moves P(Y=1) by +/-b/2 per group
    margin = skill + offsets[region] * (2 * s - 1)
    if cfg.region_shift is not None:
        if len(cfg.region_shift) != k:
            raise ConfigurationError("region_shift must have n_subregions entries")
        margin = margin + np.asarray(cfg.region_shift, dtype=np.float64)[region]
    noise = cfg.label_noise * rng.normal(0.0, 1.0, cfg.n)
    y = (margin + noise > 0).astype(np.int64)
    x = np.column_stack([age, gender, skill, history, proxy]).astype(np.float64)
    return Dataset(x, y, s, SYNTHETIC_COLUMNS)
