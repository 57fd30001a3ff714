"""Training loops: biased, globally fair adversarial, ROAD and BROAD.

Every loop walks the same seeded batch schedule. Per batch the update
order is adversary g (``n_g`` steps), then ratio head h (``n_r`` steps,
ROAD only), then one predictor step. Each network draws its initial
weights from its own child seed, so the predictor's trajectory does not
depend on whether an adversary or a ratio head exists.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional

import numpy as np

from . import nn
from .data import Batch, Dataset, Standardizer, iterate_batches
from .errors import ConfigurationError, UsageError
from .metrics import Predictions, global_di
from .nn import Activation, DenseNetwork, binary_cross_entropy, forward, backward, make_rng, mlp, sgd_step
from .ratio import (
    Normalization,
    RatioNetwork,
    broad_weights,
    normalization_backward,
    normalize,
)

log = logging.getLogger(__name__)

TAU_FLOOR = 1e-3


class Algorithm(str, Enum):
    BIASED = "biased"
    GLOBAL_FAIR = "globalfair"
    ROAD = "road"
    BROAD = "broad"


class FairnessMode(str, Enum):
    DP = "dp"
    EO = "eo"


@dataclass(frozen=True)
class TrainConfig:
    algorithm: Algorithm = Algorithm.BIASED
    lambda_g: float = 0.0
    tau: float = 0.5
    lr_f: float = 0.01
    lr_g: float = 0.01
    lr_r: float = 0.01
    n_g: int = 5
    n_r: int = 5
    batch_size: int = 128
    epochs: int = 200
    fairness_mode: FairnessMode = FairnessMode.DP
    normalization: Normalization = Normalization.CONDITIONAL
    seed: int = 0
    f_hidden: tuple = (64, 32)
    g_hidden: tuple = (64, 32, 16)
    h_hidden: tuple = (64, 32)
    # stop after this many predictor updates (None = run all epochs)
    max_steps: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "fairness_mode", FairnessMode(self.fairness_mode))
        object.__setattr__(self, "normalization", Normalization(self.normalization))
        for name in ("f_hidden", "g_hidden", "h_hidden"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if self.lambda_g < 0:
            raise ConfigurationError("lambda_g must be >= 0")
        if min(self.lr_f, self.lr_g, self.lr_r) <= 0:
            raise ConfigurationError("learning rates must be > 0")
        if self.n_g < 1 or self.n_r < 1 or self.epochs < 1:
            raise ConfigurationError("n_g, n_r and epochs must be >= 1")
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be >= 2")
        if self.tau < 0:
            raise ConfigurationError("tau must be >= 0")

    def resolved(self) -> "TrainConfig":
        """Apply the small-temperature floor for the reweighted algorithms."""
        if self.algorithm in (Algorithm.ROAD, Algorithm.BROAD) and self.tau < TAU_FLOOR:
            warnings.warn(f"tau={self.tau} floored to {TAU_FLOOR}", RuntimeWarning, stacklevel=3)
            return replace(self, tau=TAU_FLOOR)
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, Enum):
                d[k] = v.value
            elif isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        names = cls.__dataclass_fields__
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items() if k in names})


@dataclass
class TrainedModel:
    config: TrainConfig
    predictor: DenseNetwork
    adversary: Optional[DenseNetwork] = None
    ratio_head: Optional[RatioNetwork] = None
    column_names: tuple = ()
    standardizer: Optional[Standardizer] = None
    trace: Dict[str, list] = field(default_factory=dict)

    def predict_proba(self, features) -> np.ndarray:
        return forward(self.predictor, features)[0].ravel()

    def predict(self, ds: Dataset) -> Predictions:
        return Predictions.from_scores(self.predict_proba(ds.features))

    def adversary_losses(self, ds: Dataset, scores=None) -> np.ndarray:
        if scores is None:
            scores = self.predict_proba(ds.features)
        q = forward(self.adversary, adversary_input(scores, ds.labels, self.config.fairness_mode))[0]
        return binary_cross_entropy(q, ds.sensitive)[1]

    def sample_weights(self, ds: Dataset, scores=None) -> np.ndarray:
        """The r each sample of ``ds`` gets when ``ds`` is taken as one pool."""
        mode = self.config.normalization
        if self.config.algorithm is Algorithm.ROAD:
            return self.ratio_head.weights(ds.features, ds.sensitive, mode).weights
        if self.config.algorithm is Algorithm.BROAD:
            return broad_weights(self.adversary_losses(ds, scores), ds.sensitive, self.config.tau, mode).weights
        return np.ones(ds.n)


def adversary_input(pred_scores, labels, mode) -> np.ndarray:
    """[f(x)] for demographic parity, [f(x), y] for equalized odds."""
    p = np.asarray(pred_scores, dtype=np.float64).ravel()
    if FairnessMode(mode) is FairnessMode.DP:
        return p[:, None]
    y = np.asarray(labels, dtype=np.float64).ravel()
    if y.size != p.size:
        raise UsageError(f"{p.size} scores vs {y.size} labels")
    return np.column_stack([p, y])


def adversary_dim(mode) -> int:
    return 1 if FairnessMode(mode) is FairnessMode.DP else 2


# per-batch objectives; each returns (value, gradients of the network being updated)

def adversary_objective(adversary, pred_scores, labels, sensitive, mode):
    """J_s = mean L_S(g(adv_input), s), gradient wrt g."""
    q, trace = forward(adversary, adversary_input(pred_scores, labels, mode))
    loss, _, dq = binary_cross_entropy(q, sensitive)
    return loss, backward(adversary, trace, dq[:, None])


def ratio_objective(ratio_net: RatioNetwork, features, sensitive, adversary_losses, tau, mode):
    """J_r = mean(r L_S) + tau mean(r log r), gradient wrt h through the normalization."""
    h, trace = ratio_net.scores(features, sensitive)
    ra = normalize(h, sensitive, mode)
    losses = np.asarray(adversary_losses, dtype=np.float64).ravel()
    n = h.size
    value = float(np.mean(ra.weights * losses) + tau * np.mean(ra.weights * ra.log_weights))
    d_r = (losses + tau * (ra.log_weights + 1.0)) / n
    d_h = normalization_backward(ra, d_r, sensitive)
    return value, backward(ratio_net.head, trace, d_h[:, None])


def predictor_objective(predictor, adversary, features, labels, sensitive, lambda_g, weights=None, mode="dp"):
    """J_f = mean L_Y - lambda_g mean(r L_S), gradient wrt f only.

    ``weights`` and the adversary's parameters are constants here; the
    fairness gradient reaches f through the adversary's input.
    ``weights=None`` means r = 1 everywhere.
    """
    p, ftrace = forward(predictor, features)
    loss_y, _, d_p = binary_cross_entropy(p, labels)
    value = loss_y
    if adversary is not None:
        q, gtrace = forward(adversary, adversary_input(p, labels, mode))
        _, per_sample, d_q = binary_cross_entropy(q, sensitive)
        r = np.ones(per_sample.size) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
        value = loss_y - lambda_g * float(np.mean(r * per_sample))
        back = backward(adversary, gtrace, (-lambda_g * r * d_q)[:, None])
        d_p = d_p + back.inputs[:, 0]
    return float(value), backward(predictor, ftrace, d_p[:, None])


UpdateCallback = Callable[[str, TrainedModel], None]


def _child_rngs(seed: int, n: int):
    return [make_rng(int(c.generate_state(1, np.uint64)[0])) for c in np.random.SeedSequence(seed).spawn(n)]


def _fit(data: Dataset, cfg: TrainConfig, callback: Optional[UpdateCallback]) -> TrainedModel:
    cfg = cfg.resolved()
    algo = cfg.algorithm
    mode = cfg.fairness_mode
    fair = algo is not Algorithm.BIASED
    if fair and not data.has_both_groups():
        raise ConfigurationError("fair training needs both sensitive groups in the data")

    f_rng, g_rng, h_rng, batch_rng = _child_rngs(cfg.seed, 4)
    model = TrainedModel(
        config=cfg,
        predictor=mlp(data.d, cfg.f_hidden, Activation.SIGMOID, f_rng),
        adversary=mlp(adversary_dim(mode), cfg.g_hidden, Activation.SIGMOID, g_rng) if fair else None,
        ratio_head=RatioNetwork.create(data.d, cfg.h_hidden, h_rng) if algo is Algorithm.ROAD else None,
        column_names=data.column_names,
    )
    trace = {k: [] for k in ("loss_y", "loss_s", "train_di", "r_mean", "r_var", "skipped_batches")}
    model.trace = trace
    # single-group batches cannot be conditionally normalized; every algorithm skips them
    # so all share one batch schedule
    skip_single = data.has_both_groups()
    steps = 0
    for epoch in range(cfg.epochs):
        skipped = 0
        r_means, r_vars = [], []
        for batch in iterate_batches(data, cfg.batch_size, batch_rng):
            if skip_single and not batch.has_both_groups():
                skipped += 1
                continue
            weights = _adversary_phase(model, batch, cfg, callback)
            if weights is not None:
                r_means.append(float(weights.mean()))
                r_vars.append(float(weights.var()))
            _, grads = predictor_objective(
                model.predictor, model.adversary, batch.features, batch.labels, batch.sensitive,
                cfg.lambda_g, weights, mode,
            )
            sgd_step(model.predictor, grads, cfg.lr_f)
            if callback:
                callback("f", model)
            steps += 1
            if cfg.max_steps is not None and steps >= cfg.max_steps:
                break
        _record_epoch(model, data, trace, r_means, r_vars, skipped)
        if cfg.max_steps is not None and steps >= cfg.max_steps:
            break
    log.debug("trained %s for %d predictor steps", algo.value, steps)
    return model


def _adversary_phase(model: TrainedModel, batch: Batch, cfg: TrainConfig, callback) -> Optional[np.ndarray]:
    """Steps (1) and (2) of a batch. Returns the weights for the predictor step."""
    if model.adversary is None:
        return None
    mode = cfg.fairness_mode
    scores = model.predict_proba(batch.features)
    for _ in range(cfg.n_g):
        _, grads = adversary_objective(model.adversary, scores, batch.labels, batch.sensitive, mode)
        sgd_step(model.adversary, grads, cfg.lr_g)
        if callback:
            callback("g", model)
    if cfg.algorithm is Algorithm.GLOBAL_FAIR:
        return None
    q = forward(model.adversary, adversary_input(scores, batch.labels, mode))[0]
    losses = binary_cross_entropy(q, batch.sensitive)[1]
    if cfg.algorithm is Algorithm.BROAD:
        return broad_weights(losses, batch.sensitive, cfg.tau, cfg.normalization).weights
    for _ in range(cfg.n_r):
        _, grads = ratio_objective(model.ratio_head, batch.features, batch.sensitive, losses, cfg.tau,
                                   cfg.normalization)
        sgd_step(model.ratio_head.head, grads, cfg.lr_r)
        if callback:
            callback("r", model)
    return model.ratio_head.weights(batch.features, batch.sensitive, cfg.normalization).weights


def _record_epoch(model, data, trace, r_means, r_vars, skipped):
    scores = model.predict_proba(data.features)
    trace["loss_y"].append(float(binary_cross_entropy(scores, data.labels)[0]))
    if model.adversary is not None:
        trace["loss_s"].append(float(np.mean(model.adversary_losses(data, scores))))
    trace["train_di"].append(global_di(Predictions.from_scores(scores), data.sensitive)
                             if data.has_both_groups() else None)
    trace["r_mean"].append(float(np.mean(r_means)) if r_means else None)
    trace["r_var"].append(float(np.mean(r_vars)) if r_vars else None)
    trace["skipped_batches"].append(skipped)


def _check_algorithm(cfg: TrainConfig, expected: Algorithm):
    if cfg.algorithm is not expected:
        raise ConfigurationError(f"config is for {cfg.algorithm.value}, not {expected.value}")


def train_biased(data: Dataset, cfg: TrainConfig, callback: Optional[UpdateCallback] = None) -> TrainedModel:
    _check_algorithm(cfg, Algorithm.BIASED)
    return _fit(data, cfg, callback)


def train_global_fair(data: Dataset, cfg: TrainConfig, callback: Optional[UpdateCallback] = None) -> TrainedModel:
    _check_algorithm(cfg, Algorithm.GLOBAL_FAIR)
    return _fit(data, cfg, callback)


def train_road(data: Dataset, cfg: TrainConfig, callback: Optional[UpdateCallback] = None) -> TrainedModel:
    _check_algorithm(cfg, Algorithm.ROAD)
    return _fit(data, cfg, callback)


def train_broad(data: Dataset, cfg: TrainConfig, callback: Optional[UpdateCallback] = None) -> TrainedModel:
    _check_algorithm(cfg, Algorithm.BROAD)
    return _fit(data, cfg, callback)


def train(data: Dataset, cfg: TrainConfig, callback: Optional[UpdateCallback] = None) -> TrainedModel:
    return _fit(data, cfg, callback)


# flat text parameter file

_MAGIC = "roadfair-model 1"


def _write_network(lines: List[str], name: str, net: DenseNetwork):
    lines.append(f"network {name} {len(net.layers)}")
    for spec in net.layers:
        lines.append(f"layer {spec.input_dim} {spec.output_dim} {spec.activation.value}")
    flat = net.flat_parameters()
    lines.append(f"params {flat.size}")
    lines.extend(repr(float(v)) for v in flat)


def save_model(model: TrainedModel, path) -> None:
    import json

    lines = [_MAGIC, "config " + json.dumps(model.config.to_dict(), sort_keys=True),
             "columns " + json.dumps(list(model.column_names))]
    if model.standardizer is not None:
        lines.append("standardizer " + json.dumps(model.standardizer.to_dict()))
    _write_network(lines, "predictor", model.predictor)
    if model.adversary is not None:
        _write_network(lines, "adversary", model.adversary)
    if model.ratio_head is not None:
        _write_network(lines, "ratio_head", model.ratio_head.head)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> TrainedModel:
    import json

    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ConfigurationError(f"{path}: not a model file")
    pos = 1
    meta, nets = {}, {}
    while pos < len(lines):
        head, _, rest = lines[pos].partition(" ")
        pos += 1
        if head in ("config", "columns", "standardizer"):
            meta[head] = json.loads(rest)
            continue
        if head != "network":
            raise ConfigurationError(f"{path}: unexpected line {pos}: {head!r}")
        name, n_layers = rest.split()
        specs = []
        for _ in range(int(n_layers)):
            _, a, b, act = lines[pos].split()
            specs.append(nn.LayerSpec(int(a), int(b), Activation(act)))
            pos += 1
        count = int(lines[pos].split()[1])
        pos += 1
        flat = np.array([float(v) for v in lines[pos : pos + count]])
        pos += count
        weights, biases, k = [], [], 0
        for spec in specs:
            size = spec.input_dim * spec.output_dim
            weights.append(flat[k : k + size].reshape(spec.input_dim, spec.output_dim).copy())
            k += size
            biases.append(flat[k : k + spec.output_dim].copy())
            k += spec.output_dim
        nets[name] = DenseNetwork(specs, weights, biases)
    st = meta.get("standardizer")
    return TrainedModel(
        config=TrainConfig.from_dict(meta["config"]),
        predictor=nets["predictor"],
        adversary=nets.get("adversary"),
        ratio_head=RatioNetwork(nets["ratio_head"]) if "ratio_head" in nets else None,
        column_names=tuple(meta.get("columns", ())),
        standardizer=Standardizer.from_dict(st) if st else None,
    )
