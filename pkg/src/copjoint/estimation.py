"""Fitting: gradients, RMSprop mini-batch training with early stopping, random search."""

from __future__ import annotations

import contextlib
import itertools
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import torch

from ._tensor import as_tensor
from .data import Dataset, split
from .exceptions import DomainError, NumericalError, SchemaError, TrainingError
from .model import (
    MULTINOMIAL,
    RESLOGIT,
    ModelSpec,
    ParameterLayout,
    build_layout,
    cells_t,
    fitted_thetas,
    initial_params,
    nll_t,
    theta_from_eta,
)

__all__ = [
    "TrainConfig",
    "FittedModel",
    "SearchResult",
    "gradient",
    "rmsprop_step",
    "theta_from_eta",
    "train",
    "random_search",
    "check_compatible",
]

log = logging.getLogger(__name__)

RMS_DECAY = 0.9
RMS_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 1e-3
    max_epochs: int = 200
    patience: int = 10
    min_delta: float = 1e-6
    depth: int = 16
    seed: int = 0
    split_ratio: float = 0.7
    deterministic: bool = True

    def __post_init__(self):
        if int(self.batch_size) < 1:
            raise DomainError("batch_size must be >= 1")
        if not 0 < self.split_ratio < 1:
            raise DomainError("split_ratio must lie strictly between 0 and 1")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise DomainError("learning_rate must be positive and finite")
        if int(self.max_epochs) < 1 or int(self.patience) < 1:
            raise DomainError("max_epochs and patience must be >= 1")
        if int(self.depth) < 0:
            raise DomainError("depth must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def gradient(loss_fn, params, names=None) -> np.ndarray:
    """Reverse-mode gradient of a scalar ``loss_fn(params_tensor)``.

    Raises :class:`NumericalError` naming the first non-finite component.
    """
    p = as_tensor(np.asarray(params, dtype=float)).clone().requires_grad_(True)
    loss = loss_fn(p)
    if not torch.isfinite(loss):
        raise NumericalError(f"loss is not finite ({loss.item()})")
    (g,) = torch.autograd.grad(loss, p, allow_unused=True)
    if g is None:
        g = torch.zeros_like(p)
    bad = torch.nonzero(~torch.isfinite(g)).reshape(-1)
    if len(bad):
        i = int(bad[0])
        label = names[i] if names is not None else f"params[{i}]"
        raise NumericalError(f"non-finite gradient for {label}")
    return g.detach().numpy()


def rmsprop_step(params, grad, state, lr):
    """One RMSprop update: ``s <- 0.9 s + 0.1 g^2``; ``p <- p - lr g / sqrt(s + 1e-8)``.

    Works on numpy arrays or tensors; returns ``(new_params, new_state)``.
    """
    if np.shape(params) != np.shape(grad) or np.shape(grad) != np.shape(state):
        raise DomainError("params, grad and state must share a shape")
    state = RMS_DECAY * state + (1 - RMS_DECAY) * grad * grad
    root = torch.sqrt(state + RMS_EPS) if isinstance(state, torch.Tensor) else np.sqrt(state + RMS_EPS)
    return params - lr * grad / root, state


@dataclass
class FittedModel:
    """Result of :func:`train`; ``params`` are the best-validation parameters."""

    spec: ModelSpec
    params: np.ndarray
    config: TrainConfig
    train_trace: list = field(default_factory=list)
    valid_trace: list = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0
    initial_valid_nll: float = float("nan")

    @property
    def layout(self) -> ParameterLayout:
        return build_layout(self.spec)

    @property
    def n_params(self) -> int:
        return self.layout.size

    @property
    def best_valid_nll(self) -> float:
        if self.best_epoch == 0:
            return self.initial_valid_nll
        return self.valid_trace[self.best_epoch - 1]

    @property
    def thetas(self):
        return fitted_thetas(self.spec, self.params)

    def named_params(self) -> dict:
        return {k: v.numpy() for k, v in self.layout.unpack(self.params).items()}

    def cells(self, X) -> np.ndarray:
        with torch.no_grad():
            return cells_t(self.spec, self.layout, as_tensor(self.params), X).numpy()

    def nll(self, data: Dataset) -> float:
        """Mean negative log-likelihood on ``data``."""
        return _mean_nll(self.spec, self.layout, as_tensor(self.params), data)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "layout": self.layout.to_list(),
            "params": [float(x) for x in self.params],
            "config": self.config.to_dict(),
            "train_trace": [float(x) for x in self.train_trace],
            "valid_trace": [float(x) for x in self.valid_trace],
            "best_epoch": self.best_epoch,
            "epochs_run": self.epochs_run,
            "initial_valid_nll": float(self.initial_valid_nll),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        try:
            spec = ModelSpec.from_dict(d["spec"])
            params = np.asarray(d["params"], dtype=float)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed parameter file: {exc}") from None
        layout = build_layout(spec)
        if "layout" in d and ParameterLayout.from_list(d["layout"]) != layout:
            raise SchemaError("parameter layout in file does not match the model spec")
        if params.shape != (layout.size,):
            raise SchemaError(f"parameter file holds {params.size} values, layout expects {layout.size}")
        return cls(
            spec=spec,
            params=params,
            config=TrainConfig(**d.get("config", {})),
            train_trace=list(d.get("train_trace", [])),
            valid_trace=list(d.get("valid_trace", [])),
            best_epoch=int(d.get("best_epoch", 0)),
            epochs_run=int(d.get("epochs_run", 0)),
            initial_valid_nll=float(d.get("initial_valid_nll", float("nan"))),
        )


def check_compatible(spec: ModelSpec, data: Dataset) -> None:
    """Raise :class:`SchemaError` if ``spec`` cannot be evaluated on ``data``."""
    d = data.X.shape[1]
    for name, block, K in (("first", spec.first, data.n_categories[0]), ("second", spec.second, data.n_categories[1])):
        if any(j < 0 or j >= d for j in block.features):
            raise SchemaError(f"{name} block references feature columns outside 0..{d - 1}")
        if block.n_categories != K:
            raise SchemaError(f"{name} block declares {block.n_categories} categories, data has {K}")
        if spec.backbone == RESLOGIT and block.kind != MULTINOMIAL and not block.features:
            raise SchemaError(f"{name} ordinal block needs at least one feature for the residual backbone")


def _tensors(data: Dataset):
    return as_tensor(data.X), torch.as_tensor(data.y_a), torch.as_tensor(data.y_b)


def _mean_nll(spec, layout, p, data) -> float:
    X, ya, yb = _tensors(data)
    with torch.no_grad():
        return nll_t(spec, layout, p, X, ya, yb).item()


@contextlib.contextmanager
def _deterministic(flag: bool):
    previous = torch.are_deterministic_algorithms_enabled()
    torch.use_deterministic_algorithms(bool(flag) or previous)
    try:
        yield
    finally:
        torch.use_deterministic_algorithms(previous)


def train(spec: ModelSpec, data: Dataset, cfg: TrainConfig = TrainConfig(), *, validation: Dataset | None = None,
          init=None) -> FittedModel:
    """Fit ``spec`` by RMSprop mini-batch SGD on the mean joint NLL.

    Without an explicit ``validation`` set the data are split with
    ``cfg.split_ratio`` (stratified by joint cell, seeded by ``cfg.seed``).
    After every epoch the validation NLL is evaluated; training stops once it
    has not improved by more than ``cfg.min_delta`` for ``cfg.patience``
    epochs. The returned parameters are those with the lowest validation NLL
    seen, including the starting point.
    """
    if data.n_obs == 0:
        raise DomainError("cannot train on an empty dataset")
    check_compatible(spec, data)
    if validation is None:
        train_d, valid_d = split(data, cfg.split_ratio, cfg.seed)
    else:
        train_d, valid_d = data, validation
    if valid_d.n_obs == 0:
        raise DomainError("validation split is empty")
    layout = build_layout(spec)
    start = initial_params(spec, train_d.y_a, train_d.y_b) if init is None else np.asarray(init, dtype=float)
    if start.shape != (layout.size,):
        raise SchemaError(f"initial parameters have length {start.size}, layout expects {layout.size}")

    rng = np.random.default_rng(cfg.seed)
    X, ya, yb = _tensors(train_d)
    p = as_tensor(start).clone()
    state = torch.zeros_like(p)
    names = layout.flat_names()

    with _deterministic(cfg.deterministic):
        best_val = _mean_nll(spec, layout, p, valid_d)
        if not math.isfinite(best_val):
            raise TrainingError("validation NLL is not finite at the starting point", start, 0)
        fitted = FittedModel(spec, start.copy(), cfg, initial_valid_nll=best_val)
        anchor = best_val
        wait = 0
        n = train_d.n_obs
        bs = min(int(cfg.batch_size), n)
        for epoch in range(1, int(cfg.max_epochs) + 1):
            order = torch.as_tensor(rng.permutation(n))
            for lo in range(0, n, bs):
                idx = order[lo:lo + bs]
                last = p.detach().clone()
                try:
                    g = gradient(lambda q: nll_t(spec, layout, q, X[idx], ya[idx], yb[idx]), p.numpy(), names)
                except NumericalError as exc:
                    raise TrainingError(f"training diverged in epoch {epoch}: {exc}", last.numpy(), epoch) from exc
                p, state = rmsprop_step(p, as_tensor(g), state, cfg.learning_rate)
                if not torch.isfinite(p).all():
                    raise TrainingError(f"parameters became non-finite in epoch {epoch}", last.numpy(), epoch)
            try:
                tr = _mean_nll(spec, layout, p, train_d)
                va = _mean_nll(spec, layout, p, valid_d)
            except NumericalError as exc:
                raise TrainingError(f"training diverged in epoch {epoch}: {exc}", p.numpy(), epoch) from exc
            if not (math.isfinite(tr) and math.isfinite(va)):
                raise TrainingError(f"NLL became non-finite in epoch {epoch}", fitted.params, epoch)
            fitted.train_trace.append(tr)
            fitted.valid_trace.append(va)
            fitted.epochs_run = epoch
            if va < best_val:
                best_val = va
                fitted.params = p.numpy().copy()
                fitted.best_epoch = epoch
            if va < anchor - cfg.min_delta:
                anchor = va
                wait = 0
            else:
                wait += 1
                if wait >= cfg.patience:
                    log.debug("early stop after epoch %d (best %d)", epoch, fitted.best_epoch)
                    break
    return fitted


@dataclass
class SearchResult:
    config: TrainConfig
    model: FittedModel
    trials: list


def random_search(spec: ModelSpec, data: Dataset, space: dict, budget: int, seed: int = 0,
                  base: TrainConfig = TrainConfig()) -> SearchResult:
    """Random search over ``space`` (keys ``depth``, ``learning_rate``, ``batch_size``).

    Draws ``budget`` distinct combinations (all of them if fewer exist). Each
    trial trains on the same split; failed trials are recorded and skipped.
    ``depth`` only applies to the residual backbone.
    """
    if budget < 1:
        raise DomainError("budget must be >= 1")
    keys = [k for k in ("depth", "learning_rate", "batch_size") if k in space]
    unknown = set(space) - set(keys)
    if unknown:
        raise DomainError(f"unknown search dimension(s): {sorted(unknown)}")
    if any(len(space[k]) == 0 for k in keys):
        raise DomainError("every search dimension needs at least one candidate")
    grid = list(itertools.product(*(space[k] for k in keys)))
    rng = np.random.default_rng(seed)
    picks = rng.permutation(len(grid))[:budget]

    train_d, valid_d = split(data, base.split_ratio, base.seed)
    trials, best = [], None
    for i in picks:
        values = dict(zip(keys, grid[int(i)]))
        cfg = replace(base, **values)
        trial_spec = spec
        if "depth" in values and spec.backbone == RESLOGIT:
            trial_spec = spec.replace(depth=int(values["depth"]))
        try:
            model = train(trial_spec, train_d, cfg, validation=valid_d)
        except (TrainingError, NumericalError) as exc:
            trials.append({**values, "valid_nll": None, "error": str(exc)})
            continue
        trials.append({**values, "valid_nll": model.best_valid_nll, "error": None})
        if best is None or model.best_valid_nll < best[1].best_valid_nll:
            best = (cfg, model)
    if best is None:
        raise TrainingError("every random-search trial failed")
    return SearchResult(best[0], best[1], trials)
