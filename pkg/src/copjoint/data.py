"""Datasets: CSV ingestion, Jenks discretisation, stratified splits, simulation."""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from . import marginals as mg
from ._tensor import as_tensor
from .copulas import CopulaFamily, CopulaSpec, sample
from .exceptions import DomainError, SchemaError
from .joint import multinomial_ordinal_cells_t
from .model import LOGIT, MULTINOMIAL, ORDINAL, ModelSpec, build_layout

_MISSING = {"", "na", "nan", "null", "none"}


@dataclass
class Dataset:
    """Feature matrix plus two outcome columns of 0-based category indices."""

    X: np.ndarray
    y_a: np.ndarray
    y_b: np.ndarray
    feature_names: list
    n_categories: tuple
    outcome_names: tuple = ("y_a", "y_b")
    label_maps: dict = field(default_factory=dict)
    rejected: list = field(default_factory=list)
    latent: np.ndarray | None = None
    indices: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.y_a), -1)
        self.y_a = np.asarray(self.y_a, dtype=np.int64)
        self.y_b = np.asarray(self.y_b, dtype=np.int64)
        self.n_categories = tuple(int(k) for k in self.n_categories)
        if self.indices is None:
            self.indices = np.arange(len(self.y_a))
        for y, K, name in ((self.y_a, self.n_categories[0], "y_a"), (self.y_b, self.n_categories[1], "y_b")):
            if len(y) and (y.min() < 0 or y.max() >= K):
                raise DomainError(f"{name} has category indices outside [0, {K})")
        if not np.all(np.isfinite(self.X)):
            raise SchemaError("feature matrix contains missing or non-finite values")

    @property
    def n_obs(self) -> int:
        return len(self.y_a)

    @property
    def strata(self) -> np.ndarray:
        """Joint outcome cell index of every row."""
        return self.y_a * self.n_categories[1] + self.y_b

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(
            self,
            X=self.X[idx],
            y_a=self.y_a[idx],
            y_b=self.y_b[idx],
            latent=None if self.latent is None else self.latent[idx],
            indices=self.indices[idx],
            rejected=[],
        )

    def feature_index(self, names) -> tuple:
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise SchemaError(f"unknown feature column(s): {', '.join(missing)}")
        return tuple(self.feature_names.index(n) for n in names)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*self.feature_names, *self.outcome_names])
            for row, a, b in zip(self.X, self.y_a, self.y_b):
                w.writerow([*(repr(float(x)) for x in row), int(a), int(b)])


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def _label_order(labels, levels, column):
    if levels is not None:
        levels = [str(x) for x in levels]
        unknown = sorted(set(labels) - set(levels))
        if unknown:
            raise SchemaError(f"column {column!r}: labels {unknown} not among declared levels {levels}")
        return levels
    uniq = sorted(set(labels))
    try:
        return sorted(uniq, key=float)
    except ValueError:
        return uniq


def load_csv(path, features, outcome_a, outcome_b, binary=(), levels_a=None, levels_b=None) -> Dataset:
    """Read a comma-separated file with a header row into a :class:`Dataset`.

    Rows with a missing value in any used column are dropped and recorded in
    ``Dataset.rejected`` as ``(line, column)`` pairs. Unparseable numbers and
    indicator values outside {0, 1} raise :class:`SchemaError` naming the
    line and column.
    """
    features = list(features)
    binary = set(binary)
    if not binary <= set(features):
        raise SchemaError(f"binary columns {sorted(binary - set(features))} are not feature columns")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise SchemaError(f"{path}: empty file (no header row)")
        header = [h.strip() for h in header]
        reader.fieldnames = header
        for col in [*features, outcome_a, outcome_b]:
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        rows, labels_a, labels_b, rejected = [], [], [], []
        for line, rec in enumerate(reader, start=2):
            used = [*features, outcome_a, outcome_b]
            gaps = [c for c in used if (rec.get(c) or "").strip().lower() in _MISSING]
            if gaps:
                rejected.append((line, gaps[0]))
                continue
            vals = []
            for c in features:
                raw = rec[c].strip()
                try:
                    x = float(raw)
                except ValueError:
                    raise SchemaError(f"{path}: line {line}, column {c!r}: cannot parse {raw!r}") from None
                if c in binary and x not in (0.0, 1.0):
                    raise SchemaError(f"{path}: line {line}, column {c!r}: indicator must be 0 or 1, got {raw!r}")
                vals.append(x)
            rows.append(vals)
            labels_a.append(rec[outcome_a].strip())
            labels_b.append(rec[outcome_b].strip())
    if not rows:
        raise SchemaError(f"{path}: no usable data rows")
    order_a = _label_order(labels_a, levels_a, outcome_a)
    order_b = _label_order(labels_b, levels_b, outcome_b)
    map_a = {lab: i for i, lab in enumerate(order_a)}
    map_b = {lab: i for i, lab in enumerate(order_b)}
    return Dataset(
        X=np.array(rows, dtype=float).reshape(len(rows), len(features)),
        y_a=[map_a[x] for x in labels_a],
        y_b=[map_b[x] for x in labels_b],
        feature_names=features,
        n_categories=(len(order_a), len(order_b)),
        outcome_names=(outcome_a, outcome_b),
        label_maps={outcome_a: order_a, outcome_b: order_b},
        rejected=rejected,
    )


# ---------------------------------------------------------------------------
# Jenks natural breaks
# ---------------------------------------------------------------------------


def jenks_breaks(values, k: int) -> list:
    """Exact Jenks natural breaks (optimal 1-D partition by within-class SSD).

    Classes are contiguous runs of sorted distinct values, so equal values
    never straddle a break. Returns the ``k-1`` thresholds, each the largest
    value of its lower class; a value ``x`` belongs to class
    ``searchsorted(thresholds, x, side="left")``.

    Runs in O(k m^2) for m distinct values.
    """
    k = int(k)
    if k < 2:
        raise DomainError("need at least two classes")
    vals = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(vals)):
        raise DomainError("values must be finite")
    uniq, counts = np.unique(vals, return_counts=True)
    m = len(uniq)
    if m < k:
        raise DomainError(f"{m} distinct value(s) cannot form {k} classes")
    w = np.concatenate([[0.0], np.cumsum(counts)])
    s1 = np.concatenate([[0.0], np.cumsum(counts * uniq)])
    s2 = np.concatenate([[0.0], np.cumsum(counts * uniq * uniq)])

    def ssd(i, j):  # classes over distinct values [i, j)
        n = w[j] - w[i]
        s = s1[j] - s1[i]
        return np.maximum((s2[j] - s2[i]) - s * s / n, 0.0)

    # cost[c, j]: best SSD of the first j distinct values in c+1 classes
    cost = np.full((k, m + 1), np.inf)
    back = np.zeros((k, m + 1), dtype=np.int64)
    cost[0, 1:] = ssd(np.zeros(m, dtype=np.int64), np.arange(1, m + 1))
    for c in range(1, k):
        for j in range(c + 1, m + 1):
            i = np.arange(c, j)
            cand = cost[c - 1, i] + ssd(i, np.full_like(i, j))
            best = int(np.argmin(cand))
            cost[c, j] = cand[best]
            back[c, j] = i[best]
    cuts = []
    j = m
    for c in range(k - 1, 0, -1):
        j = back[c, j]
        cuts.append(j)
    return [float(uniq[j - 1]) for j in reversed(cuts)]


def jenks_classify(values, thresholds) -> np.ndarray:
    return np.searchsorted(np.asarray(thresholds, dtype=float), np.asarray(values, dtype=float), side="left")


def within_class_ssd(values, thresholds) -> float:
    vals = np.asarray(values, dtype=float)
    cls = jenks_classify(vals, thresholds)
    return float(sum(((vals[cls == c] - vals[cls == c].mean()) ** 2).sum() for c in np.unique(cls)))


def jenks_brute_force(values, k: int) -> list:
    """Exhaustive search over all break placements (small inputs only)."""
    uniq = np.unique(np.asarray(values, dtype=float))
    if len(uniq) < k:
        raise DomainError(f"{len(uniq)} distinct value(s) cannot form {k} classes")
    vals = np.asarray(values, dtype=float)
    best, best_cut = math.inf, None
    for cut in itertools.combinations(range(1, len(uniq)), k - 1):
        thr = [uniq[j - 1] for j in cut]
        score = within_class_ssd(vals, thr)
        if score < best:
            best, best_cut = score, thr
    return [float(t) for t in best_cut]


# ---------------------------------------------------------------------------
# Stratified split
# ---------------------------------------------------------------------------


def split_indices(strata, ratio: float, seed) -> tuple:
    """Stratified train/validation indices.

    Each stratum sends ``floor`` or ``ceil`` of ``ratio * n_s`` rows to
    training, rounding up by largest remainder until the overall share is
    met. Strata with at least two rows keep one row on each side; singleton
    strata go to training with a warning.
    """
    if not 0 < ratio < 1:
        raise DomainError("split ratio must lie strictly between 0 and 1")
    strata = np.asarray(strata)
    rng = np.random.default_rng(seed)
    groups = [rng.permutation(np.flatnonzero(strata == s)) for s in np.unique(strata)]
    sizes = np.array([len(g) for g in groups])
    want = ratio * sizes
    cap = np.maximum(sizes - 1, 1)
    base = np.clip(np.floor(want).astype(int), 1, cap)
    top = np.clip(np.ceil(want).astype(int), 1, cap)
    frac = want - np.floor(want)
    target = int(round(ratio * len(strata)))
    # round up the largest remainders until the overall share is met
    for g in np.argsort(-frac, kind="stable"):
        if base.sum() >= target:
            break
        base[g] = top[g]
    singles = int(np.sum(sizes == 1))
    if singles:
        warnings.warn(f"{singles} joint cell(s) hold a single observation; assigned to training", stacklevel=2)
    train = np.concatenate([g[:b] for g, b in zip(groups, base)]) if groups else np.array([], int)
    valid = np.concatenate([g[b:] for g, b in zip(groups, base)]) if groups else np.array([], int)
    return np.sort(train), np.sort(valid)


def split(data: Dataset, ratio: float = 0.7, seed=0) -> tuple:
    """Stratified (by joint outcome cell) train/validation split."""
    train, valid = split_indices(data.strata, ratio, seed)
    return data.subset(train), data.subset(valid)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Confounder:
    """A nonlinear function of observed features shifting both latent indices.

    ``kind`` is ``square`` (x^2 - 1), ``abs`` (|x| - sqrt(2/pi)) or
    ``product`` (x_i * x_j); each has mean zero for standard normal inputs.
    The fitted model sees the features but not this transformation.
    """

    kind: str
    features: tuple
    loadings: tuple

    def values(self, X):
        x = X[:, self.features[0]]
        if self.kind == "square":
            return x * x - 1.0
        if self.kind == "abs":
            return np.abs(x) - math.sqrt(2.0 / math.pi)
        if self.kind == "product":
            return x * X[:, self.features[1]]
        raise DomainError(f"unknown confounder kind {self.kind!r}")


@dataclass(frozen=True)
class SyntheticTruth:
    """Ground truth for simulation.

    ``params`` maps layout names of the logit-backbone ``spec`` (without the
    copula entry) to arrays; ``copula`` holds the true dependence, with one
    theta per mode for multinomial-ordinal truths (``thetas``).
    """

    spec: ModelSpec
    params: dict
    copula: CopulaSpec
    n_features: int
    binary: tuple = ()
    thetas: tuple | None = None
    confounder: Confounder | None = None
    seed: int = 0

    def __post_init__(self):
        if self.spec.backbone != LOGIT:
            raise DomainError("simulation truths use the logit backbone")
        if self.spec.family is not self.copula.family:
            raise DomainError("truth spec family and copula family differ")
        layout = build_layout(self.spec)
        for name, shape in layout.entries:
            if name == "copula.eta":
                continue
            if name not in self.params:
                raise SchemaError(f"truth is missing parameter {name!r}")
            if np.shape(self.params[name]) != tuple(shape):
                raise SchemaError(f"truth parameter {name!r} must have shape {tuple(shape)}")
        if self.spec.first.kind == MULTINOMIAL and self.copula.family is not CopulaFamily.PRODUCT:
            if self.thetas is None or len(self.thetas) != self.spec.first.n_categories:
                raise SchemaError("multinomial-ordinal truths need one theta per mode")
            for t in self.thetas:
                CopulaSpec(self.copula.family, t)

    def flat_params(self) -> np.ndarray:
        """The truth as a flat vector in the spec's layout."""
        from .model import eta_from_theta

        layout = build_layout(self.spec)
        named = {k: np.asarray(v, dtype=float) for k, v in self.params.items()}
        if self.spec.n_thetas:
            thetas = self.thetas if self.spec.first.kind == MULTINOMIAL else (self.copula.theta,)
            named["copula.eta"] = np.array([eta_from_theta(self.copula.family, t) for t in thetas])
        return layout.pack(named)


def generate_features(n_obs: int, n_features: int, binary, rng) -> np.ndarray:
    """Independent standard normals; ``binary`` columns are fair 0/1 draws."""
    X = rng.standard_normal((n_obs, n_features))
    for j in binary:
        X[:, j] = rng.integers(0, 2, size=n_obs)
    return X


def _block_marginal(prefix, block, params, x, shift):
    if block.kind == ORDINAL:
        index = x @ params[f"{prefix}.coef"] + shift
        return mg.ordered_logit_cumulative_t(index, params[f"{prefix}.thresholds"])
    v = mg.mnl_utilities_t(params[f"{prefix}.asc"], params[f"{prefix}.coef"], x)
    v = v + torch.cat([torch.zeros_like(shift)[:, None], shift[:, None].expand(-1, v.shape[1] - 1)], dim=1)
    return torch.softmax(v, dim=-1)


def simulate(truth: SyntheticTruth, n_obs: int, seed=None) -> Dataset:
    """Draw a dataset from the truth's data-generating process.

    Ordinal-ordinal: latent (u, v) pairs come from the copula and are cut at
    the marginal cumulative points. Multinomial-ordinal: each joint cell is
    drawn directly from the model's cell matrix.
    """
    if n_obs < 1:
        raise DomainError("n_obs must be >= 1")
    rng = np.random.default_rng(truth.seed if seed is None else seed)
    spec = truth.spec
    X = generate_features(n_obs, truth.n_features, truth.binary, rng)
    params = {k: as_tensor(v) for k, v in truth.params.items()}
    c = truth.confounder.values(X) if truth.confounder else np.zeros(n_obs)
    la, lb = truth.confounder.loadings if truth.confounder else (0.0, 0.0)
    Xt = as_tensor(X)
    with torch.no_grad():
        first = _block_marginal("a", spec.first, params, Xt[:, list(spec.first.features)], as_tensor(la * c))
        second = _block_marginal("b", spec.second, params, Xt[:, list(spec.second.features)], as_tensor(lb * c))
    latent = None
    if spec.first.kind == ORDINAL:
        latent = sample(truth.copula, n_obs, rng)
        y_a = np.sum(latent[:, :1] > first.numpy()[:, 1:-1], axis=1)
        y_b = np.sum(latent[:, 1:] > second.numpy()[:, 1:-1], axis=1)
    else:
        thetas = None if truth.copula.family is CopulaFamily.PRODUCT else as_tensor(truth.thetas)
        with torch.no_grad():
            cells = multinomial_ordinal_cells_t(truth.copula.family, thetas, first, second).numpy()
        R = spec.second.n_categories
        flat = np.cumsum(cells.reshape(n_obs, -1), axis=1)
        draw = rng.uniform(size=n_obs)[:, None]
        idx = np.minimum(np.sum(draw > flat, axis=1), flat.shape[1] - 1)
        y_a, y_b = idx // R, idx % R
    return Dataset(
        X=X,
        y_a=y_a,
        y_b=y_b,
        feature_names=[f"x{j}" for j in range(truth.n_features)],
        n_categories=(spec.first.n_categories, spec.second.n_categories),
        latent=latent,
    )
