"""Declarative joint-model description, flat parameter layout and forward pass.

A joint model couples two dependent blocks. The first block is ordinal or
multinomial, the second is ordinal. With the ``logit`` backbone the blocks
are an ordered logit / MNL; with ``reslogit`` each block gets its own
residual utility stack and ordinal blocks use a CORAL head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from . import marginals as mg
from ._tensor import as_tensor
from .copulas import CopulaFamily
from .exceptions import DomainError, SchemaError
from .joint import multinomial_ordinal_cells_t, nll_from_cells_t, ordinal_ordinal_cells_t

ORDINAL = "ordinal"
MULTINOMIAL = "multinomial"
LOGIT = "logit"
RESLOGIT = "reslogit"

GAUSSIAN_CLAMP = 1 - 1e-10
FAMILY_LABELS = {
    CopulaFamily.GAUSSIAN: "Gaussian",
    CopulaFamily.CLAYTON: "Clayton",
    CopulaFamily.GUMBEL: "Gumbel",
    CopulaFamily.JOE: "Joe",
    CopulaFamily.AMH: "AMH",
    CopulaFamily.FRANK: "Frank",
    CopulaFamily.FGM: "FGM",
    CopulaFamily.PRODUCT: "Product",
}
SATURATION = 0.999


@dataclass(frozen=True)
class BlockSpec:
    kind: str
    n_categories: int
    features: tuple = ()

    def __post_init__(self):
        if self.kind not in (ORDINAL, MULTINOMIAL):
            raise DomainError(f"block kind must be 'ordinal' or 'multinomial', got {self.kind!r}")
        if int(self.n_categories) < 2:
            raise DomainError("a dependent block needs at least two categories")
        object.__setattr__(self, "n_categories", int(self.n_categories))
        object.__setattr__(self, "features", tuple(int(i) for i in self.features))

    @property
    def n_features(self) -> int:
        return len(self.features)


@dataclass(frozen=True)
class ModelSpec:
    """Structure of a bivariate joint choice model.

    Parameters
    ----------
    first, second : BlockSpec
        The dependent blocks; ``second`` must be ordinal.
    family : CopulaFamily
        Copula coupling the two blocks (``product`` for independence).
    backbone : {"logit", "reslogit"}
        Classic logit marginals or residual-stack marginals.
    depth : int
        Residual layers per block (0 for the logit backbone).
    """

    first: BlockSpec
    second: BlockSpec
    family: CopulaFamily = CopulaFamily.PRODUCT
    backbone: str = LOGIT
    depth: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", CopulaFamily.parse(self.family))
        if self.second.kind != ORDINAL:
            raise DomainError("the second dependent block must be ordinal")
        if self.backbone not in (LOGIT, RESLOGIT):
            raise DomainError(f"backbone must be 'logit' or 'reslogit', got {self.backbone!r}")
        if self.depth < 0:
            raise DomainError("residual depth must be >= 0")
        if self.backbone == LOGIT and self.depth:
            raise DomainError("the logit backbone has no residual layers; use depth=0")

    @property
    def shape(self) -> str:
        return f"{self.first.kind}-{self.second.kind}"

    @property
    def n_thetas(self) -> int:
        if self.family is CopulaFamily.PRODUCT:
            return 0
        return self.first.n_categories if self.first.kind == MULTINOMIAL else 1

    @property
    def label(self) -> str:
        name = FAMILY_LABELS[self.family]
        if self.backbone == RESLOGIT:
            return f"{name}-ResLogit(M={self.depth})"
        return f"{name}-Logit"

    def replace(self, **changes) -> "ModelSpec":
        fields = dict(first=self.first, second=self.second, family=self.family,
                      backbone=self.backbone, depth=self.depth)
        fields.update(changes)
        return ModelSpec(**fields)

    def to_dict(self) -> dict:
        return {
            "first": {"kind": self.first.kind, "n_categories": self.first.n_categories,
                      "features": list(self.first.features)},
            "second": {"kind": self.second.kind, "n_categories": self.second.n_categories,
                       "features": list(self.second.features)},
            "family": self.family.value,
            "backbone": self.backbone,
            "depth": self.depth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(BlockSpec(**d["first"]), BlockSpec(**d["second"]), d["family"],
                   d.get("backbone", LOGIT), int(d.get("depth", 0)))


# ---------------------------------------------------------------------------
# Parameter layout
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParameterLayout:
    """Named slices of the flat parameter vector."""

    entries: tuple

    @property
    def size(self) -> int:
        return sum(math.prod(shape) for _, shape in self.entries)

    def __contains__(self, name):
        return any(n == name for n, _ in self.entries)

    def slices(self):
        start = 0
        for name, shape in self.entries:
            n = math.prod(shape)
            yield name, shape, slice(start, start + n)
            start += n

    def unpack(self, flat) -> dict:
        flat = as_tensor(flat)
        if flat.shape != (self.size,):
            raise SchemaError(f"parameter vector has length {flat.shape}, layout expects {self.size}")
        return {name: flat[sl].reshape(shape) for name, shape, sl in self.slices()}

    def pack(self, named: dict) -> np.ndarray:
        out = np.zeros(self.size)
        for name, shape, sl in self.slices():
            val = np.asarray(named[name].detach() if isinstance(named[name], torch.Tensor) else named[name],
                             dtype=float)
            if val.shape != tuple(shape):
                raise SchemaError(f"{name}: expected shape {tuple(shape)}, got {val.shape}")
            out[sl] = val.reshape(-1)
        return out

    def flat_names(self) -> list:
        names = []
        for name, shape, _ in self.slices():
            for idx in np.ndindex(*shape) if shape else [()]:
                names.append(f"{name}[{','.join(map(str, idx))}]" if idx else name)
        return names

    def to_list(self) -> list:
        return [[name, list(shape)] for name, shape in self.entries]

    @classmethod
    def from_list(cls, items) -> "ParameterLayout":
        return cls(tuple((name, tuple(shape)) for name, shape in items))


def _block_entries(prefix, block: BlockSpec, backbone, depth):
    d, K = block.n_features, block.n_categories
    if block.kind == ORDINAL:
        if backbone == LOGIT:
            return [(f"{prefix}.coef", (d,)), (f"{prefix}.thresholds", (K - 1,))]
        return [(f"{prefix}.coef", (d,)), (f"{prefix}.residual", (depth, d, d)),
                (f"{prefix}.coral_weight", (d,)), (f"{prefix}.coral_bias", (K - 1,))]
    entries = [(f"{prefix}.asc", (K - 1,)), (f"{prefix}.coef", (K - 1, d))]
    if backbone == RESLOGIT:
        entries.append((f"{prefix}.residual", (depth, K, K)))
    return entries


def build_layout(spec: ModelSpec) -> ParameterLayout:
    entries = _block_entries("a", spec.first, spec.backbone, spec.depth)
    entries += _block_entries("b", spec.second, spec.backbone, spec.depth)
    if spec.n_thetas:
        entries.append(("copula.eta", (spec.n_thetas,)))
    return ParameterLayout(tuple(entries))


# ---------------------------------------------------------------------------
# Copula parameter transform
# ---------------------------------------------------------------------------


def theta_from_eta_t(family: CopulaFamily, eta):
    if family is CopulaFamily.PRODUCT:
        return None
    if family is CopulaFamily.GAUSSIAN:
        return torch.clamp(torch.tanh(eta), -GAUSSIAN_CLAMP, GAUSSIAN_CLAMP)
    if family in (CopulaFamily.AMH, CopulaFamily.FGM):
        return torch.tanh(eta)
    if family is CopulaFamily.FRANK:
        return eta
    if family in (CopulaFamily.GUMBEL, CopulaFamily.JOE):
        return 1 + mg.softplus(eta)
    if family is CopulaFamily.CLAYTON:
        return mg.softplus(eta)
    raise AssertionError(family)


def theta_from_eta(family, eta):
    """Map an unconstrained value onto the family's legal parameter domain."""
    family = CopulaFamily.parse(family)
    if family is CopulaFamily.PRODUCT:
        return None
    out = theta_from_eta_t(family, as_tensor(eta)).numpy()
    return out.item() if out.ndim == 0 else out


def eta_from_theta(family, theta) -> float:
    """Inverse of :func:`theta_from_eta` (for warm starts and simulation truths)."""
    family = CopulaFamily.parse(family)
    t = float(theta)
    if family is CopulaFamily.FRANK:
        return t
    if family is CopulaFamily.GAUSSIAN:
        return math.atanh(max(min(t, GAUSSIAN_CLAMP), -GAUSSIAN_CLAMP))
    if family in (CopulaFamily.AMH, CopulaFamily.FGM):
        return math.atanh(max(min(t, 1 - 1e-12), -1 + 1e-12))
    if family in (CopulaFamily.GUMBEL, CopulaFamily.JOE):
        t -= 1.0
    elif family is not CopulaFamily.CLAYTON:
        raise DomainError(f"{family.value} has no parameter")
    if t <= 0:
        raise DomainError(f"theta {theta} is outside the range reachable by the {family.value} transform")
    return t + math.log(-math.expm1(-t))


def boundary_flags(family, theta) -> list:
    """Diagnostics for parameters pushed to the edge of a bounded domain."""
    family = CopulaFamily.parse(family)
    if family not in (CopulaFamily.GAUSSIAN, CopulaFamily.AMH, CopulaFamily.FGM) or theta is None:
        return []
    return [f"theta[{i}] saturated at {t:+.4f} (outside range)"
            for i, t in enumerate(np.atleast_1d(theta)) if abs(t) > SATURATION]


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------


def _block_forward(prefix, block, spec, p, x):
    if block.kind == ORDINAL:
        coef = p[f"{prefix}.coef"]
        if spec.backbone == LOGIT:
            return mg.ordered_logit_cumulative_t(x @ coef, p[f"{prefix}.thresholds"])
        rep = mg.residual_forward_t(p[f"{prefix}.residual"], x * coef)
        probs = mg.coral_binary_probs_t(p[f"{prefix}.coral_weight"], p[f"{prefix}.coral_bias"], rep)
        return mg.coral_cumulative_t(probs)
    weights = p.get(f"{prefix}.residual")
    v = mg.mnl_utilities_t(p[f"{prefix}.asc"], p[f"{prefix}.coef"], x, weights)
    return torch.softmax(v, dim=-1)


def marginal_outputs(spec: ModelSpec, layout: ParameterLayout, flat, X):
    """First block: cumulative points or mode probabilities; second: cumulative points."""
    p = layout.unpack(flat)
    X = as_tensor(X)
    first = _block_forward("a", spec.first, spec, p, X[:, list(spec.first.features)])
    second = _block_forward("b", spec.second, spec, p, X[:, list(spec.second.features)])
    return first, second, p


def cells_t(spec: ModelSpec, layout: ParameterLayout, flat, X):
    """(n, K_a, K_b) joint cell probabilities."""
    first, second, p = marginal_outputs(spec, layout, flat, X)
    theta = theta_from_eta_t(spec.family, p["copula.eta"]) if spec.n_thetas else None
    if spec.first.kind == ORDINAL:
        return ordinal_ordinal_cells_t(spec.family, theta, first, second)
    return multinomial_ordinal_cells_t(spec.family, theta, first, second)


def nll_t(spec, layout, flat, X, y_a, y_b):
    return nll_from_cells_t(cells_t(spec, layout, flat, X), y_a, y_b)


def joint_nll(spec: ModelSpec, params, data) -> float:
    """Mean negative log-likelihood of ``data`` under ``params``."""
    if data.n_obs == 0:
        raise DomainError("cannot evaluate the likelihood of an empty dataset")
    layout = build_layout(spec)
    with torch.no_grad():
        return nll_t(spec, layout, as_tensor(params), data.X,
                     torch.as_tensor(data.y_a), torch.as_tensor(data.y_b)).item()


def joint_cells(spec: ModelSpec, params, X) -> np.ndarray:
    layout = build_layout(spec)
    with torch.no_grad():
        return cells_t(spec, layout, as_tensor(params), X).numpy()


def fitted_thetas(spec: ModelSpec, params):
    if not spec.n_thetas:
        return None
    eta = build_layout(spec).unpack(params)["copula.eta"]
    return np.atleast_1d(theta_from_eta(spec.family, eta.numpy()))


# ---------------------------------------------------------------------------
# Initialisation
# ---------------------------------------------------------------------------

_ETA0 = {
    CopulaFamily.GUMBEL: -3.0,
    CopulaFamily.JOE: -3.0,
    CopulaFamily.CLAYTON: -3.0,
}


def _smoothed_freq(y, K):
    counts = np.bincount(np.asarray(y, dtype=int), minlength=K).astype(float) + 0.5
    return counts / counts.sum()


def _logit(p):
    return np.log(p) - np.log1p(-p)


def initial_params(spec: ModelSpec, y_a, y_b) -> np.ndarray:
    """Start at the intercept-only fit with identity-like residual stacks.

    Residual matrices start at zero, so the stack only shifts utilities by
    ``-M ln 2``. Ordinal residual blocks start with unit feature scales and a
    zero CORAL weight: the start stays intercept-only without sitting at the
    saddle where both factors of ``weight * coef`` vanish.
    """
    layout = build_layout(spec)
    named = {name: np.zeros(shape) for name, shape in layout.entries}
    for prefix, block, y in (("a", spec.first, y_a), ("b", spec.second, y_b)):
        freq = _smoothed_freq(y, block.n_categories)
        if block.kind == MULTINOMIAL:
            named[f"{prefix}.asc"] = np.log(freq[1:] / freq[0])
            continue
        cum = np.cumsum(freq)[:-1]
        if spec.backbone == LOGIT:
            named[f"{prefix}.thresholds"] = mg.raw_from_thresholds(_logit(cum))
        else:
            # the representation starts as the raw features and the head ignores it
            named[f"{prefix}.coef"] = np.ones(block.n_features)
            named[f"{prefix}.coral_bias"] = mg.raw_from_coral_biases(_logit(1 - cum))
    if spec.n_thetas:
        named["copula.eta"] = np.full(spec.n_thetas, _ETA0.get(spec.family, 0.0))
    return layout.pack(named)
