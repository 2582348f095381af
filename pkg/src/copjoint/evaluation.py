"""Model-selection metrics and comparison tables."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import DomainError
from .model import boundary_flags

TIE_TOL = 1e-9


def aic(total_loglik: float, n_params: int) -> float:
    """Akaike information criterion, ``-2 LL + 2 B`` with the signed log-likelihood."""
    if n_params < 0:
        raise DomainError("parameter count must be >= 0")
    return -2.0 * float(total_loglik) + 2.0 * int(n_params)


def joint_argmax(cells) -> tuple:
    """Predicted joint cell per observation.

    ``cells`` has shape (n, K_a, K_b). Ties go to the lowest row-major index.
    Returns ``(pred_a, pred_b, n_ties)``.
    """
    cells = np.asarray(cells, dtype=float)
    n, _, kb = cells.shape
    flat = cells.reshape(n, -1)
    idx = np.argmax(flat, axis=1)
    top = flat[np.arange(n), idx]
    ties = int(np.sum(np.sum(flat == top[:, None], axis=1) > 1))
    return idx // kb, idx % kb, ties


def mpe_from_cells(cells, y_a, y_b) -> float:
    """Share of observations whose argmax joint cell differs from the observed one."""
    y_a, y_b = np.asarray(y_a), np.asarray(y_b)
    if len(y_a) == 0:
        raise DomainError("MPE of an empty dataset is undefined")
    pa, pb, _ = joint_argmax(cells)
    return float(np.mean((pa != y_a) | (pb != y_b)))


def mpe(model, data) -> float:
    """Misclassification rate of the joint-cell argmax prediction."""
    return mpe_from_cells(model.cells(data.X), data.y_a, data.y_b)


@dataclass
class FitReport:
    label: str
    family: str
    total_loglik: float
    n_params: int
    aic: float
    mpe: float
    n_obs: int
    theta: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    ties: int = 0
    standard_errors: str = "unavailable"

    def __post_init__(self):
        if abs(self.aic - aic(self.total_loglik, self.n_params)) > 1e-9 * max(1.0, abs(self.aic)):
            raise DomainError("AIC inconsistent with log-likelihood and parameter count")
        if not 0.0 <= self.mpe <= 1.0:
            raise DomainError("MPE must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FitReport":
        return cls(**d)


def report(model, data, label: str | None = None) -> FitReport:
    """Evaluate a fitted model (``FittedModel``) on ``data``."""
    if data.n_obs == 0:
        raise DomainError("cannot evaluate on an empty dataset")
    cells = model.cells(data.X)
    picked = cells[np.arange(data.n_obs), data.y_a, data.y_b]
    ll = float(np.sum(np.log(np.maximum(picked, 1e-12))))
    thetas = model.thetas
    spec = model.spec
    theta = [0.0] if thetas is None else [float(t) for t in thetas]
    _, _, ties = joint_argmax(cells)
    return FitReport(
        label=label or spec.label,
        family=spec.family.value,
        total_loglik=ll,
        n_params=model.n_params,
        aic=aic(ll, model.n_params),
        mpe=mpe_from_cells(cells, data.y_a, data.y_b),
        n_obs=data.n_obs,
        theta=theta,
        flags=boundary_flags(spec.family, thetas),
        ties=ties,
    )


@dataclass
class Comparison:
    rows: list  # FitReports sorted by AIC
    best: list  # labels sharing the lowest AIC
    tied: list  # labels whose AIC equals another row's

    def to_dict(self) -> dict:
        return {
            "rows": [{**r.to_dict(), "best": r.label in self.best, "tied": r.label in self.tied} for r in self.rows],
            "best": self.best,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        head = ["Model", "LL", "Parameters", "AIC", "MPE", "theta", "Note"]
        body = []
        for r in self.rows:
            notes = []
            if r.label in self.best:
                notes.append("best")
            if r.label in self.tied:
                notes.append("tie")
            if r.flags:
                notes.append("theta outside range")
            body.append([
                r.label,
                f"{r.total_loglik:.3f}",
                str(r.n_params),
                f"{r.aic:.2f}",
                f"{r.mpe:.4f}",
                ", ".join(f"{t:.3f}" for t in r.theta),
                "; ".join(notes),
            ])
        widths = [max(len(row[i]) for row in [head, *body]) for i in range(len(head))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in [head, *body]]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def compare(reports) -> Comparison:
    """Rank reports by AIC (stable for ties) and mark the best."""
    reports = list(reports)
    if not reports:
        raise DomainError("nothing to compare")
    rows = sorted(reports, key=lambda r: r.aic)
    lowest = rows[0].aic
    best = [r.label for r in rows if abs(r.aic - lowest) <= TIE_TOL]
    tied = [r.label for r in rows if sum(abs(r.aic - o.aic) <= TIE_TOL for o in rows) > 1]
    return Comparison(rows, best, tied)
