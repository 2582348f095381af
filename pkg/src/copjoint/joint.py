"""Joint outcome-cell probabilities from marginal CDF points and a copula."""

import torch

from ._tensor import as_tensor, tensor_io
from .copulas import CopulaFamily, CopulaSpec, NEGATIVE_MASS_TOL, cdf_t
from .exceptions import ConsistencyError, DomainError

CELL_FLOOR = 1e-12


def ordinal_ordinal_cells_t(family, theta, u_cum, v_cum):
    """Rectangle masses for every (i, k); inputs have shape (..., K+1)."""
    grid = cdf_t(family, theta, u_cum[..., :, None], v_cum[..., None, :])
    return grid[..., 1:, 1:] - grid[..., :-1, 1:] - grid[..., 1:, :-1] + grid[..., :-1, :-1]


def multinomial_ordinal_cells_t(family, thetas, mode_probs, v_cum):
    """One copula per mode couples P(mode j) with the ordinal cumulative points.

    ``thetas`` has shape (J,) (ignored for the product copula). The matrix is
    renormalised to sum to one; rows already telescope to P(mode j), so the
    renormalisation only absorbs round-off.
    """
    theta = None if thetas is None else as_tensor(thetas)[..., :, None]
    grid = cdf_t(family, theta, mode_probs[..., :, None], v_cum[..., None, :])
    cells = grid[..., 1:] - grid[..., :-1]
    return cells / cells.sum(dim=(-2, -1), keepdim=True)


def _check_cumulative(name, cum):
    if torch.any(torch.diff(cum, dim=-1) < 0):
        raise DomainError(f"{name} must be nondecreasing")
    if torch.any(cum[..., 0] != 0) or torch.any(cum[..., -1] != 1):
        raise DomainError(f"{name} must run from 0 to 1")


def _check_cells(cells):
    if torch.any(cells < -NEGATIVE_MASS_TOL):
        raise ConsistencyError(f"negative joint cell probability {cells.min().item():.3e}")
    return torch.clamp(cells, min=0.0)


@tensor_io
def ordinal_ordinal_cells(u_cum, v_cum, spec: CopulaSpec = None):
    """Joint cell matrix for two ordinal outcomes.

    ``u_cum`` and ``v_cum`` are cumulative points of length K+1 running from
    0 to 1 (batched along leading axes). Cell (i, k) is the copula mass of
    the rectangle ``[u_cum[i], u_cum[i+1]] x [v_cum[k], v_cum[k+1]]``.
    """
    u_cum, v_cum = as_tensor(u_cum), as_tensor(v_cum)
    _check_cumulative("u_cum", u_cum)
    _check_cumulative("v_cum", v_cum)
    return _check_cells(ordinal_ordinal_cells_t(spec.family, spec.theta, u_cum, v_cum))


@tensor_io
def multinomial_ordinal_cells(mode_probs, v_cum, family=None, thetas=None):
    """Joint cell matrix for a multinomial outcome and an ordinal outcome."""
    family = CopulaFamily.parse(family)
    mode_probs, v_cum = as_tensor(mode_probs), as_tensor(v_cum)
    if torch.any((mode_probs.sum(-1) - 1).abs() > 1e-9):
        raise DomainError("mode probabilities must sum to one")
    _check_cumulative("v_cum", v_cum)
    if family is not CopulaFamily.PRODUCT:
        thetas = as_tensor(thetas)
        for t in thetas.reshape(-1).tolist():
            CopulaSpec(family, t)
        if thetas.shape[-1] != mode_probs.shape[-1]:
            raise DomainError("need one copula parameter per mode")
    return _check_cells(multinomial_ordinal_cells_t(family, thetas, mode_probs, v_cum))


def nll_from_cells_t(cells, y_a, y_b):
    """Mean negative log-likelihood of the observed cells (floored at 1e-12)."""
    idx = torch.arange(cells.shape[0])
    picked = cells[idx, y_a, y_b]
    return -torch.log(torch.clamp(picked, min=CELL_FLOOR)).mean()
