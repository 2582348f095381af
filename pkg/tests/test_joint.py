import math

import numpy as np
import pytest
import torch

import oracles
from copjoint import marginals as mg
from copjoint.copulas import CopulaFamily, CopulaSpec
from copjoint.data import Dataset
from copjoint.exceptions import DomainError
from copjoint.joint import multinomial_ordinal_cells, nll_from_cells_t, ordinal_ordinal_cells
from copjoint.model import BlockSpec, ModelSpec, build_layout, joint_cells, joint_nll


def test_product_cells_factorise():
    u = np.array([0, 0.2, 0.7, 1.0])
    v = np.array([0, 0.55, 1.0])
    cells = ordinal_ordinal_cells(u, v, CopulaSpec("product"))
    assert np.allclose(cells, np.outer(np.diff(u), np.diff(v)), atol=1e-15)


def test_frank_two_by_two_against_oracle():
    c = float(oracles.copula_cdf("frank", 2, 0.5, 0.5))
    cells = ordinal_ordinal_cells(np.array([0, 0.5, 1]), np.array([0, 0.5, 1]), CopulaSpec("frank", 2.0))
    assert np.allclose(cells, [[c, 0.5 - c], [0.5 - c, c]], atol=1e-14)


def test_degenerate_margin_gives_single_row():
    v = np.array([0, 0.1, 0.6, 1.0])
    cells = ordinal_ordinal_cells(np.array([0.0, 1.0]), v, CopulaSpec("gumbel", 2.5))
    assert cells.shape == (1, 3) and np.allclose(cells[0], np.diff(v), atol=1e-15)


def test_bad_cumulative_rejected():
    with pytest.raises(DomainError):
        ordinal_ordinal_cells(np.array([0, 0.6, 0.4, 1]), np.array([0, 1.0]), CopulaSpec("product"))


def test_multinomial_product_cells():
    P = np.array([0.2, 0.5, 0.3])
    v = np.array([0, 0.4, 1.0])
    cells = multinomial_ordinal_cells(P, v, "product")
    assert np.allclose(cells, np.outer(P, np.diff(v)), atol=1e-15)


def test_multinomial_uniform_independent():
    cells = multinomial_ordinal_cells(np.full(3, 1 / 3), np.array([0, 0.5, 1]), "frank", np.zeros(3))
    assert np.allclose(cells, 1 / 6, atol=1e-15)


def test_multinomial_frank_against_oracle():
    P, v = [0.7, 0.3], [0, 0.4, 1.0]
    cells = multinomial_ordinal_cells(np.array(P), np.array(v), "frank", np.array([3.0, 3.0]))
    rows = []
    for p in P:
        c = float(oracles.copula_cdf("frank", 3, p, 0.4))
        rows.append([c, p - c])
    ref = np.array(rows)
    assert np.allclose(cells, ref / ref.sum(), atol=1e-14)


def test_multinomial_needs_one_theta_per_mode():
    with pytest.raises(DomainError):
        multinomial_ordinal_cells(np.array([0.5, 0.5]), np.array([0, 1.0]), "frank", np.array([1.0]))


def test_nll_of_quarter_cell():
    cells = torch.full((1, 2, 2), 0.25, dtype=torch.float64)
    assert nll_from_cells_t(cells, torch.tensor([1]), torch.tensor([0])).item() == pytest.approx(math.log(4))


def _random_data(n, d, Ka, Kb, seed):
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(n, d)), rng.integers(0, Ka, n), rng.integers(0, Kb, n),
                   [f"x{j}" for j in range(d)], (Ka, Kb))


def test_nll_matches_enumeration_oracle():
    spec = ModelSpec(BlockSpec("ordinal", 3, (0, 1)), BlockSpec("ordinal", 4, (1, 2)), "clayton")
    data = _random_data(25, 3, 3, 4, 0)
    params = np.random.default_rng(1).normal(scale=0.5, size=build_layout(spec).size)
    cells = joint_cells(spec, params, data.X)
    ref = -np.mean([math.log(max(cells[q, data.y_a[q], data.y_b[q]], 1e-12)) for q in range(data.n_obs)])
    assert joint_nll(spec, params, data) == pytest.approx(ref, abs=1e-13)


def test_frank_concordant_mass_increases_with_theta():
    u = np.array([0, 0.3, 0.65, 1.0])
    v = np.array([0, 0.45, 0.8, 1.0])
    mass = [ordinal_ordinal_cells(u, v, CopulaSpec("frank", t))[[0, -1], [0, -1]].sum()
            for t in np.linspace(-10, 10, 21)]
    assert np.all(np.diff(mass) > 0)


def test_zero_stack_reslogit_reproduces_logit_cells():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 2))
    logit = ModelSpec(BlockSpec("multinomial", 3, (0, 1)), BlockSpec("ordinal", 3, (0, 1)), "frank")
    res = logit.replace(backbone="reslogit", depth=2)
    beta = np.array([0.7, -0.4])
    psi = np.array([-0.5, 0.8])
    asc, coef = rng.normal(size=2), rng.normal(size=(2, 2))
    eta = np.array([0.5, -1.0, 2.0])
    p_logit = build_layout(logit).pack({"a.asc": asc, "a.coef": coef, "b.coef": beta,
                                        "b.thresholds": mg.raw_from_thresholds(psi).numpy(), "copula.eta": eta})
    d, M = 2, 2
    bias = M * math.log(2.0) * d - psi  # absorbs the -M ln2 shift of every stack component
    p_res = build_layout(res).pack({"a.asc": asc, "a.coef": coef, "a.residual": np.zeros((M, 3, 3)),
                                    "b.coef": beta, "b.residual": np.zeros((M, d, d)), "b.coral_weight": np.ones(d),
                                    "b.coral_bias": mg.raw_from_coral_biases(bias).numpy(), "copula.eta": eta})
    assert np.allclose(joint_cells(logit, p_logit, X), joint_cells(res, p_res, X), atol=1e-12)


@pytest.mark.parametrize("family", [f.value for f in CopulaFamily])
def test_cells_normalised_both_shapes(family):
    rng = np.random.default_rng(7)
    for first in ("ordinal", "multinomial"):
        spec = ModelSpec(BlockSpec(first, 3, (0, 1)), BlockSpec("ordinal", 4, (1,)), family)
        for _ in range(5):
            params = rng.normal(size=build_layout(spec).size)
            cells = joint_cells(spec, params, rng.normal(size=(10, 2)))
            tol = 1e-6 if family == "gaussian" else 1e-8
            assert np.max(np.abs(cells.sum(axis=(1, 2)) - 1)) <= tol
            assert cells.min() >= -1e-10
