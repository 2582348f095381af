import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from copjoint.copulas import (
    CopulaFamily,
    CopulaSpec,
    cdf,
    cdf_t,
    kendall_tau,
    partial_u,
    rectangle_mass,
    sample,
    sample_kendall_tau,
    sample_pair,
    validate_theta,
)
from copjoint.exceptions import ConsistencyError, DomainError

# one interior theta per family, away from independence
MID_THETA = {
    "gaussian": 0.6,
    "clayton": 2.0,
    "gumbel": 2.0,
    "joe": 2.0,
    "amh": 0.7,
    "frank": 5.0,
    "fgm": 0.8,
}
THETA_GRID = {
    "gaussian": [-0.95, -0.5, 0.0, 0.3, 0.95],
    "clayton": [-0.8, 0.0, 0.5, 2.0, 8.0],
    "gumbel": [1.0, 1.5, 3.0, 10.0],
    "joe": [1.0, 1.5, 3.0, 10.0],
    "amh": [-1.0, -0.4, 0.0, 0.5, 1.0],
    "frank": [-35.0, -3.0, 0.0, 2.0, 12.0, 40.0],
    "fgm": [-1.0, -0.3, 0.0, 0.6, 1.0],
}


def _pairs():
    for fam, thetas in THETA_GRID.items():
        for t in thetas:
            yield fam, t
    yield "product", None


# --- domain validation ---------------------------------------------------


def test_validate_rejects_fgm_outside_unit_interval():
    verdict = validate_theta("fgm", 1.3)
    assert not verdict
    assert verdict.interval == "[-1, 1]"


def test_validate_accepts_small_negative_frank():
    assert validate_theta("frank", -0.613)


def test_gumbel_one_is_independence_limit():
    verdict = validate_theta("gumbel", 1.0)
    assert verdict and verdict.limit


def test_validate_non_finite_raises():
    with pytest.raises(DomainError):
        validate_theta("frank", float("nan"))


@pytest.mark.parametrize("fam,theta", [("gumbel", 0.5), ("joe", 0.99), ("clayton", -1.5), ("gaussian", 1.0),
                                       ("amh", 1.01)])
def test_spec_rejects_out_of_domain(fam, theta):
    with pytest.raises(DomainError):
        CopulaSpec(fam, theta)


def test_unknown_family_lists_legal_names():
    with pytest.raises(DomainError, match="frank"):
        CopulaFamily.parse("tcopula")


# --- cdf values --------------------------------------------------------------


def test_gaussian_independence_is_uv():
    assert cdf(CopulaSpec("gaussian", 0.0), 0.3, 0.8) == pytest.approx(0.24, abs=1e-12)


def test_clayton_value():
    assert cdf(CopulaSpec("clayton", 2.0), 0.5, 0.5) == pytest.approx(7 ** -0.5, abs=1e-12)


def test_frank_value_matches_high_precision_oracle():
    # the arbitrary-precision closed form gives 0.24972133..., see decisions ledger
    expected = float(oracles.copula_cdf("frank", 2, 0.3, 0.7))
    assert cdf(CopulaSpec("frank", 2.0), 0.3, 0.7) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("fam,theta", list(_pairs()))
def test_cdf_matches_mpmath(fam, theta):
    rng = np.random.default_rng(3)
    spec = CopulaSpec(fam, theta)
    tol = 1e-7 if fam == "gaussian" else 1e-11
    independent = theta is None or validate_theta(fam, theta).limit
    for u, v in rng.uniform(0.01, 0.99, size=(6, 2)):
        ref = u * v if independent else float(oracles.copula_cdf(fam, theta, u, v))
        assert cdf(spec, u, v) == pytest.approx(ref, abs=tol)


@pytest.mark.parametrize("fam,theta", [("frank", 1e-4), ("frank", -3e-6), ("fgm", 1e-4), ("fgm", 2e-6),
                                       ("amh", 1e-4), ("amh", -4e-6), ("clayton", 1e-4), ("clayton", 5e-6),
                                       ("gumbel", 1 + 1e-4), ("gumbel", 1 + 1e-6), ("joe", 1 + 1e-4),
                                       ("joe", 1 + 1e-6), ("gaussian", 1e-4), ("gaussian", 1e-6)])
def test_near_independence_matches_oracle(fam, theta):
    # values inside and just outside the series band around independence
    spec = CopulaSpec(fam, theta)
    tol = 1e-10 if fam == "gaussian" else 1e-12
    for u, v in [(0.05, 0.3), (0.5, 0.5), (0.9, 0.2), (0.95, 0.95)]:
        assert cdf(spec, u, v) == pytest.approx(float(oracles.copula_cdf(fam, theta, u, v)), abs=tol)


def test_frank_large_theta_is_finite_and_bounded():
    for t in (-300.0, -60.0, 60.0, 300.0):
        c = cdf(CopulaSpec("frank", t), np.array([0.2, 0.5, 0.9]), np.array([0.7, 0.5, 0.95]))
        assert np.all(np.isfinite(c))
        u, v = np.array([0.2, 0.5, 0.9]), np.array([0.7, 0.5, 0.95])
        assert np.all(c >= np.maximum(u + v - 1, 0) - 1e-12) and np.all(c <= np.minimum(u, v) + 1e-12)


def test_cdf_rejects_outside_unit_square():
    with pytest.raises(DomainError):
        cdf(CopulaSpec("frank", 1.0), 1.2, 0.5)


def test_tensor_in_tensor_out():
    out = cdf(CopulaSpec("frank", 1.0), torch.tensor([0.3]), torch.tensor([0.4]))
    assert isinstance(out, torch.Tensor)


# --- axioms (property tests) -------------------------------------------------


@pytest.mark.parametrize("fam,theta", list(_pairs()))
def test_grounding_margins_frechet(fam, theta):
    spec = CopulaSpec(fam, theta)
    g = np.linspace(0, 1, 21)
    tol = 1e-6 if fam == "gaussian" else 1e-9
    assert np.all(cdf(spec, g, 0.0) == 0) and np.all(cdf(spec, 0.0, g) == 0)
    assert np.max(np.abs(cdf(spec, g, 1.0) - g)) <= tol
    assert np.max(np.abs(cdf(spec, 1.0, g) - g)) <= tol
    U, V = np.meshgrid(g, g)
    C = cdf(spec, U, V)
    assert np.all(C >= np.maximum(U + V - 1, 0) - tol)
    assert np.all(C <= np.minimum(U, V) + tol)


@settings(max_examples=60, deadline=None)
@given(fam=st.sampled_from(sorted(MID_THETA)), data=st.data())
def test_two_increasing_random_rectangles(fam, data):
    lo, hi = {"gaussian": (-0.99, 0.99), "clayton": (-1.0, 20.0), "gumbel": (1.0, 20.0), "joe": (1.0, 20.0),
              "amh": (-1.0, 1.0), "frank": (-50.0, 50.0), "fgm": (-1.0, 1.0)}[fam]
    theta = data.draw(st.floats(lo, hi))
    spec = CopulaSpec(fam, theta)
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    a, b = np.sort(rng.uniform(size=(2, 500)), axis=0)
    c, d = np.sort(rng.uniform(size=(2, 500)), axis=0)
    rectangle_mass(spec, a, b, c, d)  # raises ConsistencyError on a violation


def test_rectangle_mass_examples():
    assert rectangle_mass(CopulaSpec("product"), 0.2, 0.5, 0.1, 0.4) == pytest.approx(0.09, abs=1e-15)
    for fam, t in MID_THETA.items():
        assert rectangle_mass(CopulaSpec(fam, t), 0, 1, 0, 1) == pytest.approx(1.0, abs=1e-12)
    spec = CopulaSpec("frank", -3.0)
    assert rectangle_mass(spec, 0, 0.5, 0, 0.5) == pytest.approx(cdf(spec, 0.5, 0.5), abs=1e-15)


def test_rectangle_mass_unordered_bounds():
    with pytest.raises(DomainError):
        rectangle_mass(CopulaSpec("product"), 0.5, 0.2, 0.1, 0.4)


def test_rectangle_consistency_error_type():
    assert issubclass(ConsistencyError, ArithmeticError)


# --- partial derivative ------------------------------------------------------


def test_partial_examples():
    assert partial_u(CopulaSpec("product"), 0.4, 0.9) == pytest.approx(0.9)
    # v + theta v (1 - v) (1 - 2u)
    assert partial_u(CopulaSpec("fgm", 0.5), 0.5, 0.5) == pytest.approx(0.5, abs=1e-15)
    assert partial_u(CopulaSpec("fgm", 0.5), 0.25, 0.5) == pytest.approx(0.5625, abs=1e-15)


def test_partial_boundary_raises():
    with pytest.raises(DomainError):
        partial_u(CopulaSpec("frank", 1.0), 0.0, 0.3)


@pytest.mark.parametrize("fam,theta", [(f, t) for f, ts in THETA_GRID.items() for t in ts if t not in (0.0, 1.0)])
def test_partial_matches_numerical_derivative(fam, theta):
    spec = CopulaSpec(fam, theta)
    for u, v in [(0.2, 0.7), (0.5, 0.5), (0.85, 0.3)]:
        ref = float(oracles.copula_partial_u(fam, theta, u, v))
        tol = 1e-7 if fam == "gaussian" else 1e-9
        assert partial_u(spec, u, v) == pytest.approx(ref, abs=tol)


@pytest.mark.parametrize("fam", sorted(MID_THETA))
def test_partial_is_conditional_cdf(fam):
    spec = CopulaSpec(fam, MID_THETA[fam])
    v = np.linspace(0, 1, 101)
    p = partial_u(spec, 0.2, v)
    assert p[0] == 0 and p[-1] == 1
    assert np.all(np.diff(p) >= -1e-12)


# --- Kendall's tau -----------------------------------------------------------


def test_tau_closed_forms():
    assert kendall_tau(CopulaSpec("clayton", 2.0)) == pytest.approx(0.5)
    assert kendall_tau(CopulaSpec("gaussian", 1 / math.sqrt(2))) == pytest.approx(0.5)
    assert kendall_tau(CopulaSpec("frank", 5.0)) == pytest.approx(0.457, abs=5e-4)
    assert kendall_tau(CopulaSpec("product")) == 0.0


@pytest.mark.parametrize("theta", [-20.0, -3.0, -0.5, 0.5, 5.0, 30.0])
def test_frank_tau_debye(theta):
    assert kendall_tau(CopulaSpec("frank", theta)) == pytest.approx(float(oracles.frank_tau(theta)), abs=1e-8)


@pytest.mark.parametrize("theta", [1.0, 1.2, 1.9999, 2.0, 2.0005, 5.0, 15.0, 100.0])
def test_joe_tau_matches_series(theta):
    assert kendall_tau(CopulaSpec("joe", theta)) == pytest.approx(float(oracles.joe_tau_series(theta)), abs=1e-12)


@pytest.mark.parametrize("theta", [-1.0, -0.5, 0.3, 0.9, 1.0])
def test_amh_tau(theta):
    ref = 1 / 3 if theta == 1.0 else float(oracles.amh_tau(theta))
    assert kendall_tau(CopulaSpec("amh", theta)) == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("fam", ["gaussian", "frank", "amh", "fgm"])
def test_tau_sign_follows_theta(fam):
    t = MID_THETA[fam]
    assert kendall_tau(CopulaSpec(fam, t)) > 0 > kendall_tau(CopulaSpec(fam, -t))


# --- sampling ----------------------------------------------------------------


def test_sample_shapes_and_range():
    rng = np.random.default_rng(0)
    for fam, t in MID_THETA.items():
        s = sample(CopulaSpec(fam, t), 100, rng)
        assert s.shape == (100, 2) and np.all((s >= 0) & (s <= 1))
    u, v = sample_pair(CopulaSpec("joe", 2.0), rng)
    assert 0 <= u <= 1 and 0 <= v <= 1


@pytest.mark.parametrize("fam", sorted(MID_THETA))
def test_conditional_method_inverts_partial(fam):
    spec = CopulaSpec(fam, MID_THETA[fam])
    draws = np.random.default_rng(5)
    pairs = sample(spec, 200, np.random.default_rng(5))
    u = draws.uniform(size=200)
    w = draws.uniform(size=200)
    assert np.allclose(pairs[:, 0], u)
    if fam != "gaussian":
        assert np.allclose(partial_u(spec, pairs[:, 0], pairs[:, 1]), w, atol=1e-8)


def test_sample_tau_product_and_clayton():
    rng = np.random.default_rng(11)
    assert abs(sample_kendall_tau(sample(CopulaSpec("product"), 100_000, rng))) <= 0.01
    assert abs(sample_kendall_tau(sample(CopulaSpec("clayton", 2.0), 100_000, rng)) - 0.5) <= 0.01


def test_clayton_negative_sampling_out_of_scope():
    with pytest.raises(DomainError):
        sample(CopulaSpec("clayton", -0.5), 10, np.random.default_rng(0))


def test_sampling_is_reproducible():
    a = sample(CopulaSpec("gumbel", 3.0), 50, np.random.default_rng(9))
    b = sample(CopulaSpec("gumbel", 3.0), 50, np.random.default_rng(9))
    assert np.array_equal(a, b)


def test_cdf_t_gradient_finite_at_boundaries():
    for fam, t in MID_THETA.items():
        theta = torch.tensor(float(t), dtype=torch.float64, requires_grad=True)
        u = torch.tensor([0.0, 1.0, 0.3, 1.0, 0.0], dtype=torch.float64)
        v = torch.tensor([0.4, 0.6, 1.0, 1.0, 0.0], dtype=torch.float64)
        cdf_t(CopulaFamily(fam), theta, u, v).sum().backward()
        assert torch.isfinite(theta.grad)
