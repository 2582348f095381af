"""Central finite-difference oracle and random small models for gradient checks."""

import numpy as np
import torch

from copjoint.copulas import CopulaFamily
from copjoint.model import BlockSpec, ModelSpec, build_layout

STEP = 1e-5


def finite_difference_gradient(loss, params, step=STEP):
    p = np.asarray(params, dtype=float)
    out = np.zeros_like(p)
    with torch.no_grad():
        for i in range(p.size):
            e = np.zeros_like(p)
            e[i] = step
            out[i] = (loss(torch.as_tensor(p + e)).item() - loss(torch.as_tensor(p - e)).item()) / (2 * step)
    return out


# typical eta values that keep theta comfortably inside each domain
_ETA = {
    CopulaFamily.GAUSSIAN: 0.4,
    CopulaFamily.CLAYTON: 0.3,
    CopulaFamily.GUMBEL: 0.2,
    CopulaFamily.JOE: 0.2,
    CopulaFamily.AMH: -0.5,
    CopulaFamily.FRANK: -2.0,
    CopulaFamily.FGM: 0.6,
}


def random_case(family, first, depth, seed, n=8):
    """A small random model and dataset: (spec, layout, params, X, y_a, y_b)."""
    rng = np.random.default_rng(seed)
    backbone = "reslogit" if depth else "logit"
    spec = ModelSpec(BlockSpec(first, 3, (0, 1)), BlockSpec("ordinal", 3, (1, 2)), family, backbone, depth)
    layout = build_layout(spec)
    named = {}
    for name, shape in layout.entries:
        scale = 0.3 if name.endswith("residual") else 0.5
        named[name] = rng.normal(scale=scale, size=shape)
    if spec.n_thetas:
        named["copula.eta"] = _ETA[spec.family] + rng.normal(scale=0.1, size=spec.n_thetas)
    X = torch.as_tensor(rng.normal(size=(n, 3)))
    ya, yb = torch.as_tensor(rng.integers(0, 3, n)), torch.as_tensor(rng.integers(0, 3, n))
    return spec, layout, layout.pack(named), X, ya, yb
