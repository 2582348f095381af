"""Small helpers for moving between numpy and float64 torch tensors."""

import functools

import numpy as np
import torch

DTYPE = torch.float64


def as_tensor(x):
    if isinstance(x, torch.Tensor):
        return x if x.dtype == DTYPE else x.to(DTYPE)
    return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=DTYPE)


def to_numpy(x):
    if isinstance(x, torch.Tensor):
        x = x.detach().numpy()
        return x.item() if x.ndim == 0 else x
    return x


def tensor_io(fn):
    """Run ``fn`` on tensors; return numpy unless a tensor was passed in.

    Non-array positional arguments (enums, specs, ints used as sizes) must be
    passed as keywords or come first and be declared in ``fn`` accordingly;
    only ``float``/``ndarray``/``list``/``Tensor`` positionals are converted.
    """

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        saw_tensor = any(isinstance(a, torch.Tensor) for a in args) or any(
            isinstance(v, torch.Tensor) for v in kwargs.values()
        )
        conv = [
            as_tensor(a) if isinstance(a, (float, int, np.ndarray, list, tuple, np.floating))
            and not isinstance(a, bool)
            else a
            for a in args
        ]
        out = fn(*conv, **kwargs)
        if saw_tensor:
            return out
        if isinstance(out, tuple):
            return tuple(to_numpy(o) for o in out)
        return to_numpy(out)

    return wrapper
