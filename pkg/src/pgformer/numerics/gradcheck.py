"""Central finite-difference checks of recorded gradients."""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable

import numpy as np

from .tensor import Parameter, Tensor, no_grad

GRAD_FLOOR = 1e-8


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = GRAD_FLOOR) -> float:
    """``|a - n|_2 / max(|a|_2, |n|_2, floor)`` over a whole gradient array."""
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    denom = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / denom)


@contextlib.contextmanager
def extended_precision(params: Iterable[Parameter]):
    """Hold ``params`` in long double so forward passes round at ~1e-19 instead of ~1e-16.

    Float64 inputs promote on contact, so a whole forward pass runs extended.
    The original float64 arrays are restored on exit.
    """
    params = list(params)
    saved = [p.data for p in params]
    try:
        for p in params:
            p.data = p.data.astype(np.longdouble)
        yield
    finally:
        for p, d in zip(params, saved):
            p.data = d


def numerical_gradient(loss_fn: Callable[[], Tensor], param: Parameter, h: float = 1e-6,
                       indices=None) -> np.ndarray:
    """Central differences of ``loss_fn()`` w.r.t. ``param`` (all entries or ``indices``).

    Works in whatever precision ``param.data`` holds. Entries not in ``indices``
    are left as NaN.
    """
    flat = param.data.reshape(-1)
    out = np.full(flat.shape, np.nan)
    idx = range(flat.size) if indices is None else indices
    with no_grad():
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().data
            flat[i] = orig - h
            down = loss_fn().data
            flat[i] = orig
            out[i] = float((up - down) / (2 * flat.dtype.type(h)))
    return out.reshape(param.shape)


def analytic_gradients(loss_fn: Callable[[], Tensor], params: dict[str, Parameter]) -> dict[str, np.ndarray]:
    for p in params.values():
        p.zero_grad()
    loss_fn().backward()
    return {k: p.grad.copy() for k, p in params.items()}


def check_gradients(loss_fn: Callable[[], Tensor], params: dict[str, Parameter], h: float = 1e-6,
                    max_entries: int | None = None, seed: int = 0,
                    extended: bool = False) -> dict[str, float]:
    """Relative error of backward vs. central differences for each named parameter.

    With ``max_entries`` set, larger parameters are probed on a fixed random
    subset of that many entries. ``extended`` evaluates the difference quotients
    in long double, which removes the float64 roundoff floor (about
    ``eps * |loss| / h`` per entry) for parameters with small gradients; the
    analytic gradients are always float64.
    """
    analytic = analytic_gradients(loss_fn, params)
    rng = np.random.default_rng(seed)
    report = {}
    ctx = extended_precision(params.values()) if extended else contextlib.nullcontext()
    with ctx:
        numeric = {}
        for name, p in params.items():
            idx = None
            if max_entries is not None and p.size > max_entries:
                idx = np.sort(rng.choice(p.size, size=max_entries, replace=False))
            numeric[name] = (idx, numerical_gradient(loss_fn, p, h=h, indices=idx))
    for name, (idx, num) in numeric.items():
        a = analytic[name]
        if idx is not None:
            a = a.reshape(-1)[idx]
            num = num.reshape(-1)[idx]
        report[name] = relative_error(a, num)
    return report
