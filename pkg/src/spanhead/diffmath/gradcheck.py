"""Central-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Dict, List, Tuple

import numpy as np

from ..errors import GradCheckError
from .params import ParamStore
from .tensor import Tensor

DENSE_LIMIT = 4096
SAMPLE_MIN = 64

# Relative error uses max(|analytic|, |numeric|, DENOM_FLOOR) as denominator.
# Some gradients are exactly zero by construction (e.g. a bias feeding a
# softmax is shift-invariant); there central differences return only rounding
# noise (~1e-11 at float64, epsilon 1e-5), so coordinates below this scale
# are judged on an absolute basis instead of noise-to-noise ratios.
DENOM_FLOOR = 1e-5


def grad_check(
    loss_fn: Callable[[], Tensor],
    store: ParamStore,
    epsilon: float = 1e-5,
    rng_seed: int = 0,
) -> Dict[str, float]:
    """Compare backprop gradients against central differences.

    loss_fn must rebuild the graph from the store's current parameter values
    and return a scalar loss. Parameters with at most DENSE_LIMIT entries are
    checked coordinate by coordinate; larger ones at SAMPLE_MIN seeded random
    coordinates. Returns the max relative error per parameter name and raises
    GradCheckError on any non-finite value, naming the offending coordinate.

    Parameters must be float64: float32 forward noise is the same order as
    the difference quotient's truncation error, which makes the comparison
    meaningless rather than merely loose.
    """
    for name, t in store.items():
        if t.data.dtype != np.float64:
            raise GradCheckError(
                f"grad_check requires float64 parameters; {name!r} is {t.data.dtype} "
                "(call store.astype(np.float64) first)"
            )

    store.zero_grad()
    loss = loss_fn()
    if loss.size != 1:
        raise GradCheckError(f"loss_fn must return a scalar, got shape {loss.shape}")
    loss.backward()

    analytic: Dict[str, np.ndarray] = {}
    for name, t in store.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        if not np.all(np.isfinite(g)):
            bad = np.argwhere(~np.isfinite(g))[0]
            raise GradCheckError(f"non-finite analytic gradient at {name}[{tuple(bad)}]")
        analytic[name] = g.copy()

    rng = np.random.default_rng(rng_seed)
    worst: Dict[str, float] = {}
    for name, t in store.items():
        flat = t.data.reshape(-1)
        n = flat.size
        if n <= DENSE_LIMIT:
            coords: List[int] = list(range(n))
        else:
            coords = sorted(rng.choice(n, size=SAMPLE_MIN, replace=False).tolist())
        ga = analytic[name].reshape(-1)
        worst_err = 0.0
        for k in coords:
            orig = flat[k]
            flat[k] = orig + epsilon
            up = float(loss_fn().item())
            flat[k] = orig - epsilon
            down = float(loss_fn().item())
            flat[k] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise GradCheckError(f"non-finite loss while perturbing {name}[flat {k}]")
            numeric = (up - down) / (2.0 * epsilon)
            a = float(ga[k])
            err = abs(a - numeric) / max(abs(a), abs(numeric), DENOM_FLOOR)
            worst_err = max(worst_err, err)
        worst[name] = worst_err
    return worst
