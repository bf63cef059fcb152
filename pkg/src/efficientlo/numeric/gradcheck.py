"""Central finite-difference gradient checking."""
from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor, backward


def rel_error(a, n) -> float:
    """``|a - n| / max(|a|, |n|)``, with a 1e-6 floor on the denominator so that
    gradients that are zero up to finite-difference roundoff compare equal."""
    a = float(a)
    n = float(n)
    return abs(a - n) / max(abs(a), abs(n), 1e-6)


def grad_check(fn, inputs, eps: float = 1e-4, probes=None) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``fn`` maps a list of Tensors to a scalar Tensor. Inputs are promoted to
    float64 copies. ``probes`` optionally lists ``(input_index, flat_index)``
    pairs to check instead of every entry.
    """
    xs = [Tensor(np.array(getattr(x, "data", x), dtype=np.float64), requires_grad=True) for x in inputs]
    with Tape() as tape:
        loss = fn(xs)
    analytic = backward(tape, loss, xs)
    if probes is None:
        probes = [(i, j) for i, x in enumerate(xs) for j in range(x.data.size)]
    worst = 0.0
    for i, j in probes:
        flat = xs[i].data.reshape(-1)
        orig = flat[j]
        flat[j] = orig + eps
        fp = float(fn(xs).data)
        flat[j] = orig - eps
        fm = float(fn(xs).data)
        flat[j] = orig
        num = (fp - fm) / (2 * eps)
        worst = max(worst, rel_error(analytic[i].reshape(-1)[j], num))
    return worst
