"""Central-difference gradient oracle."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .params import ParameterSet, value_and_grad
from .tensor import Tensor, no_grad


class NonFiniteLoss(ArithmeticError):
    pass


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]
    # (param name, flat index, analytic, numeric) for every disagreeing entry
    flagged: list[tuple[str, int, float, float]] = field(default_factory=list)
    # entries where the one-sided differences disagree (nondifferentiable point)
    kinks: list[tuple[str, int]] = field(default_factory=list)
    tol: float = 1e-3

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def ok(self) -> bool:
        return not self.flagged and not self.kinks


def relative_error(a: float, n: float, floor: float = 1e-6) -> float:
    return abs(a - n) / max(abs(a), abs(n), floor)


def finite_difference_check(
    loss_fn: Callable[[dict[str, Tensor]], Tensor],
    params: ParameterSet,
    h: float = 1e-5,
    tol: float = 1e-3,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare reverse-mode gradients of ``loss_fn`` with central differences.

    ``loss_fn`` receives a dict of tensors and must be deterministic (freeze
    any noise before calling). Every entry of every parameter is perturbed.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    _, analytic = value_and_grad(loss_fn, params)
    work = params.copy()

    def f() -> float:
        with no_grad():
            val = float(loss_fn(work.constants()).data)
        if not np.isfinite(val):
            raise NonFiniteLoss(val)
        return val

    f0 = f()
    report = GradCheckReport({}, tol=tol)
    for name in work:
        arr = work[name]
        flat = arr.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            num = (fp - fm) / (2 * h)
            err = relative_error(a_flat[i], num, floor)
            worst = max(worst, err)
            if err > tol:
                report.flagged.append((name, i, float(a_flat[i]), num))
            fwd = (fp - f0) / h
            bwd = (f0 - fm) / h
            if relative_error(fwd, bwd, max(floor, 1e3 * h)) > max(tol, 1e3 * h):
                report.kinks.append((name, i))
        report.max_rel_error[name] = worst
    return report
