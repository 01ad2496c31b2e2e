"""Central finite-difference check of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import NumericError
from .tape import Tape


@dataclass
class GradCheckReport:
    tolerance: float
    step: float
    max_error: dict = field(default_factory=dict)  # parameter name -> max relative error
    checked: dict = field(default_factory=dict)  # parameter name -> number of scalars sampled

    @property
    def worst(self):
        return max(self.max_error.values(), default=0.0)

    @property
    def passed(self):
        return self.worst < self.tolerance

    def lines(self):
        for name in sorted(self.max_error):
            yield f"{name}\t{self.checked[name]}\t{self.max_error[name]:.3e}"


def relative_error(analytic, numeric):
    return abs(analytic - numeric) / max(1.0, abs(analytic) + abs(numeric))


def gradient_check(loss_fn, params, tolerance=1e-4, step=1e-3, samples_per_param=None, seed=0):
    """Compare analytic gradients of ``loss_fn`` against central differences.

    Parameters
    ----------
    loss_fn : callable
        ``loss_fn(tape, nodes)`` builds the loss on ``tape`` from the dict of
        parameter nodes and returns the scalar loss node.  Must be
        deterministic.
    params : dict of str -> ndarray
        Point at which to check.  Arrays are perturbed in place and restored.
    tolerance : float
        Pass iff every sampled relative error is strictly below this.
    step : float
        Finite-difference half-width ``h``.
    samples_per_param : int, optional
        Check at most this many randomly chosen scalars per array; all of
        them when None.
    """

    def evaluate():
        tape = Tape()
        nodes = {name: tape.parameter(value, name) for name, value in params.items()}
        loss = loss_fn(tape, nodes)
        return tape, loss

    tape, loss = evaluate()
    analytic = tape.backward(loss)
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tolerance, step=step)

    def scalar_loss(name):
        _, node = evaluate()
        value = float(node.value)
        if not np.isfinite(value):
            raise NumericError(f"non-finite loss while perturbing parameter {name!r}")
        return value

    for name in sorted(params):
        flat = params[name].reshape(-1)
        n = flat.size
        if samples_per_param is None or samples_per_param >= n:
            picks = np.arange(n)
        else:
            picks = rng.choice(n, size=samples_per_param, replace=False)
        grad = analytic[name].reshape(-1)
        worst = 0.0
        for k in picks:
            saved = flat[k]
            flat[k] = saved + step
            up = scalar_loss(name)
            flat[k] = saved - step
            down = scalar_loss(name)
            flat[k] = saved
            numeric = (up - down) / (2.0 * step)
            worst = max(worst, relative_error(grad[k], numeric))
        report.max_error[name] = worst
        report.checked[name] = len(picks)
    return report
