"""Central finite-difference gradient checking."""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import backward, record_kinks, zero_grad


@dataclass
class GradCheckReport:
    tolerance: float
    errors: dict = field(default_factory=dict)
    # entries whose step had to shrink to stay on one smooth piece, per parameter
    shrunk: dict = field(default_factory=dict)
    # entries sitting on a kink even at the smallest step; excluded from ``errors``
    nonsmooth: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(e <= self.tolerance for e in self.errors.values())

    @property
    def failures(self):
        return {k: e for k, e in self.errors.items() if e > self.tolerance}

    @property
    def worst(self):
        return max(self.errors.values(), default=0.0)

    @property
    def skipped(self):
        return sum(self.nonsmooth.values())

    def __str__(self):
        lines = [f"{name}\t{err:.3e}\t{'ok' if err <= self.tolerance else 'FAIL'}" for name, err in self.errors.items()]
        if self.skipped:
            lines.append(f"non-smooth entries skipped: {self.skipped}")
        return "\n".join(lines)


def _same_piece(a, b):
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def _evaluate(f):
    with record_kinks() as pattern:
        value = float(f().data)
    return value, pattern


def grad_check(f, params, tolerance=1e-4, h=1e-3, max_entries=None, seed=0, min_h=1e-7):
    """Compare analytic gradients of scalar ``f()`` against central differences.

    ``params`` are the tensors to differentiate (double precision expected).
    The relative error per parameter is ``max|a - n| / max(max|a|, max|n|, 1e-8)``
    over the checked entries. ``max_entries`` limits how many entries of each
    parameter are perturbed (chosen at random, reproducibly).

    A difference quotient is only a valid oracle where ``f`` is smooth on
    ``[x - h, x + h]``. When a perturbation flips the sign of any input to a
    leaky ReLU or absolute value, the step is divided by 10 (down to
    ``min_h``) until both sides stay on the base point's smooth piece.
    Entries that never do are listed in ``nonsmooth`` instead of ``errors``.
    """
    params = list(params)
    zero_grad(params)
    loss = f()
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    zero_grad(params)
    _, base = _evaluate(f)

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tolerance)
    for idx, (p, a) in enumerate(zip(params, analytic)):
        name = p.name or f"param{idx}"
        flat = p.data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = rng.choice(flat.size, size=max_entries, replace=False)
        numeric, kept = [], []
        shrunk = skipped = 0
        for e in entries:
            orig = flat[e]
            step = h
            while True:
                flat[e] = orig + step
                up, p_up = _evaluate(f)
                flat[e] = orig - step
                down, p_down = _evaluate(f)
                flat[e] = orig
                if _same_piece(p_up, base) and _same_piece(p_down, base):
                    numeric.append((up - down) / (2.0 * step))
                    kept.append(e)
                    shrunk += step < h
                    break
                step /= 10.0
                if step < min_h:
                    skipped += 1
                    break
        if shrunk:
            report.shrunk[name] = shrunk
        if skipped:
            report.nonsmooth[name] = skipped
        numeric = np.asarray(numeric)
        a_sel = a.reshape(-1)[np.asarray(kept, dtype=np.int64)]
        scale = max(np.abs(a_sel).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
        report.errors[name] = float(np.abs(a_sel - numeric).max(initial=0.0) / scale)
    return report
