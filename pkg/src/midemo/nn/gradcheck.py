"""Central finite-difference verification of the analytic backward pass."""

from dataclasses import dataclass, field

import numpy as np

from .losses import mse, mse_grad


@dataclass
class GradCheckReport:
    tolerance: float
    max_rel_error: dict = field(default_factory=dict)
    checked: dict = field(default_factory=dict)
    excluded: dict = field(default_factory=dict)
    near_kink: int = 0
    floor: float = 1e-8

    @property
    def worst(self):
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self):
        return self.worst < self.tolerance

    def failures(self):
        return {k: v for k, v in self.max_rel_error.items() if v >= self.tolerance}


def _same_kinks(a, b):
    return all(x is None or np.array_equal(x, y) for x, y in zip(a, b))


def relative_error(analytic, numeric, floor=1e-8):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(network, x, target, tolerance=1e-4, h=1e-4, train=True, seed=0,
               kink_margin=1e-3, check_input=True, max_params=10_000):
    """Compare backprop gradients of ``mse(network(x), target)`` with central differences.

    Runs on a float64 copy of ``network``. Dropout masks are replayed from
    ``seed`` on every evaluation. Coordinates whose +h or -h perturbation
    flips any ReLU or max-pool decision are excluded and counted;
    ``report.near_kink`` counts ReLU inputs within ``kink_margin`` of zero
    at the base point.

    Central differences cannot resolve gradients much below
    ``eps * |loss| / h``, so the relative-error denominator is floored at
    ``8 * eps * |loss| / (h * tolerance)`` (and at least 1e-8). Exactly zero
    gradients, such as a bias feeding a train-mode batch norm, then compare
    in absolute terms instead of failing on rounding noise.
    """
    net = network.astype(np.float64)
    if net.n_parameters() > max_params:
        raise ValueError(f"network has {net.n_parameters()} parameters; limit is {max_params}")
    x = np.array(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)

    def run(inp):
        out, tape = net.forward(inp, train=train, rng=np.random.default_rng(seed))
        return out, tape

    out, tape = run(x)
    base_kinks = net.kink_signatures(tape)
    near_kink = sum(
        int(np.sum(np.abs(cache[1]) < kink_margin))
        for layer, cache in zip(net.layers, tape.caches) if layer.kind == "relu"
    )
    grads, gx = net.backward(tape, mse_grad(out, target))

    loss = abs(mse(out, target))
    floor = max(1e-8, 8 * np.finfo(np.float64).eps * loss / (h * tolerance))
    report = GradCheckReport(tolerance, near_kink=near_kink, floor=floor)
    targets = list(zip([n for n, _ in net.parameters()], net.param_arrays(), grads))
    if check_input:
        targets.append(("input", x, gx))

    for name, arr, g in targets:
        worst, n_checked, n_excl = 0.0, 0, 0
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            out_p, tape_p = run(x)
            flat[k] = orig - h
            out_m, tape_m = run(x)
            flat[k] = orig
            if not (_same_kinks(base_kinks, net.kink_signatures(tape_p))
                                 and _same_kinks(base_kinks, net.kink_signatures(tape_m))):
                n_excl += 1
                continue
            numeric = (mse(out_p, target) - mse(out_m, target)) / (2 * h)
            worst = max(worst, relative_error(float(gflat[k]), numeric, floor))
            n_checked += 1
        report.max_rel_error[name] = worst
        report.checked[name] = n_checked
        report.excluded[name] = n_excl
    return report
