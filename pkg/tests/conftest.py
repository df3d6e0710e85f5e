import numpy as np

from gpt_acn import tensor as T


def finite_difference_grad(f, params, step=1e-5, max_coords=None, rng=None):
    """Central finite differences of scalar f() w.r.t. a list of Tensors.

    Returns one ndarray per tensor.  When max_coords is given, only that many
    randomly chosen coordinates per tensor are probed; unprobed entries are nan.
    """
    grads = []
    for p in params:
        g = np.full(p.data.shape, np.nan)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + step
            hi = f()
            flat[i] = orig - step
            lo = f()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


def analytic_grads(loss_fn, params):
    """Run loss_fn under a fresh record, backward, and return grads."""
    for p in params:
        p.zero_grad()
    with T.ComputationRecord():
        loss = loss_fn()
        T.backward(loss)
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


def assert_grads_close(loss_fn, params, rel=1e-4, step=1e-5, max_coords=None, rng=None):
    ana = analytic_grads(loss_fn, params)
    num = finite_difference_grad(lambda: loss_fn_value(loss_fn), params,
                                 step=step, max_coords=max_coords, rng=rng)
    for a, n in zip(ana, num):
        probed = ~np.isnan(n)
        denom = np.maximum(np.maximum(np.abs(a[probed]), np.abs(n[probed])), 1e-3)
        err = np.abs(a[probed] - n[probed]) / denom
        assert err.size == 0 or err.max() <= rel, f"max rel err {err.max():.3e}"


def loss_fn_value(loss_fn):
    with T.no_grad():
        return loss_fn().item()
