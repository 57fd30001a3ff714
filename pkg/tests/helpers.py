import numpy as np


def central_difference(fn, param, step=1e-5):
    """Numerical gradient of the scalar ``fn()`` wrt the array ``param`` (perturbed in place)."""
    grad = np.zeros_like(param)
    flat, gflat = param.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = fn()
        flat[i] = orig - step
        down = fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * step)
    return grad


def relative_error(analytic, numeric, floor=1e-8):
    """max |a - n| / max(|a| + |n|, floor), over all entries."""
    a, n = np.asarray(analytic).ravel(), np.asarray(numeric).ravel()
    scale = max(np.max(np.abs(a) + np.abs(n), initial=0.0), floor)
    return float(np.max(np.abs(a - n), initial=0.0) / scale)
