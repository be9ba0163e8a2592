"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The kernels below dominate runtime (MLP forward/backward inside the rollout
and update loops, the GAE scan, the OU noise scan). Each is written once in
numba-compatible numpy; when numba is importable and not disabled, the same
function objects are compiled with ``@njit(cache=True)``.

Backend selection: set ``DCCFR_BACKEND=numpy`` to force the fallback, or
``DCCFR_BACKEND=numba`` to require the JIT (raises if numba is missing).
Default is numba when available. ``benchmarks/bench_kernels.py`` compares
the two paths.
"""

import os

import numpy as np


def _pick_backend() -> str:
    want = os.environ.get("DCCFR_BACKEND", "").strip().lower()
    if want == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if want == "numba":
            raise
        return "numpy"
    return "numba"


BACKEND = _pick_backend()


def layer_offsets(sizes):
    """Flat-parameter layout for an MLP with the given layer sizes.

    Returns (w_off, b_off, h_off, n_params): per-layer offsets of the
    weight block and bias block inside the flat parameter vector, column
    offsets of each hidden layer inside the activation scratch buffer,
    and the total parameter count.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    n_layers = sizes.size - 1
    w_off = np.empty(n_layers, dtype=np.int64)
    b_off = np.empty(n_layers, dtype=np.int64)
    total = 0
    for layer in range(n_layers):
        w_off[layer] = total
        total += int(sizes[layer] * sizes[layer + 1])
        b_off[layer] = total
        total += int(sizes[layer + 1])
    # h_off[l] is the start column of hidden layer l; the last entry is the
    # total hidden width (so h_off[l]:h_off[l+1] slices hidden layer l).
    h_off = np.zeros(n_layers, dtype=np.int64)
    acc = 0
    for layer in range(n_layers - 1):
        h_off[layer] = acc
        acc += int(sizes[layer + 1])
    h_off[n_layers - 1] = acc
    return w_off, b_off, h_off, total


def mlp_forward(theta, sizes, w_off, b_off, h_off, x):
    """Forward pass: tanh hidden layers, linear output.

    x is (n, sizes[0]); returns (y, h) where y is (n, sizes[-1]) and h is
    the (n, sum(hidden)) post-tanh activation buffer needed for backward.
    """
    n = x.shape[0]
    n_layers = sizes.shape[0] - 1
    h = np.empty((n, h_off[n_layers - 1]), dtype=np.float64)
    a = x
    y = np.empty((n, sizes[n_layers]), dtype=np.float64)
    for layer in range(n_layers):
        nin = sizes[layer]
        nout = sizes[layer + 1]
        w = theta[w_off[layer]:w_off[layer] + nin * nout].reshape(nin, nout)
        z = np.dot(a, w) + theta[b_off[layer]:b_off[layer] + nout]
        if layer < n_layers - 1:
            a = np.tanh(z)
            h[:, h_off[layer]:h_off[layer + 1]] = a
        else:
            y = z
    return y, h


def mlp_backward(theta, sizes, w_off, b_off, h_off, x, h, dy):
    """Backward pass given dL/dy; returns the flat parameter gradient."""
    n_layers = sizes.shape[0] - 1
    grad = np.zeros_like(theta)
    g = dy
    for layer in range(n_layers - 1, -1, -1):
        nin = sizes[layer]
        nout = sizes[layer + 1]
        if layer == 0:
            a_prev = x
        else:
            a_prev = h[:, h_off[layer - 1]:h_off[layer]]
        gw = np.dot(np.ascontiguousarray(a_prev.T), g)
        grad[w_off[layer]:w_off[layer] + nin * nout] = gw.ravel()
        grad[b_off[layer]:b_off[layer] + nout] = g.sum(axis=0)
        if layer > 0:
            w = theta[w_off[layer]:w_off[layer] + nin * nout].reshape(nin, nout)
            g = np.dot(g, np.ascontiguousarray(w.T)) * (1.0 - a_prev * a_prev)
    return grad


def gae_scan(rewards, values, bootstrap_value, dones, gamma, lam):
    """Reverse scan for generalized advantage estimation.

    dones is float64 (1.0 terminal); the recursion is cut at terminals and
    the bootstrap value only feeds the final step when it is non-terminal.
    Returns (advantages, returns) with returns = advantages + values.
    """
    n = rewards.shape[0]
    adv = np.empty(n, dtype=np.float64)
    ret = np.empty(n, dtype=np.float64)
    running = 0.0
    for t in range(n - 1, -1, -1):
        not_done = 1.0 - dones[t]
        v_next = bootstrap_value if t == n - 1 else values[t + 1]
        delta = rewards[t] + gamma * v_next * not_done - values[t]
        running = delta + gamma * lam * not_done * running
        adv[t] = running
        ret[t] = running + values[t]
    return adv, ret


def ou_scan(z, theta, sigma, mu):
    """Discrete Ornstein-Uhlenbeck path from standard-normal draws z.

    X[0] = 0 and X[t+1] = X[t] + theta*(mu - X[t]) + sigma*z[t]; the output
    has len(z) + 1 entries.
    """
    n = z.shape[0] + 1
    x = np.empty(n, dtype=np.float64)
    x[0] = 0.0
    for t in range(n - 1):
        x[t + 1] = x[t] + theta * (mu - x[t]) + sigma * z[t]
    return x


if BACKEND == "numba":
    from numba import njit

    mlp_forward = njit(cache=True)(mlp_forward)
    mlp_backward = njit(cache=True)(mlp_backward)
    gae_scan = njit(cache=True)(gae_scan)
    ou_scan = njit(cache=True)(ou_scan)
