import os
import subprocess
import sys

import numpy as np
import pytest

from dccfr import kernels
from dccfr.kernels import layer_offsets

RNG = np.random.default_rng(0)


def _net(sizes):
    sizes = np.asarray(sizes, dtype=np.int64)
    w_off, b_off, h_off, total = layer_offsets(sizes)
    theta = RNG.normal(0, 0.3, total)
    return sizes, w_off, b_off, h_off, theta


def test_layer_offsets_layout():
    sizes, w_off, b_off, h_off, theta = _net((14, 128, 64, 16, 3))
    assert w_off.tolist() == [0, 14 * 128 + 128, 14 * 128 + 128 + 128 * 64 + 64,
                              14 * 128 + 128 + 128 * 64 + 64 + 64 * 16 + 16]
    assert h_off.tolist() == [0, 128, 192, 208]
    assert theta.size == 14 * 128 + 128 + 128 * 64 + 64 + 64 * 16 + 16 + 16 * 3 + 3


def test_forward_reference_implementation():
    sizes, w_off, b_off, h_off, theta = _net((5, 7, 4, 2))
    x = RNG.normal(size=(6, 5))
    y, h = kernels.mlp_forward(theta, sizes, w_off, b_off, h_off, x)

    # plain-numpy reference built independently from the flat layout
    a = x
    col = 0
    for layer in range(3):
        nin, nout = int(sizes[layer]), int(sizes[layer + 1])
        w = theta[w_off[layer]:w_off[layer] + nin * nout].reshape(nin, nout)
        b = theta[b_off[layer]:b_off[layer] + nout]
        z = a @ w + b
        if layer < 2:
            a = np.tanh(z)
            assert np.allclose(h[:, col:col + nout], a, atol=1e-12)
            col += nout
        else:
            assert np.allclose(y, z, atol=1e-12)


def test_gae_scan_terminal_bootstrap():
    adv, ret = kernels.gae_scan(np.array([1.0]), np.array([0.0]), 5.0,
                                np.array([1.0]), 0.9, 0.9)
    assert adv[0] == 1.0  # done masks the bootstrap entirely
    adv, ret = kernels.gae_scan(np.array([1.0]), np.array([0.0]), 5.0,
                                np.array([0.0]), 0.9, 0.9)
    assert adv[0] == pytest.approx(1.0 + 0.9 * 5.0)


def test_ou_scan_start_and_recursion():
    z = np.array([0.5, -1.0, 2.0])
    x = kernels.ou_scan(z, 0.2, 0.4, 1.0)
    assert x[0] == 0.0
    expect = 0.0
    for t in range(3):
        expect = expect + 0.2 * (1.0 - expect) + 0.4 * z[t]
        assert x[t + 1] == pytest.approx(expect, rel=1e-15)


def test_numpy_fallback_backend_subprocess():
    # the fallback path must produce the same results to float tolerance
    code = (
        "import numpy as np\n"
        "from dccfr import kernels\n"
        "assert kernels.BACKEND == 'numpy', kernels.BACKEND\n"
        "from dccfr.kernels import layer_offsets\n"
        "sizes = np.array([4, 8, 2], dtype=np.int64)\n"
        "w_off, b_off, h_off, total = layer_offsets(sizes)\n"
        "rng = np.random.default_rng(3)\n"
        "theta = rng.normal(0, 0.3, total)\n"
        "x = rng.normal(size=(5, 4))\n"
        "y, h = kernels.mlp_forward(theta, sizes, w_off, b_off, h_off, x)\n"
        "print(repr(float(y.sum())))\n"
    )
    env = dict(os.environ, DCCFR_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    # same computation on the active backend
    sizes = np.array([4, 8, 2], dtype=np.int64)
    w_off, b_off, h_off, total = layer_offsets(sizes)
    rng = np.random.default_rng(3)
    theta = rng.normal(0, 0.3, total)
    x = rng.normal(size=(5, 4))
    y, _ = kernels.mlp_forward(theta, sizes, w_off, b_off, h_off, x)
    assert float(out.stdout.strip().replace("np.float64(", "").rstrip(")")) == pytest.approx(
        float(y.sum()), rel=1e-12)


def test_backend_reports_a_known_value():
    assert kernels.BACKEND in ("numba", "numpy")
