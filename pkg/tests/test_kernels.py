import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from dgcalc import build_triangulated, local_derivative_matrices
from dgcalc import kernels
from dgcalc.kernels import _pykernels

try:
    from dgcalc.kernels import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None

needs_c = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


def _args(n, r, seed=0):
    mesh = build_triangulated([(0.0, 1.0), (0.0, 1.0)], n)
    loc = local_derivative_matrices(mesh, r)
    selfb, nbrb = loc.blocks(1, "-")
    rng = np.random.default_rng(seed)
    beta = rng.standard_normal(loc.minv.shape[:2])
    extra = rng.standard_normal(beta.shape)
    return tuple(np.ascontiguousarray(a) for a in (selfb, loc.nbr.astype(np.int64), nbrb, beta, extra, loc.minv))


@needs_c
@pytest.mark.parametrize("r", [0, 1, 2, 3])
def test_apply_local_backends_agree(r):
    args = _args(5, r, r)
    a = _pykernels.apply_local(*args)
    b = _ckernels.apply_local(*args)
    np.testing.assert_allclose(b, a, rtol=1e-13, atol=1e-12 * np.abs(a).max())


@needs_c
@pytest.mark.parametrize("r", [0, 2])
def test_quad_values_backends_agree(r):
    rng = np.random.default_rng(1)
    coeffs = rng.standard_normal((7, (r + 1) * (r + 2) // 2))
    table = rng.standard_normal((9, coeffs.shape[1]))
    np.testing.assert_allclose(_ckernels.quad_values(coeffs, table), _pykernels.quad_values(coeffs, table),
                               rtol=1e-13, atol=1e-13)


def test_dispatch_matches_reference():
    args = _args(3, 1)
    np.testing.assert_allclose(kernels.apply_local(*args), _pykernels.apply_local(*args), atol=1e-12)
    assert kernels.BACKEND in ("cython", "python")


def test_pure_python_fallback_selected_by_environment():
    code = textwrap.dedent("""
        import numpy as np
        from dgcalc import kernels, build_cartesian, project, discrete_partial
        m = build_cartesian(1, [(0.0, 1.0)], (4,))
        u = project(lambda x: x[:, 0] ** 2, m, 1)
        print(kernels.BACKEND)
        print(repr(float(discrete_partial(u, 0, "+").coeffs.sum())))
    """)
    env = dict(os.environ, DGCALC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, value = out.stdout.split()
    assert backend == "python"
    from dgcalc import build_cartesian, discrete_partial, project

    m = build_cartesian(1, [(0.0, 1.0)], (4,))
    ref = discrete_partial(project(lambda x: x[:, 0] ** 2, m, 1), 0, "+").coeffs.sum()
    assert float(value) == pytest.approx(ref, abs=1e-12)
