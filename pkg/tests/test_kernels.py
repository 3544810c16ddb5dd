import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decoyplace import kernels
from decoyplace.attack_graph import compute_attack_paths
from decoyplace.model import DecoyAllocation
from decoyplace.objective import count_daps
from decoyplace.oracle import random_dag

try:
    kernels.get_backend("cython")
    HAVE_CYTHON = True
except ImportError:
    HAVE_CYTHON = False

needs_cython = pytest.mark.skipif(not HAVE_CYTHON, reason="compiled extension not built")


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_pure_env_forces_fallback():
    code = "import decoyplace.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, DECOYPLACE_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_cython
@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.booleans())
def test_backends_agree_bitwise(seed, n, integer):
    g = random_dag(np.random.default_rng(seed), n, p=0.25, integer_weights=integer)
    a = compute_attack_paths(g, backend="python")
    b = compute_attack_paths(g, backend="cython")
    for name in ("dist", "sigma", "pred", "bc", "src", "tgt", "int_ptr", "int_nodes"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name), err_msg=name)


@needs_cython
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 25))
def test_dap_counts_agree(seed, n):
    rng = np.random.default_rng(seed)
    g = random_dag(rng, n, p=0.3, integer_weights=bool(seed % 2))
    x = DecoyAllocation.from_vector(g.vertices, rng.integers(0, 3, size=n))
    assert count_daps(g, x, backend="python") == count_daps(g, x, backend="cython")
