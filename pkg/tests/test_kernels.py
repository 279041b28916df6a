import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from randbench import _kernels_py, kernels

try:
    from randbench import _kernels as _compiled
except ImportError:  # extension not built in this environment
    _compiled = None

needs_ext = pytest.mark.skipif(_compiled is None, reason="compiled kernel not built")


def _table(rng, k=5, d=4):
    return rng.normal(size=(k, d, d))


class TestFallback:
    def test_matches_matrix_product(self, rng):
        table = _table(rng)
        codes = rng.integers(0, 5, size=30).astype(np.int32)
        vec = rng.normal(size=4)
        ref = vec.copy()
        for c in codes:
            ref = table[c] @ ref
        np.testing.assert_allclose(_kernels_py.propagate(table, codes, vec), ref, rtol=1e-12)

    def test_out_of_range(self, rng):
        with pytest.raises(IndexError):
            _kernels_py.propagate(_table(rng), np.array([0, 7], dtype=np.int32), np.ones(4))

    def test_empty_sequence_is_identity(self, rng):
        vec = rng.normal(size=4)
        np.testing.assert_array_equal(_kernels_py.propagate(_table(rng), np.zeros(0, np.int32), vec), vec)

    def test_many_respects_lengths(self, rng):
        table = _table(rng)
        codes = rng.integers(0, 5, size=(3, 10)).astype(np.int32)
        lengths = np.array([0, 4, 10])
        vec = rng.normal(size=4)
        out = _kernels_py.propagate_many(table, codes, lengths, vec)
        for s in range(3):
            np.testing.assert_allclose(out[s], _kernels_py.propagate(table, codes[s, : lengths[s]], vec))


@needs_ext
class TestCompiled:
    def test_backend_selected(self):
        assert kernels.BACKEND == "cython"

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(0, 60), st.sampled_from([4, 16]))
    def test_agrees_with_fallback(self, seed, n, dim):
        rng = np.random.default_rng(seed)
        table = _table(rng, 6, dim)
        codes = rng.integers(0, 6, size=n).astype(np.int32)
        vec = rng.normal(size=dim)
        ref = _kernels_py.propagate(table, codes, vec)
        # unnormalized random tables grow the vector; summation order differs between backends
        scale = max(1.0, float(np.abs(ref).max()))
        np.testing.assert_allclose(_compiled.propagate(table, codes, vec), ref, rtol=1e-12, atol=1e-12 * scale)

    def test_many_agrees(self, rng):
        table = _table(rng, 18, 4)
        codes = rng.integers(0, 18, size=(20, 50)).astype(np.int32)
        lengths = rng.integers(0, 51, size=20).astype(np.int64)
        vec = rng.normal(size=4)
        np.testing.assert_allclose(
            _compiled.propagate_many(table, codes, lengths, vec),
            _kernels_py.propagate_many(table, codes, lengths, vec),
            rtol=1e-12,
        )

    def test_out_of_range(self, rng):
        with pytest.raises(IndexError):
            kernels.propagate(_table(rng), [0, -1], np.ones(4))
        with pytest.raises(IndexError):
            kernels.propagate_many(_table(rng), np.zeros((1, 2)), [3], np.ones(4))


def test_wrapper_coerces_dtypes(rng):
    table = _table(rng).tolist()
    out = kernels.propagate(table, [1, 2, 3], [1.0, 0.0, 0.0, 0.0])
    assert out.dtype == np.float64 and out.shape == (4,)


def test_env_var_forces_fallback():
    env = dict(os.environ, RANDBENCH_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from randbench import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
