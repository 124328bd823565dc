"""The numba and pure-numpy kernel paths must agree with each other and with brute force."""

import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sgvos import HAVE_NUMBA, kernels

from conftest import brute_bilateral, brute_sq_edt

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba disabled")


def _finite(d):
    return np.where(d >= kernels._FAR, np.inf, d)


@given(st.tuples(st.integers(1, 24), st.integers(1, 24)).flatmap(lambda s: arrays(np.bool_, s)))
def test_numpy_edt_matches_brute_force(m):
    assert np.array_equal(_finite(kernels.sq_edt_numpy(m)), brute_sq_edt(m))


@needs_numba
@given(st.tuples(st.integers(1, 24), st.integers(1, 24)).flatmap(lambda s: arrays(np.bool_, s)))
def test_numba_edt_matches_brute_force(m):
    assert np.array_equal(_finite(kernels.sq_edt_numba(m)), brute_sq_edt(m))


def test_edt_dispatch_reports_inf_for_empty():
    assert np.all(np.isinf(kernels.sq_edt(np.zeros((3, 4), bool))))


def test_bilateral_numpy_matches_direct_sum(rng):
    p, g = rng.random((9, 11)), rng.random((9, 11))
    ref = brute_bilateral(p, g, 1.5, 0.2, 3)
    np.testing.assert_allclose(kernels.bilateral_numpy(p, g, 1.5, 0.2, 3), ref, rtol=0, atol=1e-12)


@needs_numba
def test_bilateral_numba_matches_numpy(rng):
    p, g = rng.random((20, 14)), rng.random((20, 14))
    a = kernels.bilateral_numba(p, g, 2.0, 0.1, 4)
    b = kernels.bilateral_numpy(p, g, 2.0, 0.1, 4)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
    np.testing.assert_allclose(a, brute_bilateral(p, g, 2.0, 0.1, 4), rtol=0, atol=1e-12)


def test_benchmark_script_writes_reports(tmp_path):
    import json
    import runpy

    script = os.path.join(os.path.dirname(__file__), "..", "benchmarks", "bench_kernels.py")
    bench = runpy.run_path(script)
    bench["main"](["--out", str(tmp_path), "--sizes", "16", "--repeats", "1"])
    doc = json.loads((tmp_path / "kernels.json").read_text())
    assert {r["kernel"] for r in doc["rows"]} == {"sq_edt", "bilateral"}
    assert (tmp_path / "kernels.csv").read_text().startswith("kernel,size,backend,seconds\n")
