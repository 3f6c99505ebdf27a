import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homemoe import kernels
from homemoe._accel import HAS_NUMBA

from conftest import brute_force_auc


def _bn_case(seed, B=17, D=5):
    r = np.random.default_rng(seed)
    return r.normal(1.0, 2.0, size=(B, D)), r.normal(size=D), r.normal(size=D)


@pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("seed", range(5))
def test_bn_forward_paths_agree(seed):
    z, gamma, beta = _bn_case(seed)
    for a, b in zip(kernels.bn_forward_jit(z, gamma, beta, 1e-5), kernels.bn_forward_np(z, gamma, beta, 1e-5)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


@pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("seed", range(5))
def test_bn_backward_paths_agree(seed):
    z, gamma, beta = _bn_case(seed)
    _, xhat, _, _, inv_std = kernels.bn_forward_np(z, gamma, beta, 1e-5)
    dout = np.random.default_rng(seed + 100).normal(size=z.shape)
    for a, b in zip(kernels.bn_backward_jit(dout, xhat, inv_std, gamma),
                    kernels.bn_backward_np(dout, xhat, inv_std, gamma)):
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-13)


def _groups(r, n_groups, max_size, ties):
    sizes = r.integers(1, max_size + 1, size=n_groups)
    starts = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    n = starts[-1]
    scores = r.integers(0, 4, size=n).astype(float) if ties else r.normal(size=n)
    labels = (r.random(n) < 0.4).astype(float)
    return scores, labels, starts


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 12), st.integers(1, 15), st.booleans())
def test_grouped_auc_matches_brute_force(seed, n_groups, max_size, ties):
    r = np.random.default_rng(seed)
    scores, labels, starts = _groups(r, n_groups, max_size, ties)
    impls = [kernels.grouped_auc_np] + ([kernels.grouped_auc_jit] if HAS_NUMBA else [])
    for impl in impls:
        aucs, n_pos = impl(scores, labels, starts)
        for g in range(n_groups):
            s, y = scores[starts[g]:starts[g + 1]], labels[starts[g]:starts[g + 1]]
            assert n_pos[g] == y.sum()
            if 0 < y.sum() < len(y):
                assert abs(aucs[g] - brute_force_auc(s, y)) < 1e-12
            else:
                assert np.isnan(aucs[g])


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, HOMEMOE_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "from homemoe import kernels; print(kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


@pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")
def test_default_backend_is_numba(monkeypatch):
    env = {k: v for k, v in os.environ.items() if k != "HOMEMOE_DISABLE_NUMBA"}
    out = subprocess.run([sys.executable, "-c", "from homemoe import kernels; print(kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numba"


def test_benchmark_script_runs(capsys):
    import runpy
    from pathlib import Path
    mod = runpy.run_path(str(Path(__file__).parent.parent / "benchmarks" / "bench_kernels.py"))
    mod["main"](["--repeat", "1"])
    out = capsys.readouterr().out
    assert "grouped_auc" in out and "speedup" in out
