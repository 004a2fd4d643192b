"""Lane selection, caching, env overrides, and namespace completeness."""

import warnings

import numpy as np
import pytest

from extinctia._backend import (
    HAS_NUMBA,
    apply_thread_env,
    available_backends,
    default_backend,
    get_lane,
)
from extinctia._kernels import KERNELS


class TestSelection:
    def test_numpy_always_available(self):
        assert "numpy" in available_backends()

    def test_default_prefers_numba_when_present(self, monkeypatch):
        monkeypatch.delenv("EXTINCTIA_BACKEND", raising=False)
        assert default_backend() == ("numba" if HAS_NUMBA else "numpy")

    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("EXTINCTIA_BACKEND", " NumPy ")
        assert default_backend() == "numpy"
        assert get_lane() is get_lane("numpy")

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError):
            get_lane("fortran")

    def test_bad_env_value_rejected(self, monkeypatch):
        monkeypatch.setenv("EXTINCTIA_BACKEND", "cuda")
        with pytest.raises(ValueError):
            get_lane()

    def test_lanes_cached(self):
        assert get_lane("numpy") is get_lane("numpy")
        if HAS_NUMBA:
            assert get_lane("numba") is get_lane("numba")


class TestThreadEnv:
    def test_unset_is_noop(self, monkeypatch):
        monkeypatch.delenv("EXTINCTIA_THREADS", raising=False)
        apply_thread_env()

    @pytest.mark.skipif(not HAS_NUMBA, reason="thread control needs numba")
    def test_takes_effect_and_is_capped(self, monkeypatch):
        import numba

        try:
            monkeypatch.setenv("EXTINCTIA_THREADS", "1")
            apply_thread_env()
            assert numba.get_num_threads() == 1
            monkeypatch.setenv("EXTINCTIA_THREADS", "1000000")
            apply_thread_env()
            assert numba.get_num_threads() == numba.config.NUMBA_NUM_THREADS
        finally:
            numba.set_num_threads(numba.config.NUMBA_NUM_THREADS)

    def test_rejects_garbage(self, monkeypatch):
        monkeypatch.setenv("EXTINCTIA_THREADS", "many")
        if HAS_NUMBA:
            with pytest.raises(ValueError):
                apply_thread_env()
        monkeypatch.setenv("EXTINCTIA_THREADS", "0")
        if HAS_NUMBA:
            with pytest.raises(ValueError):
                apply_thread_env()


class TestLaneContents:
    def test_every_kernel_present_on_every_lane(self):
        for name in available_backends():
            lane = get_lane(name)
            for kernel in KERNELS:
                assert callable(getattr(lane, kernel)), (name, kernel)

    def test_numpy_lane_runs_silently(self):
        # interpreted Philox wraps uint64 arithmetic; the lane must keep
        # numpy's overflow chatter out of user-facing runs
        lane = get_lane("numpy")
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            out = lane.philox_raw(np.uint64(123), np.uint64(0), 512)
        assert out.dtype == np.uint64

    def test_lanes_compute_identically(self):
        if len(available_backends()) < 2:
            pytest.skip("single backend")
        a, b = get_lane("numpy"), get_lane("numba")
        probs = np.array([0.4, 0.1, 0.5])
        for t in (-3.0, -0.25, 0.0, 1.5):
            assert a.g_all(probs, t) == b.g_all(probs, t)
        for y in (0.3, 1.0, 1.4):
            assert a.legendre_kernel(probs, y, 1.0) == b.legendre_kernel(probs, y, 1.0)
