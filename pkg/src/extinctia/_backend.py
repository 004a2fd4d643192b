"""Two execution lanes over one kernel source.

The numba lane clones every function in _kernels into a fresh namespace and
jits the clones in place, so kernel-to-kernel calls resolve to the compiled
dispatchers and the replica loops actually run in parallel. The numpy lane is
the interpreted originals, with uint64 overflow warnings silenced at the entry
points (the RNG core wraps on purpose).

Selection: EXTINCTIA_BACKEND=numba|numpy, defaulting to numba when it imports.
EXTINCTIA_THREADS caps the parallel thread count on the numba lane.
"""
import functools
import os
import types
import warnings

import numpy as np

from . import _kernels

try:
    # stale TBB installs downgrade the threading layer with a warning; the
    # fallback layer is fine and the noise would reach CLI stderr
    warnings.filterwarnings(
        "ignore", message="The TBB threading layer requires TBB version"
    )
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only on numba-free installs
    numba = None
    HAS_NUMBA = False

# kernels containing a prange replica loop
_PARALLEL = {"gw_mc_kernel", "feller_mc_kernel"}

_lanes = {}


def _quiet(fn):
    @functools.wraps(fn)
    def wrapper(*args):
        with np.errstate(over="ignore"):
            return fn(*args)

    return wrapper


def _build_numpy_lane():
    lane = types.SimpleNamespace(name="numpy")
    for name in _kernels.KERNELS:
        setattr(lane, name, _quiet(getattr(_kernels, name)))
    return lane


def _build_numba_lane():
    # Clones share one globals dict; once it is updated with the jitted
    # dispatchers, inner calls compile against them instead of the
    # interpreted originals.
    shared = dict(_kernels.__dict__)
    shared["prange"] = numba.prange
    jitted = {}
    for name in _kernels.KERNELS:
        fn = getattr(_kernels, name)
        clone = types.FunctionType(fn.__code__, shared, fn.__name__, fn.__defaults__)
        jitted[name] = numba.njit(clone, parallel=(name in _PARALLEL))
    shared.update(jitted)
    lane = types.SimpleNamespace(name="numba", **jitted)
    return lane


def available_backends():
    """Backend names usable in this environment."""
    return ("numba", "numpy") if HAS_NUMBA else ("numpy",)


def default_backend():
    name = os.environ.get("EXTINCTIA_BACKEND", "").strip().lower()
    if not name:
        return "numba" if HAS_NUMBA else "numpy"
    return name


def get_lane(backend=None):
    """Kernel namespace for the requested backend (default from the
    environment). Lanes are built once and cached."""
    name = backend or default_backend()
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("backend 'numba' requested but numba is not importable")
    lane = _lanes.get(name)
    if lane is None:
        lane = _build_numba_lane() if name == "numba" else _build_numpy_lane()
        _lanes[name] = lane
    return lane


def apply_thread_env():
    """Honor EXTINCTIA_THREADS for the numba parallel loops. No-op on the
    numpy lane or when unset."""
    raw = os.environ.get("EXTINCTIA_THREADS", "").strip()
    if not raw or not HAS_NUMBA:
        return
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"EXTINCTIA_THREADS must be a positive integer, got {raw!r}")
    if n < 1:
        raise ValueError(f"EXTINCTIA_THREADS must be a positive integer, got {raw!r}")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
