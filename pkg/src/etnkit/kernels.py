"""Numerical kernel dispatch.

The package ships two interchangeable kernel backends: a compiled Cython
module and a pure numpy fallback implementing identical algorithms.  The
compiled one is preferred when its import succeeds; everything else in the
package reaches the active backend through this module's attributes, so
``set_backend`` swaps implementations at runtime (used by the benchmark
and the parity tests).

Backend selection never touches environment variables.
"""

from __future__ import annotations

from . import _pykernels

_BACKENDS = {"python": _pykernels}

try:  # compiled twin is optional
    from . import _ckernels

    _BACKENDS["cython"] = _ckernels
except ImportError:  # pragma: no cover - depends on the build
    pass

_ACTIVE = _BACKENDS.get("cython", _pykernels)


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def backend_name() -> str:
    return _ACTIVE.name


def set_backend(name: str) -> None:
    """Select the active kernel backend ("python" or "cython")."""
    global _ACTIVE
    try:
        _ACTIVE = _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown backend {name!r}; available: {', '.join(available_backends())}"
        ) from None


def get_backend(name: str):
    """Return a backend module without activating it."""
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown backend {name!r}; available: {', '.join(available_backends())}"
        ) from None


def __getattr__(attr: str):
    # Late-bound so set_backend affects call sites that did
    # `from etnkit import kernels as K` and call `K.fn(...)`.
    return getattr(_ACTIVE, attr)
