"""Scalar special functions used by the evidential objectives.

Thin validating wrappers over the kernel backends.  Each function accepts
a python float or a numpy array and returns the matching kind.

Accuracy targets (checked against an arbitrary-precision oracle in the
test suite): lgamma and digamma hold their recurrence identities over
[1e-3, 1e6] to 1e-9 plus the float64 representation floor of the values
being differenced; softplus_inv inverts softplus to 1e-10 relative.
"""

from __future__ import annotations

import numpy as np

from . import kernels as K


def _prepare(x, positive: bool, opname: str):
    arr = np.asarray(x, dtype=np.float64)
    if positive and not np.all(arr > 0.0):
        raise ValueError(f"{opname} requires strictly positive input")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{opname} requires finite input")
    return arr


def _finish(value, like):
    if np.isscalar(like) or getattr(like, "ndim", 1) == 0:
        return float(value if np.isscalar(value) else value.item())
    return value


def lgamma(x):
    """Natural log of the gamma function for x > 0."""
    arr = _prepare(x, positive=True, opname="lgamma")
    return _finish(K.lgamma_array(arr), x)


def digamma(x):
    """Logarithmic derivative of the gamma function for x > 0."""
    arr = _prepare(x, positive=True, opname="digamma")
    return _finish(K.digamma_array(arr), x)


def trigamma(x):
    """Second log-derivative of the gamma function; internal gradient helper."""
    arr = _prepare(x, positive=True, opname="trigamma")
    return _finish(K.trigamma_array(arr), x)


def softplus(x):
    """ln(1 + e^x), computed in the overflow-safe branch form."""
    arr = _prepare(x, positive=False, opname="softplus")
    return _finish(K.softplus_array(arr), x)


def softplus_inv(y):
    """Inverse of softplus: ln(e^y - 1) for y > 0."""
    arr = _prepare(y, positive=True, opname="softplus_inv")
    return _finish(K.softplus_inv_array(arr), y)


def sigmoid(x):
    """Logistic function; derivative of softplus (internal gradient helper)."""
    arr = _prepare(x, positive=False, opname="sigmoid")
    return _finish(K.sigmoid_array(arr), x)
