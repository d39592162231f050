"""etnkit: post-hoc evidential Dirichlet heads for frozen classifiers.

A trained classifier's logits are reinterpreted as Dirichlet evidence and
rescaled by a small variational network that predicts a per-input logit
transformation.  The package covers the full loop at desk scale:
synthetic data, base-model pretraining, transformation-network training,
uncertainty scoring, detection metrics, and executable checks of the
supporting margin/concentration theory.
"""

from .kernels import available_backends, backend_name, set_backend

__version__ = "0.1.0"

__all__ = ["available_backends", "backend_name", "set_backend", "__version__"]
