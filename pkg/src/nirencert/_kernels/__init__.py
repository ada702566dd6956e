"""Hot kernels: compiled when available, pure Python otherwise.

Set ``NIRENCERT_PURE=1`` to force the fallback.  ``BACKEND`` names the
implementation that was selected at import.
"""
import os

from . import _pykernels as python

compiled = None
if os.environ.get("NIRENCERT_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else python
BACKEND = "cython" if compiled is not None else "python"

least_eigenvalue = _impl.least_eigenvalue
symmetric_eigenvalues = _impl.symmetric_eigenvalues
subset_spectra = _impl.subset_spectra
pair_interactions = _impl.pair_interactions

__all__ = [
    "BACKEND", "compiled", "python", "least_eigenvalue", "symmetric_eigenvalues",
    "subset_spectra", "pair_interactions",
]
