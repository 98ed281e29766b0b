"""Backend selection for the hot edge-product kernels.

The compiled extension is preferred; if it is missing (pure-source install)
the operator falls back to scipy sparse products.  Set ``GTFREC_NO_FAST=1``
to force the fallback, e.g. for benchmarking.
"""

import os

HAVE_FAST = False
incidence_forward = None
incidence_adjoint = None

if not os.environ.get("GTFREC_NO_FAST"):
    try:
        from ._fast import incidence_adjoint, incidence_forward  # noqa: F811
        HAVE_FAST = True
    except ImportError:
        pass

BACKEND = "cython" if HAVE_FAST else "scipy"
