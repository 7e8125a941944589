"""Backend selection for the SGD inner loops.

The compiled extension is used when it imported cleanly; otherwise the numpy
fallback takes over.  Set STEPDECAY_LAB_BACKEND=python to force the fallback
(used by the benchmark and the cross-backend parity tests).  Both backends
produce bit-identical iterates for the same inputs.
"""

import os

from . import _pykernels

if os.environ.get("STEPDECAY_LAB_BACKEND", "").lower() == "python":
    _impl = _pykernels
else:
    try:
        from . import _cykernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND_NAME

run_quadratic = _impl.run_quadratic
run_bounded_nonconvex = _impl.run_bounded_nonconvex
run_logistic = _impl.run_logistic
adversarial_finals = _impl.adversarial_finals
