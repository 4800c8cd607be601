"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; the NumPy
fallback is always available.  Set ``KWC_BACKEND=numpy`` (or ``compiled``)
to force a choice; forcing ``compiled`` when the extension is missing is an
import error rather than a silent fallback.

Both backends implement, with identical signatures and semantics:

- ``grad_faces(v, hx, hy, gx, gy)``
- ``div_weighted(gx, gy, hx, hy, fx, fy, w, out)``
- ``apply_diffusion(v, cfx, cfy, shift, hx, hy, fx, fy, w, dirichlet, out)``
- ``diffusion_diagonal(cfx, cfy, shift, hx, hy, fx, fy, w, dirichlet, out)``
"""

from __future__ import annotations

import os

from . import numpy_backend

_forced = os.environ.get("KWC_BACKEND", "").strip().lower()

if _forced == "numpy":
    _impl = numpy_backend
elif _forced == "compiled":
    from . import _stencil as _impl  # type: ignore[no-redef]
else:
    try:
        from . import _stencil as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = numpy_backend

BACKEND = _impl.NAME
grad_faces = _impl.grad_faces
div_weighted = _impl.div_weighted
apply_diffusion = _impl.apply_diffusion
diffusion_diagonal = _impl.diffusion_diagonal

__all__ = [
    "BACKEND",
    "grad_faces",
    "div_weighted",
    "apply_diffusion",
    "diffusion_diagonal",
    "numpy_backend",
]
