"""Backend selection for the per-cell energy/flux/Hessian kernels.

The compiled extension is used when it imported cleanly; otherwise the pure
NumPy implementation takes over.  Set ``GAUGEFLOW_PURE=1`` to force the
NumPy path regardless of what was built.
"""

import os

from . import numpy_backend

_force_pure = os.environ.get("GAUGEFLOW_PURE", "").strip() not in ("", "0")

_impl = None
if not _force_pure:
    try:
        from . import chainkernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = None

if _impl is not None:
    BACKEND = "compiled"
else:
    _impl = numpy_backend
    BACKEND = "numpy"

cell_energy_flux = _impl.cell_energy_flux
cell_hvp = _impl.cell_hvp


def available_backends():
    names = ["numpy"]
    try:
        from . import chainkernels  # noqa: F401
    except ImportError:
        pass
    else:
        names.insert(0, "compiled")
    return names


def get_backend(name=None):
    """Return (cell_energy_flux, cell_hvp, label) for an explicit backend choice.

    ``name`` may be "compiled", "numpy", or None for the import-time default.
    """
    if name is None:
        return cell_energy_flux, cell_hvp, BACKEND
    if name == "numpy":
        return numpy_backend.cell_energy_flux, numpy_backend.cell_hvp, "numpy"
    if name == "compiled":
        from . import chainkernels
        return chainkernels.cell_energy_flux, chainkernels.cell_hvp, "compiled"
    raise ValueError(f"unknown backend {name!r}")
