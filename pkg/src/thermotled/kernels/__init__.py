"""Element/node kernel backends.

The compiled Cython module is used when it was built; otherwise the numpy
implementation is. Set ``THERMOTLED_KERNELS=numpy`` (or ``cython``) to force
a choice at import.
"""
import importlib
import os

from . import _pykernels

_BACKENDS = {"numpy": "._pykernels", "cython": "._ckernels"}


def load_backend(name: str):
    """Import backend ``name`` ('numpy' or 'cython'); raises ImportError if unavailable."""
    try:
        module = _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown kernel backend {name!r}; choose from {sorted(_BACKENDS)}") from None
    return importlib.import_module(module, __name__)


def available_backends() -> list[str]:
    names = []
    for name in _BACKENDS:
        try:
            load_backend(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _select():
    forced = os.environ.get("THERMOTLED_KERNELS")
    if forced:
        return load_backend(forced)
    try:
        return load_backend("cython")
    except ImportError:
        return _pykernels


default = _select()
