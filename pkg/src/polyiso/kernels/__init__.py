"""Hot geometric kernels.

The compiled extension ``_ckernels`` is used when it was built; otherwise the
numpy implementations in ``_pykernels`` are selected.  Set
``POLYISO_PURE_PYTHON=1`` to force the fallback.

Kernels
-------
chord_image_lengths
    Exact image lengths of straight chords under a piecewise-affine map.
simplex_distances
    Exact Euclidean distances between batches of simplex pairs.
"""
import os

from . import _pykernels

BACKEND = "python"
chord_image_lengths = _pykernels.chord_image_lengths
simplex_distances = _pykernels.simplex_distances

if os.environ.get("POLYISO_PURE_PYTHON") != "1":
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        chord_image_lengths = _ckernels.chord_image_lengths
        simplex_distances = _ckernels.simplex_distances

__all__ = ["BACKEND", "chord_image_lengths", "simplex_distances"]
