"""Rotation anchors, 3D RANSAC center voting and ADD-family pose metrics.

Modules: ``so3`` (quaternions), ``anchors`` (finite rotation groups),
``losses``, ``voting``, ``metrics``, ``optim`` (descent fitting on SO(3)),
``model_io`` (PLY and synthetic shapes), ``bench`` (end-to-end harness)
and ``cli``. Hot loops live in ``kernels``, which picks the compiled
backend when it was built and numpy otherwise.
"""

__version__ = "0.1.0"

from . import anchors, kernels, losses, metrics, model_io, optim, so3, voting  # noqa: E402

__all__ = ["anchors", "kernels", "losses", "metrics", "model_io", "optim", "so3", "voting", "__version__"]
