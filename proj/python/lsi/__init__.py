"""Surface-integral estimation on density level sets.

Thin re-export of the compiled module: KDE-based plugin/band/tube estimators
for integrals over density level sets, curvature integrands, Minkowski
functionals, and Euler characteristics.
"""

try:
    # installed wheel: the compiled module lives inside the package
    from lsi._lsi import (  # noqa: F401
        InvalidArgument,
        NumericalError,
        default_bandwidth,
        estimate,
        estimate_gaussian,
        euler_characteristic,
        gaussian_level_radius,
        minkowski,
        sample_gaussian,
    )
except ImportError:
    # in-tree runs: the compiled module sits on PYTHONPATH (build directory)
    from _lsi import (  # noqa: F401
        InvalidArgument,
        NumericalError,
        default_bandwidth,
        estimate,
        estimate_gaussian,
        euler_characteristic,
        gaussian_level_radius,
        minkowski,
        sample_gaussian,
    )

__all__ = [
    "InvalidArgument",
    "NumericalError",
    "default_bandwidth",
    "estimate",
    "estimate_gaussian",
    "euler_characteristic",
    "gaussian_level_radius",
    "minkowski",
    "sample_gaussian",
]
