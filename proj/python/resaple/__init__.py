"""Python front end for the resaple C++ core.

Weight matrices are dense numpy arrays. ``x=None`` means an intercept-only
design; pass an ``(n, 0)`` array for no covariates at all.
"""

from ._core import (
    NumericalError,
    compare_weights,
    estimate,
    generate_sem,
    knn_weights,
    lattice_weights,
    local_tests,
    restricted_information,
    scatter,
    simulate,
    test,
    unrestricted_information,
)

__all__ = [
    "NumericalError",
    "compare_weights",
    "estimate",
    "generate_sem",
    "knn_weights",
    "lattice_weights",
    "local_tests",
    "restricted_information",
    "scatter",
    "simulate",
    "test",
    "unrestricted_information",
]
