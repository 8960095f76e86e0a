# msmbayes/quadrature.py
"""
Composite Gauss-Legendre quadrature with geometric grading toward endpoint
singularities.

Weibull hazards with shape < 1 make integrands behave like u**(alpha - 1)
near u = 0, and the clock-reset survival in the refracture occupancy
integrand has a kink at the upper limit. Panels next to such an endpoint are
split geometrically with ratio 2 until the innermost panel carries less than
``singular_floor`` of probability mass.

Integrands are vectorized: they receive a 1-D array of nodes and return an
array whose last axis runs over the nodes, so one call integrates every
posterior draw at once.
"""
import math
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np

from msmbayes.errors import QuadratureError
from msmbayes.logger import get_logger
from msmbayes.schemas import QuadratureConfig

logger = get_logger(__name__)

Integrand = Callable[[np.ndarray], np.ndarray]


@lru_cache(maxsize=16)
def legendre_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def grading_levels(alpha_min: float, rate_max: float, width: float, config: QuadratureConfig) -> int:
    """
    Number of halvings that push the innermost panel's mass below the floor.

    The mass of [0, eps] under a Weibull-type integrand is about
    rate * eps**alpha; the result solves rate * (width / 2**k)**alpha <= floor.
    """
    if width <= 0 or rate_max <= 0 or not math.isfinite(rate_max):
        return 0
    levels = math.log2(width) + math.log2(rate_max / config.singular_floor) / alpha_min
    return int(min(max(math.ceil(levels), 0), config.max_grading_levels))


def graded_edges(
    a: float,
    b: float,
    config: QuadratureConfig,
    left_levels: int = 0,
    right_levels: int = 0,
    density: int = 1,
) -> np.ndarray:
    """Panel edges of [a, b]: uniform panels, the end panels split geometrically."""
    n_panels = max(config.min_panels, math.ceil((b - a) * config.panels_per_year * density))
    edges = np.linspace(a, b, n_panels + 1)
    parts = [edges]
    if left_levels > 0:
        h = edges[1] - edges[0]
        inner = a + h * np.power(2.0, -np.arange(left_levels, 0, -1))
        parts.append(inner)
    if right_levels > 0:
        h = edges[-1] - edges[-2]
        inner = b - h * np.power(2.0, -np.arange(1, right_levels + 1))
        parts.append(inner)
    return np.unique(np.concatenate(parts))


def composite_rule(edges: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Flattened nodes and weights of an n-point rule on every panel."""
    xi, wi = legendre_rule(n)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, np.newaxis] + half[:, np.newaxis] * xi).reshape(-1)
    weights = (half[:, np.newaxis] * wi).reshape(-1)
    return nodes, weights


def integrate(
    integrand: Integrand,
    a: float,
    b: float,
    config: QuadratureConfig,
    left_levels: int = 0,
    right_levels: int = 0,
) -> np.ndarray:
    """
    Integrate over [a, b], refining until the n-node and n/2-node rules agree.

    Raises:
        QuadratureError: if the rules still differ by more than
            ``config.tolerance`` after ``config.max_refinements`` doublings of
            the panel density
    """
    if b < a:
        raise ValueError(f"integration interval [{a}, {b}] is reversed")
    if b == a:
        return np.zeros_like(np.asarray(integrand(np.array([a], dtype=float)))[..., 0], dtype=float)

    coarse_n = max(config.nodes // 2, 1)
    gap = math.inf
    for refinement in range(config.max_refinements + 1):
        edges = graded_edges(a, b, config, left_levels, right_levels, density=2 ** refinement)
        nodes, weights = composite_rule(edges, config.nodes)
        fine = np.asarray(integrand(nodes)) @ weights
        nodes, weights = composite_rule(edges, coarse_n)
        coarse = np.asarray(integrand(nodes)) @ weights
        gap = float(np.max(np.abs(fine - coarse))) if np.size(fine) else 0.0
        if not math.isfinite(gap):
            raise QuadratureError(f"Non-finite integrand on [{a:g}, {b:g}]")
        if gap <= config.tolerance:
            return fine
        logger.debug("quadrature_refined", a=a, b=b, refinement=refinement + 1, gap=gap)

    raise QuadratureError(
        f"Quadrature on [{a:g}, {b:g}] did not reach tolerance {config.tolerance:g} "
        f"after {config.max_refinements} refinements (gap {gap:.3g})"
    )
