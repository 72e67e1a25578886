"""
Closed-form guarantee curves, all as ratios against nu(G) unless stated.
"""

import math
from typing import Dict

ONE_MINUS_INV_E = 1.0 - 1.0 / math.e


def iterative_bound(delta: float) -> float:
    return 1.0 - delta + 0.5 * delta * delta * ONE_MINUS_INV_E


def structured_bound(delta: float) -> float:
    return 1.0 - delta + delta * delta * ONE_MINUS_INV_E


def fractional_bound(delta: float) -> float:
    return 1.0 - delta * math.exp(-delta)


def hardness_reference(delta: float) -> float:
    """No semi-online algorithm, integral or fractional, beats this ratio"""
    return 1.0 - delta * math.exp(-delta)


def ranking_bound(delta: float) -> float:
    return ONE_MINUS_INV_E


def marked_overlap_bound(delta: float, nu_g: int) -> float:
    """Expected reserved-and-marked offline nodes under structured sampling"""
    return delta * delta * nu_g


def agnostic_integral_reference(n: int, d: int, eps: float) -> float:
    """Expected size of the p = 1 strategy on the gadget instance, first order in eps"""
    return n - d - eps * (n - 3 * d)


def agnostic_integral_allowance(n: int, eps: float) -> float:
    return 2.0 * eps * eps * n


def agnostic_fractional_bound(n: int, delta: float, eps: float) -> float:
    """Absolute weight guarantee n(1 - 2 eps - delta)"""
    return n * (1.0 - 2.0 * eps - delta)


def bound_lines(delta: float) -> Dict[str, float]:
    """Every ratio curve reported next to a trial"""
    return {
        "bound_iterative": iterative_bound(delta),
        "bound_structured": structured_bound(delta),
        "bound_fractional": fractional_bound(delta),
        "hardness_reference": hardness_reference(delta),
    }
