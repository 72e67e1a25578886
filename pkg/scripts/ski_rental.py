"""
Semi-Online Ski Rental

Fractional-day ski rental with buying cost 1 and season length normalised to
1, where the first x days of skiing are known in advance. The strategy buys
immediately with probability q(x) and otherwise buys at a random time z in
[x, 1] with density proportional to e^z, which makes Cost(x, u) / u the same
for every season length u >= x.
"""

import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))
from utils.resilience import ResilientLogger

logger = ResilientLogger(__name__)

E = math.e


@dataclass(frozen=True)
class SkiStrategy:
    x: float
    q: float

    @classmethod
    def for_prediction(cls, x: float) -> 'SkiStrategy':
        return cls(x, buy_probability(x))

    @property
    def ratio(self) -> float:
        return competitive_ratio(self.x)

    def density(self, z: float) -> float:
        return buy_time_density(self.x, z)

    def cost(self, u: float) -> float:
        return expected_cost(self.x, u)


def _check_x(x: float):
    if x < 0:
        raise ValueError(f"predicted ski days x={x} must be non-negative")


def buy_probability(x: float) -> float:
    """q(x) = x e^x / (e - (1 - x) e^x); 1 once x >= 1"""
    _check_x(x)
    if x >= 1:
        return 1.0
    return x * math.exp(x) / (E - (1.0 - x) * math.exp(x))


def competitive_ratio(x: float) -> float:
    """e / (e - (1 - x) e^x)"""
    _check_x(x)
    if x >= 1:
        return 1.0
    return E / (E - (1.0 - x) * math.exp(x))


def buy_time_density(x: float, z: float) -> float:
    """Density of the buying time on [x, 1]; the atom q(x) at time 0 is not included"""
    if x >= 1 or z < x or z > 1:
        return 0.0
    return (1.0 - buy_probability(x)) * math.exp(z) / (E - math.exp(x))


def sample_buy_time(x: float, rng: np.random.Generator) -> float:
    """0 with probability q(x), else a time in [x, 1] drawn by the inverse CDF ln(e^x + r (e - e^x))"""
    _check_x(x)
    if x >= 1:
        return 0.0
    if rng.random() < buy_probability(x):
        return 0.0
    r = rng.random()
    return min(1.0, max(x, math.log(math.exp(x) + r * (E - math.exp(x)))))


def expected_cost(x: float, u: float) -> float:
    """
    Closed-form expected cost when the season lasts u.

    With K = (1 - q) / (e - e^x), integrating (1 + z) e^z over [x, u] and u e^z
    over [u, 1] gives q + K (u e - x e^x).
    """
    _check_x(x)
    if u < x:
        raise ValueError(f"season length u={u} is below the guaranteed x={x}")
    if u > 1:
        raise ValueError(f"season length u={u} exceeds the normalised horizon 1")
    if x >= 1:
        return 1.0
    q = buy_probability(x)
    k = (1.0 - q) / (E - math.exp(x))
    return q + k * (u * E - x * math.exp(x))


def monte_carlo_cost(x: float, u: float, trials: int, rng: np.random.Generator) -> Tuple[float, float]:
    """Simulated mean cost and its standard error"""
    if trials <= 0:
        raise ValueError(f"trials must be positive, got {trials}")
    _check_x(x)
    if u < x:
        raise ValueError(f"season length u={u} is below the guaranteed x={x}")
    if x >= 1:
        return 1.0, 0.0

    q = buy_probability(x)
    buy_now = rng.random(trials) < q
    r = rng.random(trials)
    z = np.clip(np.log(math.exp(x) + r * (E - math.exp(x))), x, 1.0)
    cost = np.where(buy_now, 1.0, np.where(z < u, z + 1.0, u))

    mean = float(cost.mean())
    stderr = float(cost.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    logger.debug(f"ski rental x={x} u={u}: mean {mean:.6f} +/- {stderr:.6f} over {trials} trials")
    return mean, stderr


if __name__ == "__main__":
    for x in np.linspace(0.0, 0.9, 10):
        for u in np.linspace(max(x, 0.01), 1.0, 5):
            assert abs(expected_cost(x, u) / u - competitive_ratio(x)) < 1e-9
    logger.info("ski_rental self-check passed")
