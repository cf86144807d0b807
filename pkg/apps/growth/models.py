import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

SGC = "SGC"
GC = "GC"
WGC = "WGC"
NONE = "none"
CLASSIFICATIONS = (SGC, GC, WGC, NONE)


@dataclass
class GrowthReport:
    """
    Constants of the growth conditions over an explicit probe set:
    max_i ||grad f_i||^2 <= B ||grad f||^2 and E||grad f_i||^2 <= M ||grad f||^2 + sigma^2.
    """

    B_sgc: float
    M_wgc: float
    sigma_sq: float
    classification: str
    probes: dict = field(default_factory=dict)
    analytic: bool = False
    degenerate: bool = False
    omega: Optional[float] = None

    @property
    def sgc_holds(self):
        return math.isfinite(self.B_sgc)


@dataclass
class NecessaryConditionReport:
    """
    Per-iterate margins of E||G||^2 <= ||E G||^2 / (1 - omega) + sigma^2 and of its
    hypothesis E||x+ - x*||^2 <= omega ||x - x*||^2 + gamma^2 sigma^2. Iterates where the
    hypothesis fails are excluded from the conclusion check and listed separately.
    """

    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    hypothesis_lhs: np.ndarray
    hypothesis_rhs: np.ndarray
    omega: float
    sigma_sq: float
    tolerance: float = 1e-9

    @property
    def margins(self):
        return self.rhs - self.lhs

    @property
    def hypothesis_margins(self):
        return self.hypothesis_rhs - self.hypothesis_lhs

    def _hypothesis_ok(self):
        return self.hypothesis_margins >= -self.tolerance * (1.0 + np.abs(self.hypothesis_rhs))

    @property
    def hypothesis_failures(self):
        return self.times[~self._hypothesis_ok()]

    @property
    def violations(self):
        bad = self.margins < -self.tolerance * (1.0 + np.abs(self.rhs))
        return self.times[bad & self._hypothesis_ok()]

    @property
    def holds(self):
        return len(self.violations) == 0
