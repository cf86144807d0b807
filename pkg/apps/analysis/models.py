from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


@dataclass
class EnsembleStats:
    """Per-t mean and standard error of ||x_t - xbar_t||^2 over R replications."""

    T: int
    R: int
    mean_dist_sq: np.ndarray
    stderr: np.ndarray
    gamma: Optional[float] = None
    predicted_rho: Optional[float] = None
    predicted_floor: Optional[float] = None
    step_kind: str = "constant"

    def __post_init__(self):
        if len(self.mean_dist_sq) != self.T + 1 or len(self.stderr) != self.T + 1:
            raise ValueError("statistics must cover t = 0..T")


@dataclass
class FloorEstimate:
    floor: float
    stderr: float
    floorless: bool
    tail_start: int


@dataclass
class RateFit:
    rate_per_iter: float
    floor_estimate: float
    fit_window: Tuple[int, int]
    r_squared: float
    rate_stderr: float = 0.0
    floor_stderr: float = 0.0
    floorless: bool = False


@dataclass
class InverseTRateCheck:
    passed: bool
    slope: Optional[float]
    r_squared: Optional[float] = None
    window: Optional[Tuple[int, int]] = None
    reason: str = ""


@dataclass
class AnalysisSummary:
    method: str
    gamma: Optional[float]
    rho_pred: Optional[float]
    rate_fit: Optional[float] = None
    rate_stderr: Optional[float] = None
    r_squared: Optional[float] = None
    fit_window: Optional[Tuple[int, int]] = None
    floor_pred: Optional[float] = None
    floor_fit: Optional[float] = None
    floor_stderr: Optional[float] = None
    inverse_t_slope: Optional[float] = None
    passes: dict = field(default_factory=dict)
