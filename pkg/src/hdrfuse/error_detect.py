"""Per-superpixel flow statistics and misregistration flags."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .flow import FlowField
from .superpixel import SuperpixelMap

log = logging.getLogger(__name__)

T_FLOW_UNDER = 3.5
T_FLOW_OVER = 1.5


@dataclass(frozen=True)
class Thresholds:
    t_flow_u: float = T_FLOW_UNDER
    t_flow_o: float = T_FLOW_OVER

    def __post_init__(self):
        if self.t_flow_u <= 0 or self.t_flow_o <= 0:
            raise ValueError(f"thresholds must be positive, got {self.t_flow_u}, {self.t_flow_o}")

    def for_input(self, input_index: int, ref_index: int) -> float:
        """Darker inputs (below the reference) get the under-exposure threshold."""
        if input_index == ref_index:
            raise ValueError("the reference image is never tested for alignment errors")
        return self.t_flow_u if input_index < ref_index else self.t_flow_o


@dataclass
class FlowStats:
    avg_x: np.ndarray
    avg_y: np.ndarray
    var_x: np.ndarray
    var_y: np.ndarray
    n: np.ndarray


@dataclass
class ErrorMask:
    flags: np.ndarray  # bool per label
    thresholds_used: tuple[float, float]
    threshold: float

    @property
    def flagged(self) -> np.ndarray:
        return np.flatnonzero(self.flags)

    def pixel_mask(self, sp: SuperpixelMap) -> np.ndarray:
        return self.flags[sp.labels]


def flow_variance(flow: FlowField, sp: SuperpixelMap) -> FlowStats:
    """Population standard deviation of ``u`` and ``v`` inside each superpixel.

    Note the quantity is a standard deviation (square root of the mean squared
    deviation) even though it is traditionally called a variance here.
    """
    if flow.shape != sp.shape:
        raise ValueError(f"flow {flow.shape} and superpixels {sp.shape} differ in size")
    lab = sp.labels.ravel()
    n = np.bincount(lab, minlength=sp.count).astype(np.float64)
    if (n == 0).any():
        raise ValueError("empty superpixel label")

    def stats(values):
        values = values.ravel()
        avg = np.bincount(lab, weights=values, minlength=sp.count) / n
        dev = values - avg[lab]
        return avg, np.sqrt(np.bincount(lab, weights=dev * dev, minlength=sp.count) / n)

    avg_x, var_x = stats(flow.u)
    avg_y, var_y = stats(flow.v)
    return FlowStats(avg_x, avg_y, var_x, var_y, n.astype(np.int64))


def detect_errors(stats: FlowStats, input_index: int, ref_index: int,
                  th: Thresholds | None = None) -> ErrorMask:
    """Flag labels where either component's spread strictly exceeds the threshold."""
    th = th or Thresholds()
    t = th.for_input(input_index, ref_index)
    flags = (stats.var_x > t) | (stats.var_y > t)
    if flags.size and flags.mean() > 0.5:
        log.warning("input %d: %d of %d superpixels flagged (> 50%%); flow may have failed",
                    input_index, int(flags.sum()), flags.size)
    return ErrorMask(flags, (th.t_flow_u, th.t_flow_o), t)
