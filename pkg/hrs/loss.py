"""
Scheduling-Aware Loss. Underprediction loses the revenue of the unserved
units plus a flat SLA penalty; overprediction pays for idle provisioned
units. `sal_exact` is the evaluation form, `sal_surrogate` the smooth
training form whose penalty term is a sigmoid gate of width `tau`.
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from hrs.errors import ConfigError, ShapeError
from hrs.tensor import Tensor, relu, sigmoid, square

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SalParams:
    revenue: float = 0.0065
    cost: float = 0.0035
    penalty: float = 4.0
    tau: Optional[float] = None

    def __post_init__(self):
        if not self.revenue > 0:
            raise ConfigError(f"SAL_REVENUE must be > 0, got {self.revenue}")
        if not self.cost > 0:
            raise ConfigError(f"SAL_COST must be > 0, got {self.cost}")
        if not self.penalty >= 0:
            raise ConfigError(f"SAL_PENALTY must be >= 0, got {self.penalty}")
        if self.tau is not None and not self.tau > 0:
            raise ConfigError(f"SAL_TAU must be > 0, got {self.tau}")
        if self.cost >= self.revenue:
            logger.warning(
                f"SAL cost {self.cost} >= revenue {self.revenue}; "
                "measured platforms show C < R"
            )

    @classmethod
    def from_uo_ratio(cls, ratio: float, tau: Optional[float] = None) -> "SalParams":
        """
        C = 1, and the per-unit underprediction cost `ratio` splits into a unit
        revenue R = 1 - 1/(2 ratio) and a flat penalty P = ratio - R. At parity
        a missed unit costs half an idle one; R approaches C as the ratio grows.
        """
        if ratio < 1:
            raise ConfigError(f"U/O ratio must be >= 1, got {ratio}")
        revenue = 1.0 - 0.5 / float(ratio)
        return cls(revenue=revenue, cost=1.0, penalty=float(ratio) - revenue, tau=tau)

    def with_tau(self, tau: float) -> "SalParams":
        return replace(self, tau=tau)


def uo_ratio(sp: SalParams) -> float:
    return (sp.revenue + sp.penalty) / sp.cost


def sal_exact(y, y_hat, sp: SalParams):
    """Piecewise profit loss; scalars in, float out, arrays in, array out."""
    y_arr = np.asarray(y, dtype=np.float64)
    y_hat_arr = np.asarray(y_hat, dtype=np.float64)
    loss = np.where(
        y_hat_arr < y_arr,
        sp.revenue * (y_arr - y_hat_arr) + sp.penalty,
        np.where(y_hat_arr > y_arr, sp.cost * (y_hat_arr - y_arr), 0.0),
    )
    return float(loss) if loss.ndim == 0 else loss


def sal_surrogate(y: Tensor, y_hat: Tensor, sp: SalParams) -> Tensor:
    if sp.tau is None or not sp.tau > 0:
        raise ConfigError(f"sal_surrogate needs a positive tau, got {sp.tau}")
    y = Tensor.constant(y)
    if y.shape != y_hat.shape:
        raise ShapeError(
            f"target shape {y.shape} does not match forecast shape {y_hat.shape}"
        )
    gap = y - y_hat
    loss = (
        sp.revenue * relu(gap)
        + sp.cost * relu(-gap)
        + sp.penalty * sigmoid(gap / sp.tau)
    )
    return loss.mean()


def mse_loss(y: Tensor, y_hat: Tensor) -> Tensor:
    y = Tensor.constant(y)
    if y.shape != y_hat.shape:
        raise ShapeError(
            f"target shape {y.shape} does not match forecast shape {y_hat.shape}"
        )
    return square(y_hat - y).mean()
