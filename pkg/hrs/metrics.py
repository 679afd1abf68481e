import json
from dataclasses import asdict, dataclass
from typing import Iterable, List, Tuple

import numpy as np

from hrs.errors import DataError
from hrs.loss import SalParams, sal_exact


@dataclass(frozen=True)
class EvalReport:
    apl: float
    sla_violation_count: int
    sla_violation_rate: float
    under_fraction: float
    over_fraction: float
    exact_fraction: float
    mse: float
    mae: float
    n_points: int

    def to_record(self, **labels) -> dict:
        return {**labels, **asdict(self)}

    def to_json_line(self, **labels) -> str:
        return json.dumps(self.to_record(**labels), sort_keys=True)


def _pair(y, y_hat) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if y.size == 0:
        raise DataError("metrics need at least one point")
    if y.shape != y_hat.shape:
        raise DataError(
            f"actuals ({y.size}) and forecasts ({y_hat.size}) differ in length"
        )
    return y, y_hat


def apl(y, y_hat, sp: SalParams) -> float:
    """Average profit loss per point under the exact piecewise loss."""
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(sal_exact(y, y_hat, sp)))


def sla_violations(y, y_hat) -> Tuple[int, float]:
    y, y_hat = _pair(y, y_hat)
    count = int(np.count_nonzero(y_hat < y))
    return count, count / y.size


def under_over_proportions(y, y_hat) -> Tuple[float, float]:
    y, y_hat = _pair(y, y_hat)
    return np.count_nonzero(y_hat < y) / y.size, np.count_nonzero(y_hat > y) / y.size


def coefficient_of_variation(values) -> float:
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size < 2:
        raise DataError(
            f"coefficient of variation needs >= 2 values, got {values.size}"
        )
    mean = values.mean()
    if mean == 0:
        raise DataError("coefficient of variation is undefined for zero mean")
    return float(values.std() / mean)


def evaluate_forecasts(y, y_hat, sp: SalParams) -> EvalReport:
    y, y_hat = _pair(y, y_hat)
    count, rate = sla_violations(y, y_hat)
    under, over = under_over_proportions(y, y_hat)
    err = y_hat - y
    return EvalReport(
        apl=apl(y, y_hat, sp),
        sla_violation_count=count,
        sla_violation_rate=rate,
        under_fraction=under,
        over_fraction=over,
        exact_fraction=np.count_nonzero(err == 0) / y.size,
        mse=float(np.mean(err * err)),
        mae=float(np.mean(np.abs(err))),
        n_points=int(y.size),
    )


def offset_sweep(
    y, y_hat, offsets: Iterable[float], sp: SalParams
) -> List[Tuple[float, float]]:
    """APL of forecasts shifted by each constant offset (post-hoc bias correction)."""
    y, y_hat = _pair(y, y_hat)
    return [(float(o), apl(y, y_hat + o, sp)) for o in offsets]
