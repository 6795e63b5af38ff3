from dataclasses import dataclass
from enum import Enum
from typing import Optional

from config import FORECAST_MATCH_WINDOW_S, FORECAST_PROBABILITY_THRESHOLD
from td_dispatch.core.exceptions import ConfigurationError, ConsistencyError


class BindingStatus(str, Enum):
    PENDING = 'pending'
    VERIFIED = 'verified'
    EXPIRED = 'expired'
    DROPPED = 'dropped'


@dataclass
class ForecastBinding:
    """
    Lifecycle of one virtual request

    Attributes:
        virtual_id (str): The forecast request id
        worker_id (Optional[str]): Worker whose route carries the forecast
        real_id (Optional[str]): Real request that verified the forecast
        status (BindingStatus): Current state
    """

    virtual_id: str
    worker_id: Optional[str] = None
    real_id: Optional[str] = None
    status: BindingStatus = BindingStatus.PENDING

    def bind(self, real_id: str) -> None:
        if self.real_id is not None or self.status is not BindingStatus.PENDING:
            raise ConsistencyError(
                f'forecast {self.virtual_id} is {self.status.value} and cannot bind {real_id}'
            )
        self.real_id = real_id
        self.status = BindingStatus.VERIFIED

    @property
    def pending(self) -> bool:
        return self.status is BindingStatus.PENDING


@dataclass(frozen=True)
class ProphetConfig:
    """
    Attributes:
        match_window (float): Max |ep_real - ep_forecast| in seconds for a match
        probability_threshold (float): Forecasts below it are treated as unreliable
    """

    match_window: float = FORECAST_MATCH_WINDOW_S
    probability_threshold: float = FORECAST_PROBABILITY_THRESHOLD

    def __post_init__(self) -> None:
        if self.match_window < 0:
            raise ConfigurationError('match window must be non-negative')
        if not 0 <= self.probability_threshold <= 1:
            raise ConfigurationError('probability threshold must lie in [0, 1]')
