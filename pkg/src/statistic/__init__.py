from .base import BaseStatistic, stat_key
from .groups import StatisticGroup
from .registry import StatisticRegistry, statistic_registry

__all__ = ["BaseStatistic", "StatisticGroup", "StatisticRegistry", "statistic_registry", "stat_key"]
