"""
统计量注册表模块
管理 bootstrap 统计量并从分析状态中批量提取
"""
from typing import Any, Dict, List, Mapping, Tuple

from .base import BaseStatistic
from .groups import StatisticGroup


class StatisticRegistry:
    """统计量注册表，按组管理所有统计量"""

    def __init__(self):
        # 使用嵌套字典结构：{group_name: {statistic_name: statistic_instance}}
        self._statistic_groups: Dict[str, Dict[str, BaseStatistic]] = {}

    def register_statistic(self, statistic: BaseStatistic) -> None:
        """注册统计量到其所属组

        Args:
            statistic: 统计量实例
        """
        if not statistic.name:
            raise ValueError("统计量必须有名称")
        group_key = statistic.group.value
        if group_key not in self._statistic_groups:
            self._statistic_groups[group_key] = {}
        self._statistic_groups[group_key][statistic.name] = statistic

    def get_all_statistics(self) -> List[BaseStatistic]:
        all_statistics = []
        for group in self._statistic_groups.values():
            all_statistics.extend(group.values())
        return all_statistics

    def get_all_schemas(self) -> List[Dict[str, Any]]:
        return [statistic.to_schema() for statistic in self.get_all_statistics()]

    def collect(self, state: Mapping[str, Any]) -> Tuple[Dict[str, float], Dict[str, StatisticGroup]]:
        """从状态中提取所有已注册的统计量

        Returns:
            (数值字典, 组字典)，键均为统计量全名
        """
        values: Dict[str, float] = {}
        groups: Dict[str, StatisticGroup] = {}
        for statistic in self.get_all_statistics():
            for key, value in statistic.extract(state).items():
                values[key] = value
                groups[key] = statistic.group
        return values, groups


# 创建统计量注册表实例
statistic_registry = StatisticRegistry()

from .analysis_statistics import NucEffectStatistic, RegionEndpointStatistic, RobustnessValueStatistic

statistic_registry.register_statistic(NucEffectStatistic())
statistic_registry.register_statistic(RegionEndpointStatistic("lower"))
statistic_registry.register_statistic(RegionEndpointStatistic("upper"))
statistic_registry.register_statistic(RobustnessValueStatistic())
