"""
统计量基类，定义了从分析状态中提取 bootstrap 统计量的接口
"""
from abc import ABC, abstractmethod
from typing import Any, Dict, Mapping

from .groups import StatisticGroup


def stat_key(label: str, kind: str) -> str:
    """统计量的全名：对比标签 + 种类"""
    return f"{label}|{kind}"


class BaseStatistic(ABC):
    """统计量基类，所有统计量需要继承此类"""

    @property
    @abstractmethod
    def name(self) -> str:
        """统计量名称"""
        pass

    @property
    @abstractmethod
    def description(self) -> str:
        """统计量描述"""
        pass

    @property
    @abstractmethod
    def group(self) -> StatisticGroup:
        """统计量所属组，决定 bootstrap 报告哪个分位数"""
        pass

    @abstractmethod
    def _extract(self, state: Mapping[str, Any]) -> Dict[str, float]:
        """从状态中提取统计量，由子类实现"""
        pass

    def extract(self, state: Mapping[str, Any]) -> Dict[str, float]:
        """提取统计量

        Args:
            state: 分析工作流状态

        Returns:
            {统计量全名: 数值}，状态中缺少对应结果时返回空字典
        """
        return {key: float(value) for key, value in self._extract(state).items() if value is not None}

    def to_schema(self) -> Dict[str, Any]:
        """将统计量转换为 schema 格式"""
        return {"name": self.name, "description": self.description, "group": self.group.value}
