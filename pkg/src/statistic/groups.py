from enum import Enum


class StatisticGroup(Enum):
    """统计量组枚举"""
    REGION_LOWER = "region_lower"  # 区间下端点：报告下分位数
    REGION_UPPER = "region_upper"  # 区间上端点：报告上分位数
    ROBUSTNESS = "robustness"  # 稳健性值：保守地报告下分位数
    POINT = "point"  # 点估计：报告百分位区间
