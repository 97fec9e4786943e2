"""
敏感性分析异常体系

所有异常都继承自 SensitivityError，并携带命令行退出码：
校验错误为 2，不可行为 3，数值失败为 4。
"""
from typing import List, Optional, Sequence


class SensitivityError(Exception):
    """敏感性分析异常基类"""

    exit_code: int = 1

    def to_record(self, node: str = "") -> dict:
        """转换为工作流错误记录

        Args:
            node: 出错的节点名称

        Returns:
            错误记录字典
        """
        return {
            "node": node,
            "error_type": type(self).__name__,
            "message": str(self),
            "exit_code": self.exit_code,
        }


class RotationWarning(UserWarning):
    """原始载荷矩阵只在旋转意义下可识别"""


# ---------------------------------------------------------------- 校验错误


class ValidationError(SensitivityError, ValueError):
    """输入或前置条件不满足"""

    exit_code = 2


class MissingColumn(ValidationError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(f"缺少列: {column}")


class NonNumericCell(ValidationError):
    def __init__(self, column: str, row: int, value: str = ""):
        self.column = column
        self.row = row
        super().__init__(f"列 {column} 第 {row} 行不是数值: {value!r}")


class InsufficientRows(ValidationError):
    def __init__(self, n: int, required: int):
        self.n = n
        self.required = required
        super().__init__(f"有效样本量 {n} 小于所需的 {required}")


class NonBinaryTreatment(ValidationError):
    def __init__(self, values: Sequence[float] = ()):
        super().__init__(f"二值处理变量只能取 0/1，发现: {sorted(set(values))[:5]}")


class DuplicateOutcome(ValidationError):
    def __init__(self, first: str, second: str):
        self.columns = (first, second)
        super().__init__(f"结局 {first} 与 {second} 完全共线")


class ZeroVariance(ValidationError):
    def __init__(self, index: int, name: str = ""):
        self.index = index
        super().__init__(f"结局 {name or index} 方差为零")


class RankDeficient(ValidationError):
    def __init__(self, columns: List[str]):
        self.columns = list(columns)
        super().__init__(f"设计矩阵秩亏，共线列: {', '.join(self.columns)}")


class SingleClass(ValidationError):
    def __init__(self, value: Optional[float] = None):
        super().__init__(f"二值处理变量只有一个类别: {value}")


class InvalidContrast(ValidationError):
    """对比向量不合法"""


class InvalidControls(ValidationError):
    """阴性对照集合不合法"""


class BoundsViolation(ValidationError):
    """参数超出允许范围"""


# ---------------------------------------------------------------- 不可行


class InfeasibilityError(SensitivityError):
    """给定假设下问题无解"""

    exit_code = 3


class BudgetBelowMinimum(InfeasibilityError):
    def __init__(self, r2_tu: float, r2_min: float):
        self.r2_tu = r2_tu
        self.r2_min = r2_min
        super().__init__(
            f"混杂预算 R²={r2_tu:.6g} 小于阴性对照所需的最小值 R²min={r2_min:.6g}"
        )


class InfeasibleNullControls(InfeasibilityError):
    def __init__(self, residual: float, scale: float):
        self.residual = residual
        super().__init__(
            f"阴性对照效应不在 Γ_C 的列空间中 (残差 {residual:.3g}, 规模 {scale:.3g})"
        )


class InfeasibleConstraints(InfeasibilityError):
    """数值 oracle 找不到满足约束的 ρ"""


# ---------------------------------------------------------------- 数值失败


class NumericFailure(SensitivityError):
    """数值计算失败"""

    exit_code = 4


class PerfectSeparation(NumericFailure):
    def __init__(self, norm: float):
        super().__init__(f"logistic 回归系数范数 {norm:.3g} 发散，可能完全分离")


class ConvergenceFailure(NumericFailure):
    """迭代算法未收敛"""


class BracketingFailure(NumericFailure):
    """二分法无法找到区间"""
