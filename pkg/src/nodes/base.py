"""
节点基类
统一节点的错误记录方式：捕获异常写入 state["errors"] 并把 status 置为 error
"""
import logging
from abc import ABC, abstractmethod

import numpy as np

from ..analysis.errors import NumericFailure, SensitivityError, ValidationError
from ..states.state import AnalysisState

logger = logging.getLogger(__name__)


class AnalysisNode(ABC):
    """分析工作流节点基类"""

    name: str = "node"
    done_status: str = "done"

    @abstractmethod
    def run(self, state: AnalysisState) -> AnalysisState:
        """节点的实际计算，由子类实现"""
        pass

    def __call__(self, state: AnalysisState) -> AnalysisState:
        """执行节点

        Args:
            state: 当前状态

        Returns:
            更新后的状态
        """
        logger.debug(f"----------------{self.name} 节点开始执行----------------")
        try:
            state = self.run(state)
            state["status"] = self.done_status
        except SensitivityError as e:
            self._record(state, e)
        except np.linalg.LinAlgError as e:
            self._record(state, NumericFailure(f"线性代数计算失败: {e}"))
        except ArithmeticError as e:
            self._record(state, NumericFailure(f"浮点运算失败: {type(e).__name__}: {e}"))
        except ValueError as e:
            wrapped = ValidationError(str(e))
            wrapped.__cause__ = e
            self._record(state, wrapped)
        return state

    def _record(self, state: AnalysisState, error: SensitivityError) -> None:
        record = error.to_record(self.name)
        record["exception"] = error
        state.setdefault("errors", []).append(record)
        state["status"] = "error"
        logger.error(f"{self.name} 节点失败: {record['error_type']}: {record['message']}")
