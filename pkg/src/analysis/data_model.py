"""
核心领域类型、数据读取与校验

Dataset 为不可变的观测数据表 (结局 Y、处理 T、协变量 X)；
Contrast / TreatmentContrast / SensitivityQuery 描述一次敏感性查询。
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import (
    DuplicateOutcome,
    InsufficientRows,
    InvalidContrast,
    MissingColumn,
    NonBinaryTreatment,
    NonNumericCell,
    ValidationError,
    ZeroVariance,
)

logger = logging.getLogger(__name__)

DUPLICATE_CORR_TOL = 1e-12


class ColumnSchema(BaseModel):
    """列角色映射"""

    outcomes: List[str]
    treatment: str
    covariates: List[str] = Field(default_factory=list)
    binary: bool = False

    @model_validator(mode="after")
    def _check_roles(self) -> "ColumnSchema":
        if not self.outcomes:
            raise ValueError("至少需要一个结局列")
        names = list(self.outcomes) + [self.treatment] + list(self.covariates)
        if len(set(names)) != len(names):
            raise ValueError(f"列角色重复: {names}")
        return self


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Dataset:
    """观测数据集

    outcomes 为 n×q，treatment 为长度 n，covariates 为 n×p (不含截距列)。
    构造后所有数组只读。
    """

    outcomes: np.ndarray
    treatment: np.ndarray
    covariates: np.ndarray
    outcome_names: Tuple[str, ...]
    covariate_names: Tuple[str, ...] = ()
    binary_treatment: bool = False
    treatment_name: str = "t"
    dropped_rows: int = 0

    def __post_init__(self):
        outcomes = np.atleast_2d(np.asarray(self.outcomes, dtype=float))
        if np.ndim(self.outcomes) == 1:
            outcomes = outcomes.T
        treatment = np.asarray(self.treatment, dtype=float).reshape(-1)
        n = outcomes.shape[0]
        covariates = np.asarray(self.covariates, dtype=float)
        if covariates.size == 0:
            covariates = np.zeros((n, 0))
        elif covariates.ndim == 1:
            covariates = covariates.reshape(-1, 1)

        if treatment.shape[0] != n or covariates.shape[0] != n:
            raise ValidationError("结局、处理与协变量的行数不一致")
        if len(self.outcome_names) != outcomes.shape[1]:
            raise ValidationError("结局名称数量与结局列数不一致")
        if len(self.covariate_names) not in (0, covariates.shape[1]):
            raise ValidationError("协变量名称数量与协变量列数不一致")

        p = covariates.shape[1]
        if n < p + 3:
            raise InsufficientRows(n, p + 3)
        for name, block in (("outcomes", outcomes), ("treatment", treatment), ("covariates", covariates)):
            if not np.all(np.isfinite(block)):
                raise ValidationError(f"{name} 含有非有限值")
        if self.binary_treatment and not np.all(np.isin(treatment, (0.0, 1.0))):
            raise NonBinaryTreatment(treatment.tolist())

        _check_duplicate_outcomes(outcomes, self.outcome_names)

        covariate_names = tuple(self.covariate_names) or tuple(f"x{k + 1}" for k in range(p))
        object.__setattr__(self, "outcomes", _readonly(outcomes))
        object.__setattr__(self, "treatment", _readonly(treatment))
        object.__setattr__(self, "covariates", _readonly(covariates))
        object.__setattr__(self, "outcome_names", tuple(self.outcome_names))
        object.__setattr__(self, "covariate_names", covariate_names)

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def q(self) -> int:
        return self.outcomes.shape[1]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def subset_rows(self, indices: Sequence[int]) -> "Dataset":
        """按行索引取子集 (可重复，用于 bootstrap 重抽样)"""
        idx = np.asarray(indices, dtype=int)
        return Dataset(
            outcomes=self.outcomes[idx],
            treatment=self.treatment[idx],
            covariates=self.covariates[idx],
            outcome_names=self.outcome_names,
            covariate_names=self.covariate_names,
            binary_treatment=self.binary_treatment,
            treatment_name=self.treatment_name,
        )

    def with_outcomes(self, outcomes: np.ndarray) -> "Dataset":
        return Dataset(
            outcomes=outcomes,
            treatment=self.treatment,
            covariates=self.covariates,
            outcome_names=self.outcome_names,
            covariate_names=self.covariate_names,
            binary_treatment=self.binary_treatment,
            treatment_name=self.treatment_name,
            dropped_rows=self.dropped_rows,
        )

    def with_treatment(self, treatment: np.ndarray) -> "Dataset":
        return Dataset(
            outcomes=self.outcomes,
            treatment=treatment,
            covariates=self.covariates,
            outcome_names=self.outcome_names,
            covariate_names=self.covariate_names,
            binary_treatment=self.binary_treatment,
            treatment_name=self.treatment_name,
            dropped_rows=self.dropped_rows,
        )

    def to_frame(self) -> pd.DataFrame:
        """转换为 DataFrame，列顺序为 结局、处理、协变量"""
        frame = pd.DataFrame(self.outcomes, columns=list(self.outcome_names))
        frame[self.treatment_name] = self.treatment
        for k, name in enumerate(self.covariate_names):
            frame[name] = self.covariates[:, k]
        return frame


def _check_duplicate_outcomes(outcomes: np.ndarray, names: Sequence[str]) -> None:
    sd = outcomes.std(axis=0)
    usable = np.flatnonzero(sd > 0)
    if usable.size < 2:
        return
    corr = np.corrcoef(outcomes[:, usable], rowvar=False)
    for a in range(usable.size):
        for b in range(a + 1, usable.size):
            if abs(corr[a, b]) > 1.0 - DUPLICATE_CORR_TOL:
                raise DuplicateOutcome(names[usable[a]], names[usable[b]])


class TreatmentContrast(BaseModel):
    """处理对比 (t1, t2)"""

    model_config = ConfigDict(frozen=True)

    t1: float = 1.0
    t2: float = 0.0

    @model_validator(mode="after")
    def _distinct(self) -> "TreatmentContrast":
        if self.t1 == self.t2:
            raise ValueError("t1 与 t2 必须不同")
        return self

    @property
    def delta(self) -> float:
        """Δt = t1 − t2"""
        return self.t1 - self.t2


class Contrast(BaseModel):
    """结局线性组合 a'Y"""

    model_config = ConfigDict(frozen=True)

    weights: Tuple[float, ...]
    label: str = ""

    @field_validator("weights")
    @classmethod
    def _finite_nonzero(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        array = np.asarray(value, dtype=float)
        if array.ndim != 1 or array.size == 0:
            raise ValueError("对比向量必须是非空一维向量")
        if not np.all(np.isfinite(array)):
            raise ValueError("对比向量含有非有限值")
        if np.linalg.norm(array) <= 0:
            raise ValueError("对比向量范数必须为正")
        return tuple(float(v) for v in array)

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)


ContrastLike = Union[Contrast, Sequence[float], np.ndarray]


def contrast_vector(a: ContrastLike, q: Optional[int] = None) -> np.ndarray:
    """把 Contrast 或数组统一为 numpy 向量，并检查长度"""
    vector = a.vector if isinstance(a, Contrast) else np.asarray(a, dtype=float).reshape(-1)
    if q is not None and vector.shape[0] != q:
        raise InvalidContrast(f"对比向量长度 {vector.shape[0]} 与结局数 {q} 不一致")
    return vector


def make_contrast(weights: Sequence[float], label: str = "") -> Contrast:
    return Contrast(weights=tuple(float(w) for w in weights), label=label)


def canonical_contrasts(d: Dataset) -> List[Contrast]:
    """每个结局的单位对比 e_j，标签为结局名"""
    eye = np.eye(d.q)
    return [make_contrast(eye[j], d.outcome_names[j]) for j in range(d.q)]


class SensitivityQuery(BaseModel):
    """一次敏感性查询：对比、处理对比、混杂预算与阴性对照集合"""

    model_config = ConfigDict(frozen=True)

    contrast: Contrast
    treatment_contrast: TreatmentContrast = Field(default_factory=TreatmentContrast)
    r2_tu: float
    null_controls: Tuple[int, ...] = ()

    @field_validator("r2_tu")
    @classmethod
    def _budget_range(cls, value: float) -> float:
        if not (0.0 <= value < 1.0):
            raise ValueError(f"混杂预算必须在 [0, 1) 内: {value}")
        return value

    @field_validator("null_controls")
    @classmethod
    def _unique_controls(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if len(set(value)) != len(value):
            raise ValueError(f"阴性对照索引重复: {value}")
        return tuple(sorted(int(v) for v in value))

    @model_validator(mode="after")
    def _controls_in_range(self) -> "SensitivityQuery":
        q = len(self.contrast.weights)
        if any(c < 0 or c >= q for c in self.null_controls):
            raise ValueError(f"阴性对照索引超出范围 0..{q - 1}: {self.null_controls}")
        if len(self.null_controls) >= q:
            raise ValueError("阴性对照数量必须少于结局数")
        return self


def load_dataset(path: str, schema: ColumnSchema) -> Dataset:
    """读取 CSV 并构造 Dataset

    空单元格视为缺失，含缺失值的行被整体删除并记录删除数。

    Args:
        path: CSV 文件路径 (UTF-8，首行为表头)
        schema: 列角色映射

    Returns:
        校验通过的 Dataset

    Raises:
        MissingColumn: 表头缺少所需列
        NonNumericCell: 单元格无法解析为实数
        InsufficientRows: 完整行数不足 p+3
        NonBinaryTreatment: 二值处理取值不在 {0,1}
    """
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    raw.columns = [str(c).strip() for c in raw.columns]
    selected = list(schema.outcomes) + [schema.treatment] + list(schema.covariates)
    for column in selected:
        if column not in raw.columns:
            raise MissingColumn(column)

    numeric: Dict[str, pd.Series] = {}
    for column in selected:
        cells = raw[column].str.strip()
        missing = cells == ""
        values = pd.to_numeric(cells.where(~missing), errors="coerce")
        bad = values.isna() & ~missing
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise NonNumericCell(column, row + 1, raw[column].iloc[row])
        numeric[column] = values

    frame = pd.DataFrame(numeric)
    complete = frame.dropna(how="any")
    dropped = len(frame) - len(complete)
    if dropped:
        logger.info(f"删除 {dropped} 行含缺失值的记录")

    dataset = Dataset(
        outcomes=complete[list(schema.outcomes)].to_numpy(dtype=float),
        treatment=complete[schema.treatment].to_numpy(dtype=float),
        covariates=complete[list(schema.covariates)].to_numpy(dtype=float) if schema.covariates else np.zeros((len(complete), 0)),
        outcome_names=tuple(schema.outcomes),
        covariate_names=tuple(schema.covariates),
        binary_treatment=schema.binary,
        treatment_name=schema.treatment,
        dropped_rows=dropped,
    )
    logger.info(f"读取数据完成: n={dataset.n}, q={dataset.q}, p={dataset.p}")
    return dataset


def standardize_outcomes(d: Dataset) -> Tuple[Dataset, np.ndarray]:
    """把每个结局缩放为样本方差 1

    Returns:
        (标准化后的数据集, 原始标准差向量 scale)
    """
    scale = d.outcomes.std(axis=0, ddof=1)
    magnitude = np.maximum(1.0, np.abs(d.outcomes).max(axis=0))
    for j in range(d.q):
        if not np.isfinite(scale[j]) or scale[j] <= 1e-14 * magnitude[j]:
            raise ZeroVariance(j, d.outcome_names[j])
    return d.with_outcomes(d.outcomes / scale), scale

