"""
命令行入口

子命令: simulate / fit / analyze / robustness / calibrate / report
退出码: 0 成功，2 输入校验失败，3 不可行 (预算低于 R²min 或阴性对照不在列空间内)，4 数值失败
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pydantic

from .analysis.calibration import benchmark_table
from .analysis.data_model import ColumnSchema, Dataset, TreatmentContrast, load_dataset, make_contrast, standardize_outcomes
from .analysis.errors import InvalidControls, SensitivityError
from .analysis.factor_fit import check_identifiability, fit_factor_em, max_feasible_rank, select_rank
from .analysis.regression import fit_observed
from .analysis.simulation import SimConfig, generate
from .app import run_analysis
from .config import CV_FOLDS, DEFAULT_SEED, LOG_FILE, LOG_LEVEL, N_JOBS, PINV_TOL
from .states.state import AnalysisSettings
from .utils.file_utils import ensure_dir, write_benchmark_csv
from .utils.json_utils import read_json, write_json
from .visualize_intervals import plot_intervals

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 4


def _setup_logging() -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if LOG_FILE:
        Path(LOG_FILE).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(LOG_FILE, encoding="utf-8"))
    logging.basicConfig(
        level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
        format="%(asctime)s - %(levelname)s - %(message)s",
        handlers=handlers,
    )
    logging.captureWarnings(True)


def _names(text: Optional[str]) -> List[str]:
    if not text:
        return []
    return [item.strip() for item in text.split(",") if item.strip()]


def _floats(text: str) -> List[float]:
    try:
        return [float(item) for item in _names(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"无法解析为实数列表: {text}")


def _ints(text: str) -> List[int]:
    try:
        return [int(item) for item in _names(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"无法解析为整数列表: {text}")


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, help="CSV 数据文件路径")
    parser.add_argument("--outcomes", required=True, help="结局列名，逗号分隔")
    parser.add_argument("--treatment", required=True, help="处理列名")
    parser.add_argument("--covariates", default="", help="协变量列名，逗号分隔")
    parser.add_argument("--binary", action="store_true", help="处理为 0/1 二值变量")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED, help="随机种子")
    parser.add_argument("--n-jobs", type=int, default=N_JOBS, help="并行线程数 (bootstrap 与交叉验证)")
    parser.add_argument("--standardize", action="store_true", help="把结局标准化为单位方差后再分析")
    parser.add_argument("--out", required=True, help="输出目录")


def _add_rank_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--rank", type=int, default=None, help="固定因子秩 m")
    group.add_argument("--auto-rank", action="store_true", help="按 BIC + 交叉验证自动选秩 (默认)")
    parser.add_argument("--m-max", type=int, default=None, help="自动选秩的最大秩")


def _add_analysis_flags(parser: argparse.ArgumentParser) -> None:
    _add_data_flags(parser)
    _add_rank_flags(parser)
    parser.add_argument("--r2", type=_floats, default=[0.5], help="混杂预算 R²_{T~U|X}，逗号分隔")
    parser.add_argument("--null-controls", type=_ints, default=[], help="阴性对照结局序号 (从 1 开始)，逗号分隔")
    parser.add_argument("--lambda", dest="lambda_alpha", type=float, default=None, help="Λ_α 换算使用的 α (需二值处理)")
    parser.add_argument("--contrast", type=_floats, action="append", default=[], help="自定义结局对比权重 (可重复)")
    parser.add_argument("--bootstrap", type=int, default=0, help="bootstrap 次数 B")
    parser.add_argument("--t1", type=float, default=1.0, help="处理水平 t1")
    parser.add_argument("--t2", type=float, default=0.0, help="处理水平 t2")
    parser.add_argument("--reselect-rank", action="store_true", help="每个 bootstrap 重复重新选秩")
    parser.add_argument("--feasibility", choices=["error", "warn"], default="error", help="阴性对照不在列空间内时的处理方式")
    parser.add_argument("--pinv-tol", type=float, default=PINV_TOL, help="伪逆的相对秩容差")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factor-sensitivity",
        description="多结局、因子结构混杂下的敏感性分析",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="生成模拟数据 data.csv 与真值 truth.csv")
    simulate.add_argument("--n", type=int, default=1000)
    simulate.add_argument("--q", type=int, default=10)
    simulate.add_argument("--m", type=int, default=2)
    simulate.add_argument("--p", type=int, default=0)
    simulate.add_argument("--rho2", type=float, default=0.5, help="‖ρ‖²，必须小于 1")
    simulate.add_argument("--seed", type=int, default=DEFAULT_SEED)
    simulate.add_argument("--tau", type=_floats, default=None, help="真实效应，逗号分隔")
    simulate.add_argument("--mediator-mix", type=float, default=0.0, help="潜变量中处理后变量的比例")
    simulate.add_argument("--out", required=True)

    fit = sub.add_parser("fit", help="拟合观测数据模型，输出 fit.json")
    _add_data_flags(fit)
    _add_rank_flags(fit)

    analyze = sub.add_parser("analyze", help="完整分析，输出 report.json、intervals.svg、benchmark.csv")
    _add_analysis_flags(analyze)

    robustness = sub.add_parser("robustness", help="只输出稳健性值 robustness.json")
    _add_analysis_flags(robustness)

    calibrate = sub.add_parser("calibrate", help="协变量基准表 benchmark.csv")
    _add_data_flags(calibrate)
    calibrate.add_argument("--lambda", dest="lambda_alpha", type=float, default=None, help="Λ 分位数使用的 α (需二值处理)")

    report = sub.add_parser("report", help="由已有 report.json 重新绘制 intervals.svg")
    report.add_argument("--report", required=True, help="report.json 路径")
    report.add_argument("--out", required=True, help="输出目录")
    return parser


def _load(args: argparse.Namespace) -> Dataset:
    schema = ColumnSchema(
        outcomes=_names(args.outcomes),
        treatment=args.treatment,
        covariates=_names(args.covariates),
        binary=args.binary,
    )
    return load_dataset(args.data, schema)


def _settings(args: argparse.Namespace, dataset: Dataset) -> AnalysisSettings:
    controls = []
    for index in args.null_controls:
        if index < 1 or index > dataset.q:
            raise InvalidControls(f"阴性对照序号必须在 1..{dataset.q} 内: {index}")
        controls.append(index - 1)
    return AnalysisSettings(
        r2_budgets=args.r2,
        treatment_contrast=TreatmentContrast(t1=args.t1, t2=args.t2),
        contrasts=[make_contrast(weights) for weights in args.contrast],
        null_controls=controls,
        rank=args.rank,
        auto_rank=args.auto_rank or args.rank is None,
        m_max=args.m_max,
        lambda_alpha=args.lambda_alpha,
        feasibility=args.feasibility,
        pinv_tol=args.pinv_tol,
        bootstrap=args.bootstrap,
        seed=args.seed,
        n_jobs=args.n_jobs,
        reselect_rank=args.reselect_rank,
        standardize=args.standardize,
        data_name=Path(args.data).name,
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    config = SimConfig(
        n=args.n,
        q=args.q,
        m=args.m,
        p=args.p,
        rho_norm2=args.rho2,
        seed=args.seed,
        tau_true=args.tau,
        mediator_mix=args.mediator_mix,
    )
    truth = generate(config)
    out = ensure_dir(args.out)
    truth.write_csv(str(out / "data.csv"), str(out / "truth.csv"))
    logger.info(f"模拟数据已写出: {out / 'data.csv'}")
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    dataset = _load(args)
    scale = None
    if args.standardize:
        dataset, scale = standardize_outcomes(dataset)
    fit = fit_observed(dataset)
    rank_table = []
    if args.rank is None:
        m_max = args.m_max if args.m_max is not None else max_feasible_rank(dataset.q)
        m, rank_table = select_rank(fit.outcome_residuals, m_max, folds=CV_FOLDS, seed=args.seed, n_jobs=args.n_jobs)
    else:
        m = args.rank
    model = fit_factor_em(fit.outcome_residuals, m)
    payload = {
        "data": Path(args.data).name,
        "n": dataset.n,
        "q": dataset.q,
        "p": dataset.p,
        "outcome_names": list(dataset.outcome_names),
        "tau_check": fit.tau_check,
        "sigma2": fit.sigma2,
        "scale": scale,
        "factor_model": model.to_dict(),
        "loading_norms": [model.loading_norm(row) for row in np.eye(dataset.q)],
        "identifiability": check_identifiability(model),
        "rank_table": rank_table,
    }
    write_json(payload, ensure_dir(args.out) / "fit.json")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    dataset = _load(args)
    state = run_analysis(dataset, _settings(args, dataset))
    report = state["report"]
    out = ensure_dir(args.out)
    report_path = write_json(report, out / "report.json")
    plot_intervals(read_json(report_path), out / "intervals.svg")
    write_benchmark_csv(report.summary.benchmarks, dataset.outcome_names, out / "benchmark.csv")
    logger.info(f"分析结果已写出: {out}")
    return EXIT_OK


def cmd_robustness(args: argparse.Namespace) -> int:
    dataset = _load(args)
    settings = _settings(args, dataset).model_copy(update={"benchmarks": False})
    report = run_analysis(dataset, settings)["report"]
    rows = [outcome.robustness for outcome in report.outcomes]
    write_json({"r2_min": report.summary.r2_min, "robustness": rows}, ensure_dir(args.out) / "robustness.json")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    dataset = _load(args)
    rows = benchmark_table(dataset, alpha=args.lambda_alpha)
    write_benchmark_csv(rows, dataset.outcome_names, ensure_dir(args.out) / "benchmark.csv")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    plot_intervals(read_json(args.report), ensure_dir(args.out) / "intervals.svg")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "analyze": cmd_analyze,
    "robustness": cmd_robustness,
    "calibrate": cmd_calibrate,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """命令行主函数，返回退出码"""
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging()
    try:
        return COMMANDS[args.command](args)
    except SensitivityError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except (pydantic.ValidationError, ValueError) as e:
        logger.error(f"输入校验失败: {e}")
        return EXIT_VALIDATION
    except (np.linalg.LinAlgError, ArithmeticError) as e:
        logger.error(f"数值计算失败: {type(e).__name__}: {e}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
