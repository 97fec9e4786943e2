import os
from dotenv import load_dotenv

# 加载环境变量
load_dotenv()

# 日志配置
LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO")
LOG_FILE = os.environ.get("LOG_FILE", "")

# 随机数与并行配置
DEFAULT_SEED = int(os.environ.get("DEFAULT_SEED", 0))
N_JOBS = int(os.environ.get("N_JOBS", 1))

# 因子模型 EM 配置
EM_TOL = float(os.environ.get("EM_TOL", 1e-9))
EM_MAX_ITER = int(os.environ.get("EM_MAX_ITER", 5000))
DELTA_FLOOR_RATIO = float(os.environ.get("DELTA_FLOOR_RATIO", 1e-6))  # 特殊方差下限 = 比例 × 样本方差
CV_FOLDS = int(os.environ.get("CV_FOLDS", 5))

# 数值容差
RANK_TOL = float(os.environ.get("RANK_TOL", 1e-8))
PINV_TOL = float(os.environ.get("PINV_TOL", 1e-8))
FEASIBILITY_TOL = float(os.environ.get("FEASIBILITY_TOL", 1e-8))
RV_DEGENERACY_TOL = float(os.environ.get("RV_DEGENERACY_TOL", 1e-8))

# 倾向得分 (logistic) 配置
PROPENSITY_CLAMP = float(os.environ.get("PROPENSITY_CLAMP", 1e-12))
PROPENSITY_GRAD_TOL = float(os.environ.get("PROPENSITY_GRAD_TOL", 1e-8))
PROPENSITY_MAX_NORM = float(os.environ.get("PROPENSITY_MAX_NORM", 1e4))
PROPENSITY_MAX_ITER = int(os.environ.get("PROPENSITY_MAX_ITER", 100))

# Λ 标定配置
LAMBDA_UPPER = float(os.environ.get("LAMBDA_UPPER", 1e6))

# Bootstrap 配置
DEFAULT_BOOTSTRAP = int(os.environ.get("DEFAULT_BOOTSTRAP", 1000))
BOOTSTRAP_LEVEL = float(os.environ.get("BOOTSTRAP_LEVEL", 0.95))
BOOTSTRAP_MAX_RETRIES = int(os.environ.get("BOOTSTRAP_MAX_RETRIES", 10))

# 输出配置
REPORT_SCHEMA_VERSION = 1
SVG_HASH_SALT = os.environ.get("SVG_HASH_SALT", "factor-sensitivity")
