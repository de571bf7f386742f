import os
from typing import Optional


class HarnessConfig:
    def __init__(self):
        self.data_dir: str = os.getenv("EKFAC_DATA_DIR", "./data")
        self.max_kron_dim: int = int(os.getenv("EKFAC_MAX_KRON_DIM", "4096"))
        oracle_env = os.getenv("EKFAC_ORACLE_MAX_PARAMS")
        # None lets the diagnose command size the limit to the measured layer
        self.oracle_max_params_override: Optional[int] = (
            int(oracle_env) if oracle_env else None
        )
        self.oracle_max_params: int = self.oracle_max_params_override or 1024
        self.divergence_threshold: float = float(
            os.getenv("EKFAC_DIVERGENCE_THRESHOLD", "1e6")
        )

        # Logging settings
        self.log_level: str = os.getenv("EKFAC_LOG_LEVEL", "INFO").upper()
        self.log_format: str = os.getenv("EKFAC_LOG_FORMAT", "text").lower()

    @property
    def json_logs(self) -> bool:
        return self.log_format == "json"


harness_config = HarnessConfig()
