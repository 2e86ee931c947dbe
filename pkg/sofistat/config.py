from __future__ import annotations

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Config(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="SOFISTAT_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # ─────────────────── General ────────────────────
    version: str = "0.1.0"
    log_level: str = Field("INFO", description="loguru sink level used by the CLI")
    threads: int = Field(1, ge=1, description="workers for independent report cells")
    progress: bool = Field(False, description="tqdm bars for long enumerations")

    # ─────────────────── Search ─────────────────────
    exhaustive_budget: int = Field(10**7, ge=1, description="max scored candidates")
    chunk_size: int = Field(1 << 14, ge=1, description="candidates per enumeration chunk")
    local_restarts: int = 4
    local_max_moves: int = 200

    # ─────────────────── Carriers ───────────────────
    max_carrier: int = Field(1 << 20, description="largest carrier a builder may create")
    max_join_blocks: int = Field(1 << 24, ge=1, description="largest block count a join may index")

    # ─────────────────── Sofic validation ───────────
    pass_band_lo: float = 0.30
    pass_band_hi: float = 0.70

    # ─────────────────── Hom counting ───────────────
    mc_samples: int = 2000
    mc_confidence_z: float = 1.96
    genprof_bound_power: int = Field(2, ge=1, description="N from bound < min(eps, eps**p)")


CONFIG = Config()
