"""Configuration management for the paradifferential lab."""

from pydantic_settings import BaseSettings
from pydantic import Field
from typing import Literal


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Parallelism (thread caps never change results, only wall time)
    threads: int = Field(default=1, ge=1, validation_alias="PARADIFF_THREADS")
    fft_workers: int = Field(default=1, ge=1, validation_alias="PARADIFF_FFT_WORKERS")

    # Numerical tolerances
    support_threshold: float = Field(default=1e-10, gt=0, lt=1, validation_alias="PARADIFF_SUPPORT_THRESHOLD")
    resolution_tolerance: float = Field(default=1e-12, gt=0, validation_alias="PARADIFF_RESOLUTION_TOLERANCE")
    direct_chunk_entries: int = Field(default=2**22, ge=1024, validation_alias="PARADIFF_DIRECT_CHUNK")

    # Spectral inclusion constants: corona [lower, upper]*2^k, ball diagonal_upper*2^k
    inclusion_lower: float = Field(default=0.2, gt=0, validation_alias="PARADIFF_INCLUSION_LOWER")
    inclusion_upper: float = Field(default=1.625, gt=0, validation_alias="PARADIFF_INCLUSION_UPPER")
    diagonal_upper: float = Field(default=4.0, gt=0, validation_alias="PARADIFF_DIAGONAL_UPPER")

    # Marschall probe: sampling of the xi-row b(x, 2^k .)
    marschall_row_points: int = Field(default=1024, validation_alias="PARADIFF_MARSCHALL_POINTS")
    marschall_row_spacing: float = Field(default=1 / 64, gt=0, validation_alias="PARADIFF_MARSCHALL_SPACING")

    # Reproducibility
    default_seed: int = Field(default=20240601, validation_alias="PARADIFF_SEED")

    # Storage Configuration
    storage_type: Literal["local"] = Field(default="local", validation_alias="STORAGE_TYPE")
    output_dir: str = Field(default="./output/runs", validation_alias="PARADIFF_OUTPUT_DIR")

    # API Server Configuration
    api_host: str = Field(default="0.0.0.0", validation_alias="API_HOST")
    api_port: int = Field(default=8000, validation_alias="API_PORT")

    # Logging
    log_level: str = Field(default="INFO", validation_alias="LOG_LEVEL")
    log_file: str = Field(default="paradiff_lab.log", validation_alias="PARADIFF_LOG_FILE")

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = False
        extra = "ignore"


settings = Settings()
