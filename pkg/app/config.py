from __future__ import annotations

from functools import lru_cache
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    dense_qubit_cap: int = Field(26, alias="QSDC_DENSE_QUBIT_CAP", ge=1, le=30)
    debug_checks: bool = Field(False, alias="QSDC_DEBUG_CHECKS")
    invariant_check_interval: int = Field(1000, alias="QSDC_INVARIANT_CHECK_INTERVAL", ge=1)
    workers: int = Field(4, alias="QSDC_WORKERS", ge=1)
    log_level: str = Field("INFO", alias="QSDC_LOG_LEVEL")
    database_url: Optional[str] = Field(None, alias="QSDC_DATABASE_URL")
    cip_census_max_length: int = Field(20, alias="QSDC_CIP_CENSUS_MAX_LENGTH", ge=1)
    report_schema_version: str = "1.0"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
        case_sensitive=False,
        populate_by_name=True,
    )


@lru_cache
def get_settings() -> Settings:
    return Settings()


settings = get_settings()
