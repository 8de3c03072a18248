"""
Configuration settings for the KdV low-regularity integrator toolkit
"""

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings with environment variable support"""

    # Parallelism
    KDV_JOBS: int = 1  # fallback when neither --jobs nor the config file sets jobs

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "json"  # json | console

    # Numerical defaults
    DEFAULT_MODES: int = 2048
    DEFAULT_C_SMALL: float = 0.125
    DEFAULT_SEED: int = 42

    # Cost guards for the brute-force oracles and scans
    ORACLE_MAX_PAIR_K: int = 64
    ORACLE_MAX_TRIPLE_K: int = 32
    SCAN_MAX_BOUND: int = 60

    # Performance
    REFERENCE_CACHE_SIZE: int = 8

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = True
        extra = "ignore"


# Global settings instance
settings = Settings()


def validate_settings(candidate: Settings = None):
    """Validate critical settings"""
    candidate = candidate or settings
    errors = []

    if candidate.KDV_JOBS < 1:
        errors.append("KDV_JOBS must be a positive integer")

    if candidate.LOG_LEVEL.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        errors.append(f"LOG_LEVEL {candidate.LOG_LEVEL!r} is not a logging level")

    if candidate.LOG_FORMAT not in ("json", "console"):
        errors.append("LOG_FORMAT must be 'json' or 'console'")

    if candidate.DEFAULT_MODES < 1:
        errors.append("DEFAULT_MODES must be at least 1")

    if not 0.0 < candidate.DEFAULT_C_SMALL < 1.0:
        errors.append("DEFAULT_C_SMALL must lie in (0, 1)")

    for name in ("ORACLE_MAX_PAIR_K", "ORACLE_MAX_TRIPLE_K", "SCAN_MAX_BOUND", "REFERENCE_CACHE_SIZE"):
        if getattr(candidate, name) < 1:
            errors.append(f"{name} must be at least 1")

    if errors:
        raise ValueError("Configuration errors:\n" + "\n".join(f"- {error}" for error in errors))


# Validate on import
validate_settings()
