"""Configuration management for the stein-density toolkit."""
import os
from pathlib import Path
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Settings(BaseSettings):
    """Application settings loaded from environment variables.

    Every field can be overridden with a ``STEIN_DENSITY_`` prefixed variable,
    e.g. ``STEIN_DENSITY_THREADS=8``. Settings control resolution and
    parallelism only; identical seeds give identical results for any value
    of ``threads``.
    """

    # Parallelism
    threads: int = os.cpu_count() or 1
    block_size: int = 8192  # Samples per random block, never tied to threads

    # Quadrature
    quad_order: int = 32  # Gauss-Legendre nodes per coordinate for tensor rules
    quad_abs_tol: float = 1e-10
    quad_rel_tol: float = 1e-8
    quad_max_depth: int = 50
    kernel_panels: int = 4  # Panels of the batched kernel operator rule
    kernel_nodes: int = 16  # Nodes per panel
    max_tensor_nodes: int = 2**21  # Larger tensor grids get a reduced order

    # Distributions
    tail_level: float = 1e-12  # Quantile level used to truncate unbounded supports
    quantile_table_size: int = 2049

    # Monte Carlo
    inner_mc_samples: int = 4096  # Inner draws when tensor quadrature is refused
    expectation_mc_samples: int = 10**6

    # Output settings
    output_dir: Path = Path("output")
    log_dir: Path = Path("output/logs")
    csv_digits: int = 17
    pretty_print_json: bool = True

    model_config = SettingsConfigDict(
        env_prefix="STEIN_DENSITY_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )


# Global settings instance
settings = Settings()
