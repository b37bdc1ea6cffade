import os
from pathlib import Path
from typing import Tuple
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

_LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')


class Settings:
    """
    Centralized configuration for the snellforge laboratory.

    Values come from environment variables (optionally a .env file). Library
    functions take explicit arguments and only fall back to these values when
    the caller passes None, so tests can override either way.
    """

    def __init__(self):
        # Base directories
        self.BASE_DIR = Path(__file__).parent.parent
        self.OUTPUT_DIR = Path(os.getenv('SNELLFORGE_OUTPUT_DIR', './out'))

        # Logging
        self.LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
        self.LOG_DIR = os.getenv('LOG_DIR', '')

        # Enumeration guards
        self.ENUM_CAP = int(os.getenv('SNELLFORGE_ENUM_CAP', '1000000'))
        # check skips brute-force oracles above this many split stopping times
        self.CHECK_ENUM_CAP = int(os.getenv('SNELLFORGE_CHECK_ENUM_CAP', '2000'))

        # Numerical tolerances
        self.PROB_TOL = 1e-12
        self.INVARIANT_TOL = float(os.getenv('SNELLFORGE_INVARIANT_TOL', '1e-10'))

        # Picard iteration (RBSDE / DRBSDE with Lipschitz driver)
        self.PICARD_TOL = float(os.getenv('SNELLFORGE_PICARD_TOL', '1e-12'))
        self.PICARD_MAX_ITER = int(os.getenv('SNELLFORGE_PICARD_MAX_ITER', '200'))
        self.BETA_SCHEDULE: Tuple[float, ...] = (10.0, 100.0, 1000.0)

        # Coupled monotone iteration (DRBSDE)
        self.COUPLED_TOL = float(os.getenv('SNELLFORGE_COUPLED_TOL', '1e-12'))
        self.COUPLED_MAX_ITER = int(os.getenv('SNELLFORGE_COUPLED_MAX_ITER', '10000'))

        # Random scenario generation limits
        self.MAX_GEN_STEPS = 5
        self.MAX_GEN_BRANCHING = 3

    def validate(self) -> bool:
        """
        Validate the configuration values.

        Returns:
            bool: True if configuration is valid, raises ValueError otherwise
        """
        errors = []

        if self.ENUM_CAP <= 0:
            errors.append("SNELLFORGE_ENUM_CAP must be positive")

        if self.CHECK_ENUM_CAP <= 0:
            errors.append("SNELLFORGE_CHECK_ENUM_CAP must be positive")

        for name in ('INVARIANT_TOL', 'PICARD_TOL', 'COUPLED_TOL'):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be positive")

        for name in ('PICARD_MAX_ITER', 'COUPLED_MAX_ITER'):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be at least 1")

        if self.LOG_LEVEL.upper() not in _LOG_LEVELS:
            errors.append(f"LOG_LEVEL must be one of {', '.join(_LOG_LEVELS)}")

        if errors:
            raise ValueError(f"Configuration validation failed:\n" + "\n".join(f"  - {e}" for e in errors))

        return True

    def summary(self) -> dict:
        """
        Effective configuration as a plain dictionary (for reports and scripts).

        Returns:
            dict: Setting name to value
        """
        return {
            'SNELLFORGE_ENUM_CAP': self.ENUM_CAP,
            'SNELLFORGE_CHECK_ENUM_CAP': self.CHECK_ENUM_CAP,
            'SNELLFORGE_OUTPUT_DIR': str(self.OUTPUT_DIR),
            'SNELLFORGE_INVARIANT_TOL': self.INVARIANT_TOL,
            'SNELLFORGE_PICARD_TOL': self.PICARD_TOL,
            'SNELLFORGE_PICARD_MAX_ITER': self.PICARD_MAX_ITER,
            'SNELLFORGE_COUPLED_TOL': self.COUPLED_TOL,
            'SNELLFORGE_COUPLED_MAX_ITER': self.COUPLED_MAX_ITER,
            'LOG_LEVEL': self.LOG_LEVEL,
            'LOG_DIR': self.LOG_DIR,
        }


# Global settings instance
settings = Settings()
