import os
from typing import Dict, Any, Optional
from dataclasses import dataclass, replace
from enum import Enum

from config import settings


class Environment(Enum):
    DEVELOPMENT = "development"
    TESTING = "testing"
    PRODUCTION = "production"


@dataclass(frozen=True)
class TreeConfig:
    page_bits: int = settings.PAGE_BITS
    access_intent_enabled: bool = settings.ACCESS_INTENT_ENABLED
    cache_capacity: int = settings.CACHE_CAPACITY
    latch_capacity: int = settings.LATCH_CAPACITY
    debug_checks: bool = settings.DEBUG_CHECKS
    record_latch_events: bool = settings.RECORD_LATCH_EVENTS
    max_pages: Optional[int] = settings.MAX_PAGES or None

    def with_overrides(self, **overrides) -> 'TreeConfig':
        """Copy with every non-None override applied"""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


@dataclass(frozen=True)
class StressConfig:
    workers: int = settings.STRESS_WORKERS
    ops_per_worker: int = settings.STRESS_OPS
    seed: int = settings.STRESS_SEED
    mix: str = settings.STRESS_MIX
    timeout: float = settings.STRESS_TIMEOUT
    keys_per_worker: int = settings.STRESS_KEYS_PER_WORKER


@dataclass(frozen=True)
class LoggingConfig:
    level: str = "INFO"
    file_path: str = settings.LOG_FILE
    max_file_size: int = 10485760  # 10MB
    backup_count: int = 5


class RuntimeConfig:
    def __init__(self, environment: Environment = Environment.DEVELOPMENT):
        self.environment = environment
        self._load_config()

    def _load_config(self):
        """Load configuration based on environment"""
        if self.environment == Environment.PRODUCTION:
            self._load_production_config()
        elif self.environment == Environment.TESTING:
            self._load_testing_config()
        else:
            self._load_development_config()

    def _load_development_config(self):
        """Development configuration: protocol assertions on"""
        self.tree = TreeConfig(debug_checks=True)
        self.stress = StressConfig()
        self.logging = LoggingConfig(level=os.getenv('LOG_LEVEL', 'DEBUG'))

    def _load_testing_config(self):
        """Testing configuration: small pages so a few keys build deep trees"""
        self.tree = TreeConfig(page_bits=9, debug_checks=True, record_latch_events=True)
        self.stress = StressConfig(workers=4, ops_per_worker=2000, keys_per_worker=512, timeout=60)
        self.logging = LoggingConfig(level=os.getenv('LOG_LEVEL', 'WARNING'))

    def _load_production_config(self):
        """Production configuration: instrumentation compiled out"""
        self.tree = TreeConfig(debug_checks=False, record_latch_events=False)
        self.stress = StressConfig()
        self.logging = LoggingConfig(
            level=os.getenv('LOG_LEVEL', 'INFO'),
            max_file_size=52428800,  # 50MB
            backup_count=10
        )

    def get_tree_config(self) -> Dict[str, Any]:
        """Get tree configuration"""
        return {
            'page_bits': self.tree.page_bits,
            'access_intent_enabled': self.tree.access_intent_enabled,
            'cache_capacity': self.tree.cache_capacity,
            'latch_capacity': self.tree.latch_capacity,
            'debug_checks': self.tree.debug_checks,
            'record_latch_events': self.tree.record_latch_events,
            'max_pages': self.tree.max_pages
        }

    def get_logging_config(self) -> Dict[str, Any]:
        """Get logging configuration"""
        return {
            'level': self.logging.level,
            'file_path': self.logging.file_path,
            'max_file_size': self.logging.max_file_size,
            'backup_count': self.logging.backup_count
        }

    def is_production(self) -> bool:
        """Check if running in production"""
        return self.environment == Environment.PRODUCTION


# Global configuration instance
config = RuntimeConfig(
    environment=Environment(os.getenv('ENVIRONMENT', 'development'))
)
