from dataclasses import dataclass, asdict, fields
import json
import logging
import os

CONFIG_FILE_NAME = "chern_weil_config.json"

logger = logging.getLogger(__name__)

@dataclass
class EngineConfig:
    # Probabilistic equality (equal_sym)
    EQUAL_SYM_TRIALS: int = 20
    EQUAL_SYM_TOL: float = 1e-8
    SAMPLE_LOW: float = -2.0
    SAMPLE_HIGH: float = 2.0
    DENOMINATOR_REJECT: float = 1e-6
    MAX_SAMPLE_ATTEMPTS: int = 1000

    # Numeric evaluation
    POLE_EPSILON: float = 1e-300

    # Canonicalization
    TRIG_REWRITE: bool = False

    # Quadrature
    QUAD_NODES: int = 64
    QUAD_MAX_NODES: int = 2048
    QUAD_TOLERANCE: float = 1e-5

    # Output
    JSON_PRECISION: int = 12

    # Characteristic forms
    CLASSES_CACHE: bool = True

    @staticmethod
    def load() -> 'EngineConfig':
        if os.path.exists(CONFIG_FILE_NAME):
            try:
                with open(CONFIG_FILE_NAME, 'r') as f:
                    data = json.load(f)
                known = {f.name for f in fields(EngineConfig)}
                return EngineConfig(**{k: v for k, v in data.items() if k in known})
            except Exception as e:
                logger.warning(f"Ignoring unreadable {CONFIG_FILE_NAME}: {e}")
                return EngineConfig() # Fallback to defaults
        return EngineConfig()

    def save(self):
        try:
            with open(CONFIG_FILE_NAME, 'w') as f:
                json.dump(asdict(self), f, indent=4)
        except Exception as e:
            logger.error(f"Failed to save config: {e}")

# Global instance
config = EngineConfig.load()
