import random
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

from chern_weil.core.basic_models import EqualityVerdict
from chern_weil.core.symexpr import ExprLike, equal_sym


@dataclass
class ComputationContext:
    """
    Shared state of one computation: the seeded random source for sampling,
    numeric implementations of opaque functions and the frames to work in.
    Passed to characteristic-form evaluation and quadrature.
    """
    rng: random.Random = field(default_factory=lambda: random.Random(0))

    # Numeric implementations of opaque functions, keyed by display name ("A", "A'")
    fn_impls: Dict[str, Callable[..., Any]] = field(default_factory=dict)

    # Sampling parameters for equal_sym; None means the engine config value
    trials: Optional[int] = None
    tolerance: Optional[float] = None

    # Restrict characteristic-form evaluation to these frame names
    frames: Optional[List[str]] = None

    # Wall-clock seconds per labelled step
    timings: Dict[str, float] = field(default_factory=dict)

    @staticmethod
    def seeded(seed: int, **kwargs) -> 'ComputationContext':
        return ComputationContext(rng=random.Random(seed), **kwargs)

    def equal(self, a: ExprLike, b: ExprLike) -> EqualityVerdict:
        return equal_sym(a, b, trials=self.trials, tol=self.tolerance, rng=self.rng, fn_impls=self.fn_impls)

    def record(self, label: str, seconds: float):
        self.timings[label] = self.timings.get(label, 0.0) + seconds
