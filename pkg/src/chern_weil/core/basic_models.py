from dataclasses import dataclass, field
from typing import Any, Dict, Optional
import math

@dataclass
class AxisBounds:
    axis: str
    low: float
    high: float

    def to_dict(self):
        return {"axis": self.axis, "low": _float_text(self.low), "high": _float_text(self.high)}

    @staticmethod
    def from_dict(data):
        return AxisBounds(data["axis"], float(data["low"]), float(data["high"]))

    @staticmethod
    def parse(text: str) -> 'AxisBounds':
        """Parses 'x=-inf..inf', 'y=0..1' or the whole-line shorthand 'x=inf'."""
        if "=" not in text:
            raise ValueError(f"Bounds must look like axis=low..high or axis=inf, got '{text}'")
        axis, rng = text.split("=", 1)
        if rng.strip() == "inf":
            return AxisBounds(axis.strip(), -math.inf, math.inf)
        if ".." not in rng:
            raise ValueError(f"Bounds must look like axis=low..high or axis=inf, got '{text}'")
        low, high = rng.split("..", 1)
        bounds = AxisBounds(axis.strip(), float(low.strip()), float(high.strip()))
        if not bounds.low < bounds.high:
            raise ValueError(f"Empty interval for axis '{bounds.axis}'")
        return bounds

@dataclass
class IntegrationResult:
    value: float
    error: float
    nodes: int
    method: str = "gauss"

    def to_dict(self):
        return {"value": self.value, "error": self.error, "nodes": self.nodes, "method": self.method}

    @staticmethod
    def from_dict(data):
        return IntegrationResult(data["value"], data["error"], data["nodes"], data.get("method", "gauss"))

@dataclass
class EqualityVerdict:
    equal: bool
    exact: bool = False
    # Sample point (variable name -> value) where the two sides disagreed
    witness: Optional[Dict[str, complex]] = None
    trials: int = 0

    def __bool__(self):
        return self.equal

    def to_dict(self):
        return {
            "equal": self.equal,
            "exact": self.exact,
            "witness": None if self.witness is None else {k: [v.real, v.imag] for k, v in self.witness.items()},
            "trials": self.trials
        }

    @staticmethod
    def from_dict(data):
        witness = data.get("witness")
        if witness is not None:
            witness = {k: complex(v[0], v[1]) for k, v in witness.items()}
        return EqualityVerdict(data["equal"], data.get("exact", False), witness, data.get("trials", 0))

@dataclass
class ClassDescriptor:
    name: str
    field: str
    class_type: str
    function: str
    symbol: str = ""
    latex: str = ""
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "field": self.field,
            "class_type": self.class_type,
            "function": self.function,
            "symbol": self.symbol,
            "latex": self.latex
        }

    @staticmethod
    def from_dict(data):
        return ClassDescriptor(
            data["name"], data["field"], data["class_type"], data["function"],
            data.get("symbol", ""), data.get("latex", "")
        )

def _float_text(value: float) -> str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)
