from typing import Any, Dict, Type

from chern_weil.core.base.invariant import InvariantPolynomial
from chern_weil.core.errors import CharClassError
from chern_weil.core.invariants.implementations import (
    DeterminantInvariant,
    PfaffianInvariant,
    TraceInvariant
)

class InvariantFactory:
    _registry: Dict[str, Type[InvariantPolynomial]] = {
        "additive": TraceInvariant,
        "multiplicative": DeterminantInvariant,
        "pfaffian": PfaffianInvariant
    }

    @classmethod
    def create(cls, class_type: str) -> InvariantPolynomial:
        invariant_class = cls._registry.get(class_type)
        if invariant_class:
            return invariant_class()
        raise CharClassError(f"Unknown class type: {class_type}")

    @classmethod
    def create_from_dict(cls, data: Dict[str, Any]) -> InvariantPolynomial:
        type_id = data.get("type")
        invariant_class = cls._registry.get(type_id)
        if invariant_class:
            return invariant_class.from_dict(data)
        raise CharClassError(f"Unknown class type: {type_id}")

    @classmethod
    def types(cls):
        return list(cls._registry)
