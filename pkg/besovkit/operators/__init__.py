from .opcalc import PositiveOperator, fractional_power, resolvent, verify_phi_positive
from .symbols import Symbol, symbol_from_spec
from .multiplier import MultiplierReport, apply_multiplier, check_hormander, check_mikhlin

__all__ = [
    "PositiveOperator",
    "fractional_power",
    "resolvent",
    "verify_phi_positive",
    "Symbol",
    "symbol_from_spec",
    "MultiplierReport",
    "apply_multiplier",
    "check_hormander",
    "check_mikhlin",
]
