from btw.validator.codes import CODES, explain
from btw.validator.rules import validate

__all__ = ["CODES", "explain", "validate"]
