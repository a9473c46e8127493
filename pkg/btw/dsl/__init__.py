from btw.dsl.formatter import format_expr, format_spec
from btw.dsl.lower import lower
from btw.dsl.parser import parse

__all__ = ["format_expr", "format_spec", "lower", "parse"]
