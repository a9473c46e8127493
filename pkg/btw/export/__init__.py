from btw.export.dot import render_dot

__all__ = ["render_dot"]
