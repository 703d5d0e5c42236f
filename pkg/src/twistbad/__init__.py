"""Weighted twisted badly approximable linear forms: quality functionals,
a Schmidt-game strategy on curves, the lacunary sequence construction and
the inhomogeneous transference check."""

__version__ = "0.1.0"
