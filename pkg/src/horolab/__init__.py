"""Numerical laboratory for sparse ergodic averages of the horocycle flow on
SL2(R)/SL2(Z): orbit geometry, averaging operators, Weyl-sum moments,
complementary-series spectral norms and exceptional-set box counts."""

__version__ = "0.1.0"
