"""heavenlab: verification laboratory for the operator Bessel calculus behind
the heavenly equation u_xx + u_yy + (e^u)_zz = 0 and its prolongation
structure."""

__version__ = "0.1.0"
