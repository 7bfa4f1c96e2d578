"""Risk-aware recommendation of credit-limit increases.

Estimates per-level treatment effects of limit increases from observational
data, ranks candidate effect estimators by an estimated PEHE, and turns
bootstrapped effects into risk-adjusted, forward-looking recommendations.
"""

__version__ = "0.1.0"
