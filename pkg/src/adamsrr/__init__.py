"""Symbolic workbench for determinant-level Adams-Riemann-Roch in char p.

Layers: `expr` (virtual-bundle expression language), `splitting` (exact
Chern-root evaluator), `picard` (graded determinant-of-cohomology lines and
Deligne pairings), `chow` (truncated intersection-ring checks), `rewrite`
(cited-rule proof replay with traces), `cli` (command line front end).
"""

__version__ = "0.1.0"
