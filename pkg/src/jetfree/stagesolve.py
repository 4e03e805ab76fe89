"""Affine extraction and solving for staged elimination problems.

Several constructions solve for jet coefficients order by order: inverting
a jet, sampling a group jet from its determining system, normalizing a
moving frame.  Each stage substitutes everything already known and leaves
equations that must be affine in that stage's unknowns.  This module
checks affineness exactly and reduces the stage to one exact linear
solve.
"""

from __future__ import annotations

from .errors import PreconditionViolation
from .linalg import solve_affine
from .symkernel import Expr, Scalar, VarRegistry, scalar


def extract_affine(
    e: Expr,
    unknowns: list[int],
    reg: VarRegistry,
    error: type[Exception] = PreconditionViolation,
) -> tuple[list[Scalar], Scalar]:
    """Write e as const + sum(coeff_i * unknown_i), exactly.

    Raises the given error class when e is not affine in the unknowns
    (including unknowns in a denominator) or depends on other variables.
    """
    zero = {v: Expr.const(reg, 0) for v in unknowns}
    try:
        const = e.subst(zero).as_scalar()
    except Exception as exc:
        raise error(f"stage equation is not affine in the stage unknowns: {e}") from exc
    coeffs = []
    rebuilt = Expr.const(reg, const)
    for v in unknowns:
        try:
            c = e.diff(v).subst(zero).as_scalar()
        except Exception as exc:
            raise error(f"stage equation is not affine in the stage unknowns: {e}") from exc
        coeffs.append(c)
        if c != 0:
            rebuilt = rebuilt + Expr.const(reg, c) * Expr.var(reg, v)
    if not (rebuilt - e).is_zero():
        raise error(f"stage equation is not affine in the stage unknowns: {e}")
    return coeffs, const


def solve_affine_exprs(
    equations: list[Expr],
    unknowns: list[int],
    reg: VarRegistry,
    error: type[Exception] = PreconditionViolation,
) -> tuple[list[Scalar], list[list[Scalar]]]:
    """Solve equations(unknowns) = 0 where each equation is affine in the
    unknowns; returns (particular solution, kernel basis).

    Raises NoSolution if the affine system is inconsistent, and the given
    error class if an equation is not affine.
    """
    rows, rhs = [], []
    for e in equations:
        if e.is_zero():
            continue
        coeffs, const = extract_affine(e, unknowns, reg, error)
        rows.append(coeffs)
        rhs.append(scalar(0) - const)
    if not rows:
        basis = []
        for i in range(len(unknowns)):
            vec = [scalar(0)] * len(unknowns)
            vec[i] = scalar(1)
            basis.append(vec)
        return [scalar(0)] * len(unknowns), basis
    return solve_affine(rows, rhs)
