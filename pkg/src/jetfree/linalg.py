"""Exact linear algebra over rationals and over rational-function matrices.

Rational matrices are lists of rows of ``Fraction``.  The forward pass
clears denominators and runs fraction-free (Bareiss) elimination over
integers; reduced echelon form, ranks, kernels, and affine solves are
then exact by construction.  Rational-function matrices (entries
:class:`~jetfree.symkernel.Expr`) get determinant and inverse through
field elimination with structural zero tests, which canonical form makes
decidable.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

from .errors import NoSolution, SingularJacobian
from .symkernel import Expr

Row = list[Fraction]


def _clear_denominators(rows: Sequence[Sequence[Fraction]]) -> list[list[int]]:
    out = []
    for row in rows:
        lcm = 1
        for c in row:
            lcm = lcm * c.denominator // math.gcd(lcm, c.denominator)
        out.append([int(c * lcm) for c in row])
    return out


def _bareiss_forward(m: list[list[int]]) -> tuple[list[list[int]], list[int], int]:
    """Fraction-free row echelon form.

    Returns (echelon rows, pivot column list, sign of row permutation).
    Entries stay integral throughout; each pivot row is exact up to the
    running divisor, which cancels in rank/kernel/determinant uses.
    """
    nrows = len(m)
    ncols = len(m[0]) if nrows else 0
    m = [row[:] for row in m]
    pivots: list[int] = []
    sign = 1
    prev = 1
    r = 0
    for c in range(ncols):
        pr = None
        for i in range(r, nrows):
            if m[i][c]:
                pr = i
                break
        if pr is None:
            continue
        if pr != r:
            m[r], m[pr] = m[pr], m[r]
            sign = -sign
        pivot = m[r][c]
        for i in range(r + 1, nrows):
            fi = m[i][c]
            row_i = m[i]
            row_r = m[r]
            for j in range(c, ncols):
                row_i[j] = (pivot * row_i[j] - fi * row_r[j]) // prev
        prev = pivot
        pivots.append(c)
        r += 1
        if r == nrows:
            break
    return m[:r], pivots, sign


def rref(rows: Sequence[Sequence[Fraction]]) -> tuple[list[Row], list[int]]:
    """Reduced row echelon form with unit pivots; returns (rows, pivot cols)."""
    if not rows:
        return [], []
    ech, pivots, _ = _bareiss_forward(_clear_denominators(rows))
    ncols = len(rows[0])
    red: list[Row] = [[Fraction(x) for x in row] for row in ech]
    for k in range(len(pivots) - 1, -1, -1):
        c = pivots[k]
        pv = red[k][c]
        red[k] = [x / pv for x in red[k]]
        for i in range(k):
            f = red[i][c]
            if f:
                red[i] = [a - f * b for a, b in zip(red[i], red[k])]
    return red, pivots


def rank(rows: Sequence[Sequence[Fraction]]) -> int:
    if not rows:
        return 0
    _, pivots, _ = _bareiss_forward(_clear_denominators(rows))
    return len(pivots)


def nullspace(rows: Sequence[Sequence[Fraction]], ncols: int) -> list[Row]:
    """Basis of the right kernel, one vector per free column in column order.

    Each basis vector has value 1 in its free column and 0 in the others,
    so the result is deterministic and directly readable.
    """
    if not rows:
        return [[Fraction(1 if i == j else 0) for i in range(ncols)] for j in range(ncols)]
    red, pivots = rref(rows)
    pivset = set(pivots)
    free = [c for c in range(ncols) if c not in pivset]
    basis: list[Row] = []
    for f in free:
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for k, c in enumerate(pivots):
            v[c] = -red[k][f]
        basis.append(v)
    return basis


def solve_affine(
    a: Sequence[Sequence[Fraction]], b: Sequence[Fraction]
) -> tuple[Row, list[Row]]:
    """All solutions of A x = b as (particular, kernel basis).

    Raises NoSolution when the system is inconsistent.  The particular
    solution sets every free variable to zero.
    """
    if not a:
        n = 0
        if any(b):
            raise NoSolution("inconsistent empty system")
        return [], []
    ncols = len(a[0])
    aug = [list(row) + [rhs] for row, rhs in zip(a, b)]
    red, pivots = rref(aug)
    if pivots and pivots[-1] == ncols:
        raise NoSolution("inconsistent linear system")
    x = [Fraction(0)] * ncols
    for k, c in enumerate(pivots):
        x[c] = red[k][ncols]
    basis = nullspace(a, ncols)
    return x, basis


def det(rows: Sequence[Sequence[Fraction]]) -> Fraction:
    n = len(rows)
    if n == 0:
        return Fraction(1)
    ints = _clear_denominators(rows)
    scale = Fraction(1)
    for orig, cleared in zip(rows, ints):
        for co, ci in zip(orig, cleared):
            if ci:
                scale /= Fraction(ci) / co
                break
        else:
            return Fraction(0)
    ech, pivots, sign = _bareiss_forward(ints)
    if len(pivots) < n:
        return Fraction(0)
    # Bareiss: last pivot of the full forward pass is det of the integer matrix
    return sign * Fraction(ech[-1][pivots[-1]]) * scale


def matmul(a: Sequence[Sequence[Fraction]], b: Sequence[Sequence[Fraction]]) -> list[Row]:
    return [
        [sum((ra[k] * b[k][j] for k in range(len(b))), Fraction(0)) for j in range(len(b[0]))]
        for ra in a
    ]


# ---------------------------------------------------------------------------
# rational-function matrices


def expr_det(rows: Sequence[Sequence[Expr]]) -> Expr:
    """Determinant of a square Expr matrix (cofactor for tiny, elimination else)."""
    n = len(rows)
    reg = rows[0][0].reg
    if n == 1:
        return rows[0][0]
    if n == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    m = [list(r) for r in rows]
    result = Expr.const(reg, 1)
    for c in range(n):
        pr = None
        for i in range(c, n):
            if not m[i][c].is_zero():
                pr = i
                break
        if pr is None:
            return Expr.const(reg, 0)
        if pr != c:
            m[c], m[pr] = m[pr], m[c]
            result = -result
        pivot = m[c][c]
        result = result * pivot
        for i in range(c + 1, n):
            f = m[i][c] / pivot
            if f.is_zero():
                continue
            m[i] = [a - f * b for a, b in zip(m[i], m[c])]
    return result


def expr_inverse(
    rows: Sequence[Sequence[Expr]], singular_error: type[Exception] = SingularJacobian
) -> list[list[Expr]]:
    """Exact inverse of a square Expr matrix by Gauss-Jordan over the
    rational-function field; raises ``singular_error`` when the matrix is
    singular as a matrix of rational functions."""
    n = len(rows)
    reg = rows[0][0].reg
    zero = Expr.const(reg, 0)
    one = Expr.const(reg, 1)
    m = [list(r) for r in rows]
    inv = [[one if i == j else zero for j in range(n)] for i in range(n)]
    for c in range(n):
        pr = None
        for i in range(c, n):
            if not m[i][c].is_zero():
                pr = i
                break
        if pr is None:
            raise singular_error("matrix of rational functions is singular")
        if pr != c:
            m[c], m[pr] = m[pr], m[c]
            inv[c], inv[pr] = inv[pr], inv[c]
        pivot = m[c][c]
        m[c] = [e / pivot for e in m[c]]
        inv[c] = [e / pivot for e in inv[c]]
        for i in range(n):
            if i == c:
                continue
            f = m[i][c]
            if f.is_zero():
                continue
            m[i] = [a - f * b for a, b in zip(m[i], m[c])]
            inv[i] = [a - f * b for a, b in zip(inv[i], inv[c])]
    return inv
