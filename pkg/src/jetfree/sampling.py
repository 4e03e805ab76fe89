"""Seeded random sampling of points, jets, and group elements.

Everything draws from a caller-supplied :class:`random.Random`, so runs
are reproducible from a single integer seed.  Rationals are sampled with
bounded numerator and denominator; verdict computations stay exact on
these inputs.

Group jets are sampled by solving the prolonged determining system at a
base point stage by stage: each jet order is an affine problem in that
order's coefficients, whose solution set is the identity stage plus the
stage kernel; a random kernel combination gives a generic pseudogroup
jet.
"""

from __future__ import annotations

import random

from .detsys import PseudogroupSpec, _max_order, prolong_determining_system
from .errors import NoSolution, PreconditionViolation, SingularJet
from .jetspace import MultiIndex, SpaceSpec, mi_enumerate
from .prolong import DiffeoJet, SubmanifoldJetPoint, context_for
from .stagesolve import solve_affine_exprs
from .symkernel import Expr, Scalar, scalar


def random_rational(rng: random.Random, bound: int = 10) -> Scalar:
    return scalar(rng.randint(-bound, bound), rng.randint(1, bound))


def random_nonzero_rational(rng: random.Random, bound: int = 10) -> Scalar:
    while True:
        v = random_rational(rng, bound)
        if v != 0:
            return v


def random_point(space: SpaceSpec, rng: random.Random, bound: int = 10) -> tuple:
    return tuple(random_rational(rng, bound) for _ in range(space.m))


def random_jet_point(
    space: SpaceSpec, n: int, rng: random.Random, bound: int = 10
) -> SubmanifoldJetPoint:
    x = tuple(random_rational(rng, bound) for _ in range(space.p))
    u = {}
    for k in range(n + 1):
        for al in range(space.q):
            for J in mi_enumerate(space.p, k):
                u[(al, J)] = random_rational(rng, bound)
    return SubmanifoldJetPoint(space, n, x, u)


def lift_jet_point(
    z: SubmanifoldJetPoint, k: int, rng: random.Random, bound: int = 10
) -> SubmanifoldJetPoint:
    """Random lift of z by k extra orders: existing coordinates are kept,
    new top-order coordinates are drawn uniformly from bounded rationals."""
    if k < 0:
        raise PreconditionViolation("lift step must be nonnegative")
    space = z.space
    u = dict(z.u)
    for order in range(z.order + 1, z.order + k + 1):
        for al in range(space.q):
            for J in mi_enumerate(space.p, order):
                u[(al, J)] = random_rational(rng, bound)
    return SubmanifoldJetPoint(space, z.order + k, z.x, u)


def sample_group_jet(
    ds: PseudogroupSpec,
    n: int,
    z0: tuple,
    rng: random.Random,
    bound: int = 3,
    max_tries: int = 25,
) -> DiffeoJet:
    """Random order-n pseudogroup jet sourced at z0, found by solving the
    prolonged determining system stage by stage.  Requires the system to
    be affine in each stage's target jets once lower stages are fixed."""
    if n < ds.effective_order:
        raise PreconditionViolation("sampling below the base order is not defined")
    if not ds.determining:
        raise PreconditionViolation("sampling requires determining equations")
    ctx = context_for(ds.space)
    m = ds.space.m
    eqs = prolong_determining_system(ds, n - ds.effective_order)
    by_stage: dict[int, list[Expr]] = {k: [] for k in range(n + 1)}
    for e in eqs:
        by_stage[max(_max_order(ctx, e, "target"), 0)].append(e)
    base_map = {ctx.source_var(a): Expr.const(ctx.reg, z0[a]) for a in range(m)}
    last_error: Exception | None = None
    for _ in range(max_tries):
        smap = dict(base_map)
        coeffs: dict[tuple[int, MultiIndex], Scalar] = {}
        try:
            for k in range(n + 1):
                keys = [(a, B) for a in range(m) for B in mi_enumerate(m, k)]
                uvids = [ctx.target_var(a, B) for a, B in keys]
                residuals = [e.subst(smap) for e in by_stage[k]]
                part, kern = solve_affine_exprs(residuals, uvids, ctx.reg)
                vals = list(part)
                for vec in kern:
                    c = random_rational(rng, bound)
                    vals = [v + c * w for v, w in zip(vals, vec)]
                for key, val in zip(keys, vals):
                    coeffs[key] = val
                    smap[ctx.target_var(*key)] = Expr.const(ctx.reg, val)
            return DiffeoJet(ds.space, n, tuple(z0), coeffs)
        except (SingularJet, NoSolution) as exc:
            last_error = exc
            continue
    raise NoSolution(
        f"could not sample a group jet at {z0} after {max_tries} attempts"
    ) from last_error
