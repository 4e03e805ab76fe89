"""Determining systems of pseudogroups and their vector-field jet fibers.

A pseudogroup is specified by determining equations F(z, Z^(n*)) = 0 on
diffeomorphism jets, an infinitesimal system L(z, zeta^(n*)) = 0 on
vector-field jets, or both.  Linearizing the determining equations at
the identity jet produces an infinitesimal system; when both forms are
supplied, :func:`validate_consistency` confirms at sampled points that
they cut out the same spaces.

Both kinds of system prolong by total differentiation.  Evaluating a
prolonged linear system at a base point and solving exactly gives the
fiber of order-n vector-field jets, the central object every freeness
computation consumes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from .errors import (
    CoefficientSingularity,
    DivisionByZero,
    NonRationalDependence,
    PreconditionViolation,
    RegularityWarning,
    UnboundVariable,
)
from .jetspace import JetContext, MultiIndex, SpaceSpec, mi_enumerate
from .linalg import nullspace, rank
from .prolong import VectorFieldJet, context_for
from .symkernel import Expr, Scalar, scalar


def _max_order(ctx: JetContext, e: Expr, kind: str) -> int:
    """Highest jet order of the given variable kind appearing in e, or -1."""
    return ctx.max_order(e, kind)


def _check_kinds(ctx: JetContext, e: Expr, allowed: tuple[str, ...], what: str) -> None:
    for vid in e.variables():
        kind = ctx.info(vid)[0]
        if kind not in allowed:
            raise PreconditionViolation(
                f"{what} may only involve {allowed} variables, found {ctx.reg.name(vid)}"
            )


@dataclass
class PseudogroupSpec:
    """A pseudogroup given by determining equations on diffeomorphism jets
    and/or an infinitesimal system on vector-field jets, both of order
    at most base_order."""

    space: SpaceSpec
    base_order: int
    determining: tuple[Expr, ...] = ()
    infinitesimal: tuple[Expr, ...] = ()
    name: str = ""

    def __post_init__(self):
        if self.base_order < 1:
            raise PreconditionViolation("base order must be at least 1")
        self.determining = tuple(self.determining)
        self.infinitesimal = tuple(self.infinitesimal)
        if not self.determining and not self.infinitesimal:
            raise PreconditionViolation(
                "need determining equations or an infinitesimal system"
            )
        ctx = context_for(self.space)
        for e in self.determining:
            _check_kinds(ctx, e, ("source", "target"), "determining equation")
        for e in self.infinitesimal:
            _check_kinds(ctx, e, ("source", "vf"), "infinitesimal equation")

    @property
    def effective_order(self) -> int:
        """Largest jet order actually appearing, at least base_order.

        Equations above the declared order are legal (the parser warns);
        prolongation and linearization work from this order instead.
        """
        ctx = context_for(self.space)
        n = self.base_order
        for e in self.determining:
            n = max(n, _max_order(ctx, e, "target"))
        for e in self.infinitesimal:
            n = max(n, _max_order(ctx, e, "vf"))
        return n


@dataclass
class LinearDeterminingSystem:
    """Homogeneous linear system on vector-field jets, complete (closed
    under total differentiation) up to the declared order."""

    space: SpaceSpec
    order: int
    equations: tuple[Expr, ...]

    def __post_init__(self):
        self.equations = tuple(self.equations)
        ctx = context_for(self.space)
        for e in self.equations:
            _check_kinds(ctx, e, ("source", "vf"), "linear determining equation")
            _assert_zeta_linear(ctx, e)


def _assert_zeta_linear(ctx: JetContext, e: Expr) -> None:
    """Structural check: degree-1 homogeneous in the zeta-variables."""
    rebuilt = ctx.const(0)
    for vid in sorted(e.variables()):
        if ctx.info(vid)[0] != "vf":
            continue
        coeff = e.diff(vid)
        for w in coeff.variables():
            if ctx.info(w)[0] == "vf":
                raise PreconditionViolation(
                    "linear determining equation is not linear in the field jets"
                )
        rebuilt = rebuilt + coeff * ctx.expr(vid)
    if not (rebuilt - e).is_zero():
        raise PreconditionViolation(
            "linear determining equation is not homogeneous in the field jets"
        )


@dataclass
class FiberBasis:
    """Exact basis of the vector-field jet fiber at one base point."""

    base: tuple
    order: int
    elements: list[VectorFieldJet]
    dimension: int = field(default=-1)

    def __post_init__(self):
        self.base = tuple(self.base)
        if self.dimension < 0:
            self.dimension = len(self.elements)
        if self.dimension != len(self.elements):
            raise ValueError("dimension disagrees with the element count")


# -- linearization ------------------------------------------------------------------


def linearize(ds: PseudogroupSpec) -> LinearDeterminingSystem:
    """Linearize the determining equations at the identity jet: substitute
    Z^a_B by the identity jet plus t * zeta^a_B and differentiate in t
    at t = 0."""
    if not ds.determining:
        raise PreconditionViolation("no determining equations to linearize")
    ctx = context_for(ds.space)
    n, m = ds.effective_order, ds.space.m
    ctx.ensure_target(n)
    ctx.ensure_vf(n)
    tvid = ctx.param_var()
    t = ctx.expr(tvid)
    sub: dict[int, Expr] = {}
    idsub: dict[int, Expr] = {}
    for k in range(n + 1):
        for a in range(m):
            for B in mi_enumerate(m, k):
                if k == 0:
                    base = ctx.expr(ctx.source_var(a))
                elif k == 1:
                    base = ctx.const(1 if B == (a,) else 0)
                else:
                    base = ctx.const(0)
                idsub[ctx.target_var(a, B)] = base
                sub[ctx.target_var(a, B)] = base + t * ctx.expr(ctx.vf_var(a, B))
    tzero = {tvid: ctx.const(0)}
    eqs = []
    for F in ds.determining:
        try:
            # the deformed substitution can cancel the deformation parameter
            # out of a vanishing denominator, so probe the identity directly
            F.subst(idsub)
        except DivisionByZero as exc:
            raise NonRationalDependence(
                "determining equation is singular at the identity jet"
            ) from exc
        try:
            deformed = F.subst(sub)
            at_identity = deformed.subst(tzero)
        except DivisionByZero as exc:
            raise NonRationalDependence(
                "determining equation is singular at the identity jet"
            ) from exc
        if not at_identity.is_zero():
            raise PreconditionViolation(
                "the identity jet does not solve the determining system"
            )
        try:
            lin = deformed.diff(tvid).subst(tzero)
        except DivisionByZero as exc:
            raise NonRationalDependence(
                "determining equation is singular at the identity jet"
            ) from exc
        if not lin.is_zero():
            eqs.append(lin)
    return LinearDeterminingSystem(ds.space, n, tuple(eqs))


def declared_linear_system(ds: PseudogroupSpec) -> LinearDeterminingSystem:
    """The infinitesimal system as supplied, else the linearization."""
    if ds.infinitesimal:
        return LinearDeterminingSystem(ds.space, ds.effective_order, ds.infinitesimal)
    return linearize(ds)


# -- prolongation --------------------------------------------------------------------


def prolong_linear_system(L: LinearDeterminingSystem, k: int) -> LinearDeterminingSystem:
    """Close the system under total derivatives up to order L.order + k."""
    if k < 0:
        raise PreconditionViolation("prolongation step must be nonnegative")
    ctx = context_for(L.space)
    n = L.order + k
    ctx.ensure_vf(n)
    out = list(L.equations)
    seen = set(out)
    queue = list(L.equations)
    while queue:
        e = queue.pop()
        if _max_order(ctx, e, "vf") >= n:
            continue
        for c in range(L.space.m):
            de = ctx.total_derivative(e, c)
            if de.is_zero() or de in seen:
                continue
            seen.add(de)
            out.append(de)
            queue.append(de)
    return LinearDeterminingSystem(L.space, n, tuple(out))


def prolong_determining_system(ds: PseudogroupSpec, k: int) -> list[Expr]:
    """Close the nonlinear determining system under total derivatives up
    to order effective_order + k."""
    if k < 0:
        raise PreconditionViolation("prolongation step must be nonnegative")
    if not ds.determining:
        raise PreconditionViolation("no determining equations to prolong")
    ctx = context_for(ds.space)
    n = ds.effective_order + k
    ctx.ensure_target(n)
    out = list(ds.determining)
    seen = set(out)
    queue = list(ds.determining)
    while queue:
        e = queue.pop()
        if _max_order(ctx, e, "target") >= n:
            continue
        for c in range(ds.space.m):
            de = ctx.total_derivative(e, c)
            if de.is_zero() or de in seen:
                continue
            seen.add(de)
            out.append(de)
            queue.append(de)
    return out


# -- fibers ---------------------------------------------------------------------------


def evaluated_rows(
    L: LinearDeterminingSystem, n: int, z0: tuple
) -> tuple[list[list[Scalar]], list[tuple[int, MultiIndex, int]]]:
    """Coefficient matrix of the order-n truncation of L evaluated at z0,
    with columns over all zeta-jet coordinates of order <= n."""
    ctx = context_for(L.space)
    Lp = prolong_linear_system(L, max(0, n - L.order))
    coords = ctx.vf_coords(n)
    env = {ctx.source_var(a): z0[a] for a in range(L.space.m)}
    rows = []
    for e in Lp.equations:
        if _max_order(ctx, e, "vf") > n:
            continue
        row = []
        for _, _, vid in coords:
            ce = e.diff(vid)
            if ce.is_zero():
                row.append(scalar(0))
                continue
            try:
                row.append(ce.eval(env))
            except (DivisionByZero, ZeroDivisionError) as exc:
                raise CoefficientSingularity(
                    f"coefficient denominator vanishes at the base point: {ce}"
                ) from exc
            except UnboundVariable as exc:
                raise CoefficientSingularity(
                    f"coefficient is not a function of the base point alone: {ce}"
                ) from exc
        rows.append(row)
    return rows, coords


def fiber_basis(L: LinearDeterminingSystem, n: int, z0: tuple) -> FiberBasis:
    """Exact null-space basis of the evaluated linear system over the
    zeta-jet coordinates of order <= n.  The system is prolonged to
    order n if needed; equations of higher order are not evaluated."""
    rows, coords = evaluated_rows(L, n, z0)
    vecs = nullspace(rows, len(coords))
    elements = []
    for vec in vecs:
        coeffs = {(a, B): vec[i] for i, (a, B, _) in enumerate(coords)}
        elements.append(VectorFieldJet(L.space, n, tuple(z0), coeffs))
    return FiberBasis(tuple(z0), n, elements)


def vanishing_fiber_basis(L: LinearDeterminingSystem, n: int, z0: tuple) -> FiberBasis:
    """Basis of the subspace of the fiber whose order-0 components vanish."""
    rows, coords = evaluated_rows(L, n, z0)
    m = L.space.m
    for a in range(m):
        row = [scalar(1) if (ca == a and B == ()) else scalar(0) for ca, B, _ in coords]
        rows.append(row)
    vecs = nullspace(rows, len(coords))
    elements = []
    for vec in vecs:
        coeffs = {(a, B): vec[i] for i, (a, B, _) in enumerate(coords)}
        elements.append(VectorFieldJet(L.space, n, tuple(z0), coeffs))
    return FiberBasis(tuple(z0), n, elements)


def fiber_rank(L: LinearDeterminingSystem, n: int, z0: tuple) -> int:
    """Rank of the evaluated system at z0 (fiber codimension)."""
    rows, _ = evaluated_rows(L, n, z0)
    return rank(rows)


def jet_satisfies(L: LinearDeterminingSystem, v: VectorFieldJet) -> bool:
    """Exact membership test of a vector-field jet in the solution space of
    the order-truncated system at its base point."""
    ctx = context_for(L.space)
    n = v.order
    Lp = prolong_linear_system(L, max(0, n - L.order))
    env = {ctx.source_var(a): v.base[a] for a in range(L.space.m)}
    for (a, B), val in v.coeffs.items():
        env[ctx.vf_var(a, B)] = val
    for e in Lp.equations:
        if _max_order(ctx, e, "vf") > n:
            continue
        try:
            if e.eval(env) != 0:
                return False
        except (DivisionByZero, ZeroDivisionError) as exc:
            raise CoefficientSingularity(
                "coefficient denominator vanishes at the base point"
            ) from exc
    return True


# -- validation ------------------------------------------------------------------------


def validate_consistency(
    ds: PseudogroupSpec, seed: int = 0, points: int = 20, extra_orders: int = 2
) -> None:
    """When both system forms are present, check at random rational points
    that the linearized determining system and the declared infinitesimal
    system have fibers of equal dimension containing each other.

    Raises PreconditionViolation on any disagreement.
    """
    if not ds.determining or not ds.infinitesimal:
        return
    from .sampling import random_point

    import random

    rng = random.Random(seed)
    lin = linearize(ds)
    dec = LinearDeterminingSystem(ds.space, ds.effective_order, ds.infinitesimal)
    for n in range(ds.base_order, ds.base_order + extra_orders + 1):
        lin_n = prolong_linear_system(lin, n - lin.order)
        dec_n = prolong_linear_system(dec, n - dec.order)
        checked = 0
        attempts = 0
        while checked < points:
            attempts += 1
            if attempts > 20 * points:
                raise PreconditionViolation(
                    "could not sample enough regular points for consistency validation"
                )
            z0 = random_point(ds.space, rng)
            try:
                fa = fiber_basis(lin_n, n, z0)
                fb = fiber_basis(dec_n, n, z0)
            except CoefficientSingularity:
                continue
            if fa.dimension != fb.dimension:
                raise PreconditionViolation(
                    f"linearized and declared systems disagree at {z0}, order {n}: "
                    f"dimensions {fa.dimension} vs {fb.dimension}"
                )
            for v in fa.elements:
                if not jet_satisfies(dec_n, v):
                    raise PreconditionViolation(
                        f"linearized fiber is not contained in the declared fiber at {z0}"
                    )
            for v in fb.elements:
                if not jet_satisfies(lin_n, v):
                    raise PreconditionViolation(
                        f"declared fiber is not contained in the linearized fiber at {z0}"
                    )
            checked += 1


def check_regularity(L: LinearDeterminingSystem, n: int, points: list[tuple]) -> list[int]:
    """Evaluate the system rank at each point; warn when the rank jumps
    between points (the pseudogroup bundle may fail to be a smooth,
    embedded subbundle there).  Returns the rank profile."""
    ranks = []
    for z0 in points:
        try:
            ranks.append(fiber_rank(L, n, z0))
        except CoefficientSingularity:
            ranks.append(-1)
    good = [r for r in ranks if r >= 0]
    if good and any(r != good[0] for r in good):
        warnings.warn(
            f"system rank at order {n} varies across sampled points "
            f"(profile {ranks}); the jet bundle may not be regular",
            RegularityWarning,
            stacklevel=2,
        )
    return ranks
