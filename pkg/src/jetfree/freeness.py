"""Freeness of prolonged pseudogroup actions on submanifold jets.

The prolonged action is locally free at a jet z^(n) exactly when the
linear map sending a vector-field jet in the fiber g^(n)|_z to the
prolonged tangent vector at z^(n) is injective.  This module builds that
matrix over an exact fiber basis, returns verdicts with exact kernel
bases, and re-verifies the two persistence phenomena instance by
instance:

* local freeness at z^(n) persists on every lift of z^(n) to higher
  order (swept over seeded random rational lifts), and the mechanism
  behind it: an order-(n+1) kernel jet vanishing to order n produces
  witness jets that land in g^(n)|_z intersected with the order-n
  kernel, forcing it to zero at free points;
* trivial order-n isotropy persists at top order, checked by solving
  the linear system a top-order stabilizer coefficient must satisfy.

The order-triangular isotropy solver decides TRIVIAL/NONTRIVIAL when
each stage is affine in its top-order unknowns and falls back to
UNDECIDED otherwise; no general polynomial solving is attempted.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .detsys import (
    FiberBasis,
    LinearDeterminingSystem,
    PseudogroupSpec,
    declared_linear_system,
    evaluated_rows,
    fiber_basis,
    prolong_determining_system,
    prolong_linear_system,
    vanishing_fiber_basis,
)
from .errors import (
    CoefficientSingularity,
    DivisionByZero,
    NoSolution,
    NotFreeAtBase,
    OrderMismatch,
    PreconditionViolation,
    SingularJet,
    SingularTotalJacobian,
)
from .jetspace import JetContext, MultiIndex, SpaceSpec, mi_concat, mi_enumerate
from .linalg import nullspace, rank
from .prolong import (
    DiffeoJet,
    SubmanifoldJetPoint,
    VectorFieldJet,
    act_on_jet,
    context_for,
    prolong_at_point,
)
from .sampling import lift_jet_point
from .stagesolve import extract_affine, solve_affine_exprs
from .symkernel import Expr, Scalar, scalar

LOCALLY_FREE = "LOCALLY_FREE"
NOT_LOCALLY_FREE = "NOT_LOCALLY_FREE"
TRIVIAL = "TRIVIAL"
NONTRIVIAL = "NONTRIVIAL"
UNDECIDED = "UNDECIDED"


def _as_linear(ps) -> LinearDeterminingSystem:
    if isinstance(ps, LinearDeterminingSystem):
        return ps
    return declared_linear_system(ps)


def _combine(basis: FiberBasis, vec: list[Scalar]) -> VectorFieldJet:
    """Linear combination of fiber basis elements with the given weights."""
    first = basis.elements[0]
    coeffs = {key: scalar(0) for key in first.coeffs}
    for c, elem in zip(vec, basis.elements):
        if c == 0:
            continue
        for key, val in elem.coeffs.items():
            coeffs[key] = coeffs[key] + c * val
    return VectorFieldJet(first.space, basis.order, basis.base, coeffs)


# -- prolongation matrices and verdicts ------------------------------------------------


@dataclass
class ProlongationMatrix:
    """Exact matrix of the prolonged-action differential restricted to a
    fiber basis; rows follow the jet coordinates of J^n, columns the
    basis elements."""

    order: int
    point: SubmanifoldJetPoint
    rows: list
    basis: FiberBasis
    entries: list[list[Scalar]]

    @property
    def rank(self) -> int:
        return rank(self.entries)


@dataclass
class FreenessVerdict:
    order: int
    point: SubmanifoldJetPoint
    fiber_dimension: int
    kernel_dimension: int
    kernel_basis: list[VectorFieldJet]
    orbit_dimension: int
    verdict: str

    @property
    def is_free(self) -> bool:
        return self.verdict == LOCALLY_FREE


def _restricted_matrix(
    ctx: JetContext, z: SubmanifoldJetPoint, basis: FiberBasis
) -> tuple[list, list[list[Scalar]]]:
    mat, rows, cols = prolong_at_point(ctx, z)
    entries = []
    for line in mat:
        entries.append(
            [
                sum(
                    (c * elem.coeffs[key] for c, key in zip(line, cols)),
                    scalar(0),
                )
                for elem in basis.elements
            ]
        )
    return rows, entries


def prolongation_matrix(ps, n: int, z: SubmanifoldJetPoint) -> ProlongationMatrix:
    """Matrix of the prolonged action's differential at z over an exact
    basis of the order-n vector-field jet fiber at the base point."""
    L = _as_linear(ps)
    if z.space != L.space:
        raise PreconditionViolation("jet point lives on a different space")
    if z.order < n:
        raise OrderMismatch(f"need an order-{n} jet point, got order {z.order}")
    zn = z.truncate(n)
    ctx = context_for(L.space)
    basis = fiber_basis(L, n, zn.base)
    rows, entries = _restricted_matrix(ctx, zn, basis)
    return ProlongationMatrix(n, zn, rows, basis, entries)


def local_freeness(ps, n: int, z: SubmanifoldJetPoint) -> FreenessVerdict:
    """Exact verdict: LOCALLY_FREE iff the prolongation matrix has trivial
    kernel on the fiber."""
    pm = prolongation_matrix(ps, n, z)
    fdim = pm.basis.dimension
    kern = nullspace(pm.entries, fdim)
    kernel_basis = [_combine(pm.basis, vec) for vec in kern]
    kdim = len(kern)
    verdict = LOCALLY_FREE if kdim == 0 else NOT_LOCALLY_FREE
    return FreenessVerdict(n, pm.point, fdim, kdim, kernel_basis, fdim - kdim, verdict)


def isotropy_algebra(ps, n: int, z: SubmanifoldJetPoint) -> FiberBasis:
    """Kernel of the prolonged differential restricted to the fiber jets
    whose order-0 part vanishes (infinitesimal isotropy at the point)."""
    L = _as_linear(ps)
    zn = z.truncate(n) if z.order > n else z
    ctx = context_for(L.space)
    vb = vanishing_fiber_basis(L, n, zn.base)
    if vb.dimension == 0:
        return FiberBasis(zn.base, n, [])
    _, entries = _restricted_matrix(ctx, zn, vb)
    kern = nullspace(entries, vb.dimension)
    return FiberBasis(zn.base, n, [_combine(vb, vec) for vec in kern])


# -- persistence sweeps -----------------------------------------------------------------


@dataclass
class PersistenceFailure:
    """Forensic record of a lift whose verdict flipped (indicates invalid
    input or an implementation bug)."""

    order: int
    lift: SubmanifoldJetPoint
    kernel_basis: list[VectorFieldJet]


@dataclass
class PersistenceReport:
    order: int
    through: int
    samples: int
    seed: int
    point: SubmanifoldJetPoint
    base_verdict: FreenessVerdict
    lifts_checked: int
    skipped: int
    failures: list[PersistenceFailure] = field(default_factory=list)

    @property
    def all_free(self) -> bool:
        return not self.failures


def persistence_sweep(
    ps,
    n: int,
    z: SubmanifoldJetPoint,
    through: int,
    samples: int,
    seed: int,
    bound: int = 10,
) -> PersistenceReport:
    """Re-test local freeness on seeded random rational lifts of z^(n) to
    every order n+1..through.

    Requires local freeness at z^(n) itself (NotFreeAtBase otherwise).
    Lifts where the coefficient evaluation degenerates are skipped, not
    counted as failures.  The sweep stops at the first counterexample
    and records the lift and kernel for inspection.
    """
    if through < n:
        raise PreconditionViolation("sweep must go through at least the base order")
    base = local_freeness(ps, n, z)
    if not base.is_free:
        raise NotFreeAtBase(
            f"not locally free at the base point (kernel dimension {base.kernel_dimension})"
        )
    rng = random.Random(seed)
    zn = base.point
    checked = 0
    skipped = 0
    failures: list[PersistenceFailure] = []
    for order in range(n + 1, through + 1):
        for _ in range(samples):
            lift = lift_jet_point(zn, order - n, rng, bound)
            try:
                verdict = local_freeness(ps, order, lift)
            except (CoefficientSingularity, SingularTotalJacobian):
                skipped += 1
                continue
            checked += 1
            if not verdict.is_free:
                failures.append(
                    PersistenceFailure(order, lift, verdict.kernel_basis)
                )
                return PersistenceReport(
                    n, through, samples, seed, zn, base, checked, skipped, failures
                )
    return PersistenceReport(n, through, samples, seed, zn, base, checked, skipped, [])


# -- the kernel-jet witness mechanism ----------------------------------------------------


def frozen_total_derivative(e: Expr, i: int, z: SubmanifoldJetPoint) -> Expr:
    """Total derivative along x^i with the first-order dependent slopes
    frozen at the point: D_{x^i} + sum_a u_(o,i)^a D_{u^a}."""
    space = z.space
    if not 0 <= i < space.p:
        raise PreconditionViolation(f"independent slot {i} out of range")
    if z.order < 1:
        raise PreconditionViolation("need the first-order slopes of the point")
    ctx = context_for(space)
    out = ctx.total_derivative(e, i)
    for al in range(space.q):
        u0 = z.u[(al, (i,))]
        out = out + ctx.const(u0) * ctx.total_derivative(e, space.p + al)
    return out


def kernel_equations(n: int, z: SubmanifoldJetPoint) -> list[Expr]:
    """Linear equations an order-(n+1) fiber jet vanishing to order n must
    satisfy to prolong to zero: all (n+1)-fold frozen total derivatives of
    the frozen characteristic components."""
    space = z.space
    ctx = context_for(space)
    ctx.ensure_vf(n + 1)
    out = []
    for al in range(space.q):
        q0 = ctx.expr(ctx.vf_var(space.p + al, ()))
        for j in range(space.p):
            q0 = q0 - ctx.const(z.u[(al, (j,))]) * ctx.expr(ctx.vf_var(j, ()))
        for J in mi_enumerate(space.p, n + 1):
            e = q0
            for i in J:
                e = frozen_total_derivative(e, i, z)
            out.append(e)
    return out


def witness_candidates(ps, n: int, z: SubmanifoldJetPoint) -> list[VectorFieldJet]:
    """Basis of order-(n+1) fiber jets that vanish to order n and satisfy
    the kernel equations at z^(n+1): the candidate obstructions to
    persistence.  Empty (only v = 0) at free points."""
    L = _as_linear(ps)
    if z.order < n + 1:
        raise OrderMismatch("need the point to order n+1")
    z1 = z.truncate(n + 1)
    ctx = context_for(L.space)
    rows, coords = evaluated_rows(L, n + 1, z1.base)
    for e in kernel_equations(n, z1):
        rows.append([e.diff(vid).as_scalar() for _, _, vid in coords])
    for idx, (_, B, _) in enumerate(coords):
        if len(B) <= n:
            row = [scalar(0)] * len(coords)
            row[idx] = scalar(1)
            rows.append(row)
    vecs = nullspace(rows, len(coords))
    out = []
    for vec in vecs:
        coeffs = {(a, B): vec[i] for i, (a, B, _) in enumerate(coords)}
        out.append(VectorFieldJet(L.space, n + 1, z1.base, coeffs))
    return out


@dataclass
class WitnessReport:
    order: int
    point: SubmanifoldJetPoint
    candidate: VectorFieldJet
    witnesses: list[tuple[str, VectorFieldJet]]
    memberships_verified: bool
    projection_free: bool
    forced_zero: bool


def _pr_image(ctx: JetContext, z: SubmanifoldJetPoint, v: VectorFieldJet) -> list[Scalar]:
    mat, _, cols = prolong_at_point(ctx, z)
    return [
        sum((c * v.coeffs[key] for c, key in zip(line, cols)), scalar(0))
        for line in mat
    ]


def witness_check(ps, n: int, z: SubmanifoldJetPoint, v: VectorFieldJet) -> WitnessReport:
    """Run the persistence mechanism on one candidate kernel jet.

    Checks the preconditions (v of order n+1, vanishing to order n,
    satisfying the prolonged linear system and the kernel equations at
    z^(n+1)), builds the witness jets from v's top coefficients, and
    verifies each lies in the order-n fiber intersected with the kernel
    of the prolonged differential.  When the order-n projection of the
    point is locally free this forces every witness, hence v, to zero.
    """
    L = _as_linear(ps)
    space = L.space
    if z.order < n + 1:
        raise OrderMismatch("need the point to order n+1")
    z1 = z.truncate(n + 1)
    zn = z.truncate(n)
    if v.order != n + 1 or tuple(v.base) != z1.base:
        raise PreconditionViolation("candidate must be an order-(n+1) jet at the point")
    for (a, B), val in v.coeffs.items():
        if len(B) <= n and val != 0:
            raise PreconditionViolation(
                "candidate does not vanish to order n: "
                f"coefficient {(a, B)} = {val}"
            )
    ctx = context_for(space)
    Lp = prolong_linear_system(L, max(0, n + 1 - L.order))
    env = {ctx.source_var(a): z1.base[a] for a in range(space.m)}
    for (a, B), val in v.coeffs.items():
        env[ctx.vf_var(a, B)] = val
    for e in Lp.equations:
        if ctx.max_order(e, "vf") > n + 1:
            continue
        if e.eval(env) != 0:
            raise PreconditionViolation(
                f"candidate violates the prolonged determining equation {e}"
            )
    for e in kernel_equations(n, z1):
        if e.eval(env) != 0:
            raise PreconditionViolation(
                f"candidate violates the kernel equation {e}"
            )

    p, q, m = space.p, space.q, space.m
    witnesses: list[tuple[str, VectorFieldJet]] = []

    def make(top) -> VectorFieldJet:
        coeffs = {}
        for k in range(n + 1):
            for b in range(m):
                for C in mi_enumerate(m, k):
                    coeffs[(b, C)] = top(b, C) if k == n else scalar(0)
        return VectorFieldJet(space, n, z1.base, coeffs)

    for i in range(p):
        slopes = [z1.u[(al, (i,))] for al in range(q)]
        w = make(
            lambda b, C, i=i, slopes=slopes: v.coeffs[(b, mi_concat(C, i))]
            + sum(
                (s * v.coeffs[(b, mi_concat(C, p + al))] for al, s in enumerate(slopes)),
                scalar(0),
            )
        )
        witnesses.append((f"w_{space.independent[i]}", w))
    for e_slot in range(m):
        w = make(lambda b, C, e=e_slot: v.coeffs[(b, mi_concat(C, e))])
        witnesses.append((f"what_{space.source_names[e_slot]}", w))

    ok = True
    Ln = prolong_linear_system(L, max(0, n - L.order))
    for label, w in witnesses:
        wenv = {ctx.source_var(a): z1.base[a] for a in range(m)}
        for (a, B), val in w.coeffs.items():
            wenv[ctx.vf_var(a, B)] = val
        for e in Ln.equations:
            if ctx.max_order(e, "vf") > n:
                continue
            if e.eval(wenv) != 0:
                raise PreconditionViolation(
                    f"witness {label} left the fiber: violates {e}"
                )
        if any(val != 0 for val in _pr_image(ctx, zn, w)):
            raise PreconditionViolation(
                f"witness {label} is not in the kernel of the prolonged differential"
            )

    free = local_freeness(ps, n, zn).is_free
    zero = all(w.is_zero() for _, w in witnesses) and v.is_zero()
    if free and not zero:
        raise PreconditionViolation(
            "nonzero witness at a locally free projection: persistence mechanism violated"
        )
    return WitnessReport(n, z1, v, witnesses, ok, free, zero)


# -- top-order stabilizer ----------------------------------------------------------------


@dataclass
class StabilizerReport:
    """Null space of the linear system a top-order isotropy coefficient
    must satisfy over a jet that is the identity to order n."""

    order: int
    point: SubmanifoldJetPoint
    unknowns: list[tuple[int, MultiIndex]]
    dimension: int
    basis: list[dict[tuple[int, MultiIndex], Scalar]]


def top_order_stabilizer(ps: PseudogroupSpec, n: int, z: SubmanifoldJetPoint) -> StabilizerReport:
    """Linear system for the order-(n+1) coefficients of a group jet that
    agrees with the identity to order n and stabilizes z^(n+1): the
    prolonged determining equations plus the top-order stabilization
    conditions.  Null-space dimension 0 means the top order is forced."""
    if not ps.determining:
        raise PreconditionViolation("top-order stabilizer needs determining equations")
    space = ps.space
    if z.order < n + 1:
        raise OrderMismatch("need the point to order n+1")
    if n + 1 < ps.effective_order:
        raise PreconditionViolation(
            "order must reach the determining system's own order"
        )
    z1 = z.truncate(n + 1)
    ctx = context_for(space)
    m, p, q = space.m, space.p, space.q
    ctx.ensure_target(n + 1)
    ctx.ensure_sub(n + 1)
    sub: dict[int, Expr] = {}
    for a in range(m):
        sub[ctx.source_var(a)] = ctx.const(z1.base[a])
    for k in range(n + 1):
        for a in range(m):
            for B in mi_enumerate(m, k):
                if k == 0:
                    val = ctx.const(z1.base[a])
                elif k == 1:
                    val = ctx.const(1 if B == (a,) else 0)
                else:
                    val = ctx.const(0)
                sub[ctx.target_var(a, B)] = val
    for al in range(q):
        for k in range(n + 2):
            for J in mi_enumerate(p, k):
                sub[ctx.sub_var(al, J)] = ctx.const(z1.value(al, J))
    tops = [(a, B) for a in range(m) for B in mi_enumerate(m, n + 1)]
    top_vids = [ctx.target_var(a, B) for a, B in tops]

    rows: list[list[Scalar]] = []
    eqs = prolong_determining_system(ps, n + 1 - ps.effective_order)
    for e in eqs:
        coeffs, const = extract_affine(e.subst(sub), top_vids, ctx.reg)
        if const != 0:
            raise PreconditionViolation(
                f"identity jet fails the prolonged determining equation {e}"
            )
        if any(c != 0 for c in coeffs):
            rows.append(coeffs)
    for al in range(q):
        for J in mi_enumerate(p, n + 1):
            e = ctx.uhat(al, J).subst(sub) - ctx.const(z1.value(al, J))
            coeffs, const = extract_affine(e, top_vids, ctx.reg)
            if const != 0:
                raise PreconditionViolation(
                    "identity jet fails a stabilization condition"
                )
            if any(c != 0 for c in coeffs):
                rows.append(coeffs)
    vecs = nullspace(rows, len(tops))
    basis = [
        {key: vec[i] for i, key in enumerate(tops)}
        for vec in vecs
    ]
    return StabilizerReport(n, z1, tops, len(vecs), basis)


# -- order-triangular isotropy jets ------------------------------------------------------


@dataclass
class IsotropyReport:
    order: int
    point: SubmanifoldJetPoint
    status: str
    stages: list[dict[str, Scalar]] | None
    witness: DiffeoJet | None


def _identity_stage(space: SpaceSpec, k: int, z0: tuple) -> dict:
    vals = {}
    for a in range(space.m):
        for B in mi_enumerate(space.m, k):
            if k == 0:
                vals[(a, B)] = scalar(z0[a])
            elif k == 1:
                vals[(a, B)] = scalar(1 if B == (a,) else 0)
            else:
                vals[(a, B)] = scalar(0)
    return vals


def _stage_equations(
    ctx: JetContext,
    ps: PseudogroupSpec,
    z: SubmanifoldJetPoint,
    dets_by_stage: dict[int, list[Expr]],
    k: int,
) -> list[Expr]:
    """Equations whose top-order target jets have order exactly k: the
    determining equations of that order and the order-k stabilization
    conditions, with the point's coordinates substituted and denominators
    cleared.  Only target-jet variables remain."""
    space = ctx.space
    point_env = {ctx.source_var(a): ctx.const(z.base[a]) for a in range(space.m)}
    for (al, J), val in z.u.items():
        point_env[ctx.sub_var(al, J)] = ctx.const(val)
    out = [e.subst(point_env) for e in dets_by_stage.get(k, [])]
    if k == 0:
        for a in range(space.m):
            out.append(ctx.expr(ctx.target_var(a, ())) - ctx.const(z.base[a]))
        return out
    for al in range(space.q):
        for J in mi_enumerate(space.p, k):
            cond = ctx.uhat(al, J).subst(point_env) - ctx.const(z.value(al, J))
            out.append(cond.numerator())
    return out


def isotropy_jets_triangular(
    ps: PseudogroupSpec, n: int, z: SubmanifoldJetPoint
) -> IsotropyReport:
    """Solve the stabilization equations together with the determining
    equations order by order.

    TRIVIAL when every stage pins its top-order coefficients uniquely
    (necessarily to the identity's).  NONTRIVIAL when a verified
    non-identity stabilizing jet is found.  UNDECIDED when a stage is
    not affine in its unknowns or no candidate could be completed.
    """
    space = ps.space
    if z.order < n:
        raise OrderMismatch(f"need an order-{n} jet point, got order {z.order}")
    zn = z.truncate(n)
    ctx = context_for(space)
    ctx.ensure_target(n)
    ctx.ensure_sub(n + 1)
    m = space.m
    dets_by_stage: dict[int, list[Expr]] = {}
    if ps.determining:
        k = max(0, n - ps.effective_order)
        for e in prolong_determining_system(ps, k):
            order = max(ctx.max_order(e, "target"), 0)
            if order <= n:
                dets_by_stage.setdefault(order, []).append(e)

    def complete(fixed: dict[tuple[int, MultiIndex], Scalar], start: int):
        """Solve stages start..n on top of fixed values, taking any
        particular solution at non-unique stages; None if a stage is
        inconsistent, nonaffine, or hits a cleared denominator."""
        values = dict(fixed)
        for k in range(start, n + 1):
            keys = [(a, B) for a in range(m) for B in mi_enumerate(m, k)]
            vids = [ctx.target_var(a, B) for a, B in keys]
            smap = {ctx.source_var(a): ctx.const(zn.base[a]) for a in range(m)}
            for key, val in values.items():
                smap[ctx.target_var(*key)] = ctx.const(val)
            try:
                exprs = [
                    e.subst(smap)
                    for e in _stage_equations(ctx, ps, zn, dets_by_stage, k)
                ]
                part, _ = solve_affine_exprs(exprs, vids, ctx.reg)
            except (DivisionByZero, NoSolution, PreconditionViolation):
                return None
            for key, val in zip(keys, part):
                values[key] = val
        return values

    # main pass: prefer the identity through non-unique stages
    stages: list[dict[str, Scalar]] = []
    values: dict[tuple[int, MultiIndex], Scalar] = {}
    nonunique_stage = None
    for k in range(n + 1):
        keys = [(a, B) for a in range(m) for B in mi_enumerate(m, k)]
        vids = [ctx.target_var(a, B) for a, B in keys]
        smap = {ctx.source_var(a): ctx.const(zn.base[a]) for a in range(m)}
        for key, val in values.items():
            smap[ctx.target_var(*key)] = ctx.const(val)
        try:
            exprs = [e.subst(smap) for e in _stage_equations(ctx, ps, zn, dets_by_stage, k)]
        except DivisionByZero:
            return IsotropyReport(n, zn, UNDECIDED, None, None)
        try:
            part, kern = solve_affine_exprs(exprs, vids, ctx.reg)
        except (NoSolution, PreconditionViolation):
            return IsotropyReport(n, zn, UNDECIDED, None, None)
        ident = _identity_stage(space, k, zn.base)
        if not kern:
            expected = [ident[key] for key in keys]
            if list(part) != expected:
                # unique but not the identity: the identity failed a stage,
                # which contradicts it stabilizing its own jet
                return IsotropyReport(n, zn, UNDECIDED, None, None)
            for key, val in zip(keys, part):
                values[key] = val
            stages.append(
                {ctx.target_name(a, B): values[(a, B)] for a, B in keys}
            )
            continue
        nonunique_stage = (k, keys, part, kern)
        break

    if nonunique_stage is None:
        return IsotropyReport(n, zn, TRIVIAL, stages, None)

    # a stage is not unique: hunt for a verified non-identity stabilizer
    k, keys, part, kern = nonunique_stage
    ident = _identity_stage(space, k, zn.base)
    candidates: list[list[Scalar]] = []
    idvec = [ident[key] for key in keys]
    if list(part) != idvec:
        candidates.append(list(part))
    for vec in kern:
        for c in (scalar(1), scalar(-1), scalar(2)):
            cand = [pv + c * kv for pv, kv in zip(part, vec)]
            if cand != idvec:
                candidates.append(cand)
    for cand in candidates:
        fixed = dict(values)
        for key, val in zip(keys, cand):
            fixed[key] = val
        full = complete(fixed, k + 1)
        if full is None:
            continue
        try:
            g = DiffeoJet(space, n, zn.base, full)
        except SingularJet:
            continue
        try:
            if act_on_jet(g, zn) == zn:
                return IsotropyReport(n, zn, NONTRIVIAL, None, g)
        except SingularTotalJacobian:
            continue
    return IsotropyReport(n, zn, UNDECIDED, None, None)
