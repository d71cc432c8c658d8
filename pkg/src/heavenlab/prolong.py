"""Closed-form solutions of the prolongation operator ODEs and their checks.

The first-order system coming out of the prolongation structure is

    P_u = e^u [L, M],   M_u = -[L, P],   [M, P] = 0,

with initial data P(0) = 0, P_t(0) = 0, M(0) = M0, M_t(0) = 0 in the variable
t = 2 e^{u/2} (so d/du = (t/2) d/dt).  Eliminating one unknown gives the
Bessel-type operator equations

    P_tt - (1/t) P_t + ad_L^2[P] = 0,
    M_tt + (1/t) M_t + ad_L^2[M] = 0,

whose residuals are formed here in t-multiplied polynomial shape, so nothing
is ever divided by t:

    P-kind: t S'' - S' + t ad_L^2[S]
    M-kind: t S'' + S' + t ad_L^2[S]

Two closed forms are implemented and cross-checked: the adjoint-argument
("cal") form P = (t/2) J_1(t ad_L)[P0], M = J_0(t ad_L)[M0], and the bilateral
("L") form P = (t/2) sum_k J_{k+1}(tL) P0 J_k(tL), M = sum_k J_k(tL) M0 J_k(tL).
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence, Union

from .adjoint import AdjointContext, ad_apply
from .besselop import (
    EPS,
    OperatorSeries,
    TailBound,
    _bessel_coefficient,
    bessel_eval,
    bessel_tail,
    bilateral_tail,
    scalar_bessel_majorant,
    series_eval,
)
from .opcore import (
    EXACT,
    FLOAT,
    DimensionMismatchError,
    ModeMismatchError,
    Operator,
    commutator,
    frobenius,
)
from .report import VerificationReport, make_record

__all__ = [
    "ProlongationInstance",
    "HeavenlyVariable",
    "cal_bessel",
    "CalSolution",
    "solution_cal_form",
    "LFormSolution",
    "solution_L_form",
    "ode_residual",
    "prolongation_residual",
    "compatibility_check",
    "initial_condition_check",
    "scalar_reduction",
    "build_HFG",
    "catalog_names",
    "catalog_instance",
]


@dataclass(frozen=True)
class ProlongationInstance:
    """One verification instance: L, initial data, and the auxiliary fields.

    N enters the middle 2-form coefficient F = -u_y L + N; A and B are the
    pseudopotential coupling matrices (B must stay invertible where it is
    used).  All operators share mode and dimension.
    """

    name: str
    L: Operator
    M0: Operator
    P0: Operator
    N: Operator
    A: Operator
    B: Operator

    def __post_init__(self) -> None:
        ops = [self.L, self.M0, self.P0, self.N, self.A, self.B]
        dim, mode = self.L.dim, self.L.mode
        for op in ops:
            if op.dim != dim:
                raise DimensionMismatchError(f"{self.name}: operator dimensions differ")
            if op.mode != mode:
                raise ModeMismatchError(f"{self.name}: operator modes differ")

    @property
    def dim(self) -> int:
        return self.L.dim

    @property
    def mode(self) -> str:
        return self.L.mode

    def coupling_residual(self) -> Operator:
        """[L, P0] - [L, M0]; zero is required before the cal form applies."""
        return commutator(self.L, self.P0) - commutator(self.L, self.M0)

    def to_float(self) -> "ProlongationInstance":
        if self.mode == FLOAT:
            return self
        return ProlongationInstance(
            name=self.name,
            L=self.L.to_float(),
            M0=self.M0.to_float(),
            P0=self.P0.to_float(),
            N=self.N.to_float(),
            A=self.A.to_float(),
            B=self.B.to_float(),
        )

    def operators(self) -> dict[str, Operator]:
        return {
            "L": self.L,
            "M0": self.M0,
            "P0": self.P0,
            "N": self.N,
            "A": self.A,
            "B": self.B,
        }


@dataclass(frozen=True)
class HeavenlyVariable:
    """The substitution t = 2 e^{u/2}.

    e^u is exposed as (t/2)^2 so that float evaluations of e^u agree bit-for-
    bit wherever the chain rule produces the same product; this is what makes
    the nilpotent fixture's residuals vanish exactly in float arithmetic.
    """

    u: float
    t: float

    @classmethod
    def from_u(cls, u: float) -> "HeavenlyVariable":
        s = math.exp(u / 2.0)
        return cls(u=float(u), t=2.0 * s)

    @classmethod
    def from_t(cls, t: float) -> "HeavenlyVariable":
        if not t > 0:
            raise ValueError("t must be positive")
        return cls(u=2.0 * math.log(t / 2.0), t=float(t))

    @property
    def exp_u(self) -> float:
        h = self.t / 2.0
        return h * h

    @property
    def half_t(self) -> float:
        return self.t / 2.0


def _ad_tower(ctx: AdjointContext, A: Operator, top: int) -> list[Operator]:
    """[A, ad_L[A], ad_L^2[A], ...] up to ad_L^top, computed incrementally."""
    tower = [A]
    for _ in range(top):
        tower.append(ad_apply(ctx, tower[-1]))
    return tower


def cal_bessel(ctx: AdjointContext, A: Operator, nu: int, D: int) -> OperatorSeries:
    """J_nu(t ad_L)[A] truncated at degree D, for nu in {0, 1}.

        J_0: sum_m (-1)^m/(m!)^2 (t/2)^{2m} ad_L^{2m}[A]
        J_1: sum_m (-1)^m/(m!(m+1)!) (t/2)^{1+2m} ad_L^{1+2m}[A]
    """
    if nu not in (0, 1):
        raise ValueError("nu must be 0 or 1")
    if D < 0:
        raise ValueError("degree must be >= 0")
    mode = ctx.mode
    n = ctx.dim
    if A.dim != n or A.mode != mode:
        raise DimensionMismatchError("A incompatible with context")
    tower = _ad_tower(ctx, A, D)
    zero = Operator.zero(n, mode)
    coeffs = [zero] * (D + 1)
    m = 0
    while nu + 2 * m <= D:
        q = _bessel_coefficient(m, nu)
        deg = nu + 2 * m
        coeffs[deg] = tower[deg].scale(q if mode == EXACT else float(q))
        m += 1
    twoL = 2.0 * frobenius(ctx.L)
    nA = frobenius(A)

    def tail(t_abs: float) -> float:
        # ||ad_L^j[A]|| <= (2||L||)^j ||A||, so the argument scales as t ||L||
        return nA * bessel_tail(t_abs * twoL / 2.0, nu, D)

    return OperatorSeries(coeffs, tail_fn=tail)


class CalSolution(NamedTuple):
    p: OperatorSeries
    m: OperatorSeries
    ctx: AdjointContext


def solution_cal_form(inst: ProlongationInstance, D: int) -> CalSolution:
    """P = (t/2) J_1(t ad_L)[P0], M = J_0(t ad_L)[M0], truncated at degree D.

    Requires the coupling condition [L, P0] = [L, M0]; violation raises with
    the condition named.
    """
    if D < 2:
        raise ValueError("degree must be >= 2")
    resid = inst.coupling_residual()
    if not resid.is_zero():
        if inst.mode == EXACT or frobenius(resid) > 64 * EPS * max(
            1.0, frobenius(inst.L) * (frobenius(inst.P0) + frobenius(inst.M0))
        ):
            raise ValueError(
                f"coupling condition violated: [L, P0] != [L, M0] on {inst.name}"
            )
    ctx = AdjointContext(inst.L)
    p_inner = cal_bessel(ctx, inst.P0, 1, D - 1)
    half = Fraction(1, 2) if inst.mode == EXACT else 0.5
    p = p_inner.shift(1).scale(half)
    inner_tail = p_inner.tail_fn
    p.tail_fn = (lambda t_abs: 0.5 * t_abs * inner_tail(t_abs)) if inner_tail else None
    m = cal_bessel(ctx, inst.M0, 0, D)
    return CalSolution(p=p, m=m, ctx=ctx)


class LFormSolution(NamedTuple):
    p: Operator
    m: Operator
    p_tail: float
    m_tail: float


def solution_L_form(inst: ProlongationInstance, t, K: int, D: int) -> LFormSolution:
    """Bilateral form, truncated at index |k| <= K and series degree D:

        P = (t/2) sum_k J_{k+1}(tL) P0 J_k(tL)
        M = sum_k J_k(tL) M0 J_k(tL)

    Works in either mode (exact mode needs rational t).  The reported tails
    bound the dropped |k| > K block plus the per-index degree truncation,
    using ||J_k(tX)|| <= (r^|k|/|k|!) I_0(2r) style majorants at
    r = |t| ||L|| / 2.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    mode = inst.mode
    if mode == EXACT and not isinstance(t, (int, Fraction)):
        t = Fraction(t)
    powers = [Operator.identity(inst.dim, mode)]
    while len(powers) <= D:
        powers.append(powers[-1] @ inst.L)
    J: dict[int, Operator] = {
        k: bessel_eval(powers, k, t, mode) for k in range(-K - 1, K + 2)
    }
    t_abs = abs(float(t))
    r = t_abs * frobenius(inst.L) / 2.0
    g = {k: scalar_bessel_majorant(r, k) for k in range(-K - 2, K + 3)}
    tau = {k: bessel_tail(r, k, D) for k in range(-K - 2, K + 3)}

    m_acc = Operator.zero(inst.dim, mode)
    p_acc = Operator.zero(inst.dim, mode)
    for k in range(-K, K + 1):
        m_acc = m_acc + J[k] @ inst.M0 @ J[k]
        p_acc = p_acc + J[k + 1] @ inst.P0 @ J[k]
    half = Fraction(1, 2) if mode == EXACT else 0.5
    p_acc = p_acc.scale(half * t if mode == EXACT else 0.5 * float(t))

    nm0, np0 = frobenius(inst.M0), frobenius(inst.P0)
    # dropped indices |k| > K
    m_tail = nm0 * _pair_tail_outside(r, K, 0)
    p_tail = (t_abs / 2.0) * np0 * _pair_tail_outside(r, K, 1)
    # per-index degree truncation: |J~ J~ - J J| <= g' tau + tau' g + tau tau'
    for k in range(-K, K + 1):
        m_tail += nm0 * (g[k] * tau[k] * 2 + tau[k] * tau[k])
        p_tail += (t_abs / 2.0) * np0 * (
            g[k + 1] * tau[k] + tau[k + 1] * g[k] + tau[k + 1] * tau[k]
        )
    return LFormSolution(p=p_acc, m=m_acc, p_tail=p_tail, m_tail=m_tail)


def _pair_tail_outside(r: float, K: int, offset: int) -> float:
    """sum_{|k| > K} g_{k+offset} g_k with g_k the J_k norm majorant at r."""
    total = 0.0
    for sign in (1, -1):
        k = sign * (K + 1)
        for _ in range(10_000):
            term = scalar_bessel_majorant(r, k + offset) * scalar_bessel_majorant(r, k)
            total += term
            if term == 0.0 or term < 1e-32 * max(total, 1e-300):
                break
            k += sign
    return total


def ode_residual(S: OperatorSeries, kind: str, ctx: AdjointContext) -> OperatorSeries:
    """Residual series of the t-multiplied operator Bessel equation.

        kind "P2": t S'' - S' + t ad_L^2[S]
        kind "M2": t S'' + S' + t ad_L^2[S]

    The returned series is complete (every reachable coefficient computed)
    through degree D-1 for input degree D; the caller asserts those vanish.
    """
    if kind not in ("P2", "M2"):
        raise ValueError("kind must be 'P2' or 'M2'")
    if kind == "P2":
        c0, c1 = S.coefficient(0), S.coefficient(1)
        if not (c0.is_zero() and c1.is_zero()):
            raise ValueError("P-kind series must vanish to second order at t=0")
    if S.degree < 2:
        raise ValueError("series degree must be >= 2")
    d1 = S.derivative()
    d2 = d1.derivative()
    ad2 = S.map_coeffs(lambda c: ad_apply(ctx, ad_apply(ctx, c)))
    if kind == "P2":
        resid = d2.shift(1) - d1 + ad2.shift(1)
    else:
        resid = d2.shift(1) + d1 + ad2.shift(1)
    return resid.truncate(S.degree - 1)


def ode_residual_bound(
    S: OperatorSeries, kind: str, ctx: AdjointContext, t_abs: float
) -> float:
    """Float-mode evaluation bound for the residual series at |t|.

    Exact arithmetic makes the residual coefficients identically zero through
    degree D-1; in floats they are pure roundoff, so the bound is a computed
    roundoff majorant plus the D-truncation tail of the t-multiplied equation.
    """
    D = S.degree
    twoL = 2.0 * frobenius(ctx.L)
    big = S.max_coeff_norm()
    # omitted t-degrees >= D contribute at most these magnitudes
    tail = 0.0
    s_tail = S.tail_fn(t_abs) if S.tail_fn else 0.0
    # t S'' and S': coefficient d picks (d+1)(d) c_{d+1}; first omitted is c_{D+1}
    tail += (D + 2) * (D + 1) * s_tail + (D + 1) * s_tail
    tail += t_abs * twoL * twoL * s_tail
    round_off = 64.0 * EPS * (D + 2) ** 2 * max(1.0, twoL * twoL) * max(1.0, big)
    horner = round_off * max(1.0, t_abs) ** max(D - 1, 1)
    return tail + horner


def ode_tail_bounds_notes() -> str:
    return "bounds = ODE-form truncation tail + computed roundoff majorant"


def prolongation_residual(
    inst: ProlongationInstance, u: float, D: int
) -> VerificationReport:
    """Residuals of the three prolongation equations at one value of u.

    Uses the cal-form series, its exact formal derivative, and the chain rule
    P_u = (t/2) P_t at t = 2 e^{u/2}; e^u is evaluated as (t/2)^2 so the
    nilpotent fixture cancels exactly in float arithmetic.
    """
    fi = inst.to_float()
    hv = HeavenlyVariable.from_u(u)
    sol = solution_cal_form(fi, D)
    t = hv.t
    P, p_tb = series_eval(sol.p, t)
    M, m_tb = series_eval(sol.m, t)
    Pt, _ = series_eval(sol.p.derivative(), t)
    Mt, _ = series_eval(sol.m.derivative(), t)
    half_t = hv.half_t
    Pu = Pt.scale(half_t)
    Mu = Mt.scale(half_t)
    eu = hv.exp_u
    L = fi.L

    r1 = Pu - commutator(L, M).scale(eu)
    r2 = Mu + commutator(L, P)
    r3 = commutator(M, P)

    # derivative-series tails: term-wise differentiated majorants
    twoL = 2.0 * frobenius(L)
    rr = t * twoL / 2.0
    np0, nm0 = frobenius(fi.P0), frobenius(fi.M0)
    dp_tail = _cal_derivative_tail(rr, 1, sol.p.degree, np0, twoL, t)
    dm_tail = _cal_derivative_tail(rr, 0, sol.m.degree, nm0, twoL, t)
    p_tail, m_tail = p_tb.value, m_tb.value
    nL = frobenius(L)
    nM, nP = frobenius(M), frobenius(P)
    rough = 64.0 * EPS * (D + 2) * max(1.0, nL) * max(1.0, nM + nP, np0 + nm0) * max(1.0, t) ** D
    b1 = half_t * dp_tail + eu * 2 * nL * m_tail + rough
    b2 = half_t * dm_tail + 2 * nL * p_tail + rough
    b3 = 2 * (nM * p_tail + nP * m_tail + p_tail * m_tail) + rough

    mk = lambda cid, eq, res, bnd: make_record(
        cid, "prolongation", eq, res, bnd, detail=f"u={u:g}, t={t:.6g}, degree {D}"
    )
    records = (
        mk("P_u-equation", "P_u = e^u [L, M]", frobenius(r1), 10 * b1),
        mk("M_u-equation", "M_u = -[L, P]", frobenius(r2), 10 * b2),
        mk("commutation", "[M, P] = 0", frobenius(r3), 10 * b3),
    )
    return VerificationReport(name=f"prolongation:{inst.name}@u={u:g}", records=records)


def _cal_derivative_tail(
    r: float, nu: int, D: int, nA: float, twoL: float, t_abs: float
) -> float:
    """Majorant for the dropped tail of d/dt of a cal series at |t|.

    Terms of J_nu(t ad_L)[A] have degree nu+2m and norm <=
    nA (t ||L||)^{nu+2m} / (m!(m+nu)!); differentiation multiplies each by its
    degree over t.
    """
    total = 0.0
    m = (D - nu) // 2 + 1
    for _ in range(500):
        deg = nu + 2 * m
        try:
            term = nA * r ** deg / (math.factorial(m) * math.factorial(m + nu))
        except OverflowError:
            return math.inf
        total += deg * term / max(t_abs, 1e-300)
        if term < 1e-30 * max(total, 1e-300):
            break
        m += 1
    return total


def compatibility_check(inst: ProlongationInstance) -> VerificationReport:
    """Exact evaluation of the two closure conditions on the initial data:

        coupling      [L, P0] = [L, M0]
        compatibility [ad_L[M0], M0] = 0
    """
    coupling = inst.coupling_residual()
    adm = commutator(inst.L, inst.M0)
    compat = commutator(adm, inst.M0)
    exact = inst.mode == EXACT
    bound = 0.0
    if not exact:
        scale = max(1.0, frobenius(inst.L)) * max(
            1.0, frobenius(inst.M0) + frobenius(inst.P0)
        )
        bound = 64.0 * EPS * scale * max(1.0, frobenius(inst.M0))
    records = (
        make_record(
            "coupling",
            "compatibility",
            "[L, P0] = [L, M0]",
            frobenius(coupling),
            bound,
            detail=inst.name,
        ),
        make_record(
            "ad-commutation",
            "compatibility",
            "[[L, M0], M0] = 0",
            frobenius(compat),
            bound,
            detail=inst.name,
        ),
    )
    return VerificationReport(name=f"compatibility:{inst.name}", records=records)


def initial_condition_check(inst: ProlongationInstance, D: int) -> VerificationReport:
    """P(0) = 0, P_t(0) = 0, M(0) = M0, M_t(0) = 0, as exact coefficient facts."""
    sol = solution_cal_form(inst, D)
    checks = (
        ("P(0)=0", "P(0) = 0", sol.p.coefficient(0)),
        ("P_t(0)=0", "P_t(0) = 0", sol.p.coefficient(1)),
        ("M(0)=M0", "M(0) = M0", sol.m.coefficient(0) - inst.M0),
        ("M_t(0)=0", "M_t(0) = 0", sol.m.coefficient(1)),
    )
    records = tuple(
        make_record(cid, "initial-conditions", eq, frobenius(op), 0.0, detail=inst.name)
        for cid, eq, op in checks
    )
    return VerificationReport(name=f"initial-conditions:{inst.name}", records=records)


def scalar_reduction(omega, p0, m0, t, D: int):
    """Classical reduction: kappa = p0 (t/2) J_1(t w), chi = m0 J_0(t w).

    Computed with exact rational arithmetic throughout (float inputs are
    binary rationals and convert exactly), truncated at overall t-degree D,
    and rounded at most once on output.  Matches the 1x1 operator pipeline
    exactly in exact mode because exact arithmetic is order-independent.
    """
    wants_float = any(isinstance(x, float) for x in (omega, p0, m0, t))
    w = Fraction(omega)
    p0f, m0f, tf = Fraction(p0), Fraction(m0), Fraction(t)
    x_pow: list[Fraction] = [Fraction(1)]  # (t w)^deg by repeated multiplication
    tw = tf * w
    for _ in range(D):
        x_pow.append(x_pow[-1] * tw)
    # _bessel_coefficient carries the (1/2)^{deg} factor, so pairing it with
    # plain x^deg monomials reproduces the classical (x/2)-power series
    j0 = Fraction(0)
    m = 0
    while 2 * m <= D:
        j0 += _bessel_coefficient(m, 0) * x_pow[2 * m]
        m += 1
    j1 = Fraction(0)
    m = 0
    while 1 + 2 * m <= D:
        j1 += _bessel_coefficient(m, 1) * x_pow[1 + 2 * m]
        m += 1
    kappa = p0f * (tf / 2) * j1
    chi = m0f * j0
    if wants_float:
        return float(kappa), float(chi)
    return kappa, chi


def build_HFG(
    inst: ProlongationInstance,
    u: float,
    u_x: float,
    u_y: float,
    u_z: float,
    D: int,
):
    """The three 2-form coefficient matrices of the prolongation ansatz:

        H = e^u u_z L + P(u),  F = -u_y L + N,  G = u_x L + M(u)

    evaluated at t = 2 e^{u/2} from the cal-form series, float mode.
    """
    fi = inst.to_float()
    hv = HeavenlyVariable.from_u(u)
    sol = solution_cal_form(fi, D)
    P, _ = series_eval(sol.p, hv.t)
    M, _ = series_eval(sol.m, hv.t)
    H = fi.L.scale(hv.exp_u * u_z) + P
    F = fi.L.scale(-u_y) + fi.N
    G = fi.L.scale(u_x) + M
    return H, F, G


# -- fixture catalog ---------------------------------------------------------


def _instance(name, L, M0, P0, n) -> ProlongationInstance:
    return ProlongationInstance(
        name=name,
        L=L,
        M0=M0,
        P0=P0,
        N=Operator.zero(n, EXACT),
        A=Operator.identity(n, EXACT),
        B=Operator.identity(n, EXACT),
    )


def _heisenberg3() -> ProlongationInstance:
    L = Operator.unit(3, 0, 1)
    M0 = Operator.unit(3, 1, 2)
    return _instance("heisenberg3", L, M0, M0, 3)


def _diag2() -> ProlongationInstance:
    L = Operator.diag([1, -1])
    M0 = Operator.unit(2, 0, 1)
    return _instance("diag2", L, M0, M0, 2)


def _commuting2() -> ProlongationInstance:
    L = Operator.unit(2, 0, 1)
    return _instance("commuting2", L, L, L, 2)


def _expected_fail2() -> ProlongationInstance:
    L = Operator.unit(2, 0, 1)
    M0 = Operator.unit(2, 1, 0)
    return _instance("expected-fail2", L, M0, M0, 2)


def _nilpotent(n: int, seed: int) -> ProlongationInstance:
    """Random strictly upper L with M0 = P0 = e_{n-1,n}.

    M0 L = 0 structurally, so the adjoint tower is ad^j[M0] = L^j M0, all
    supported in the last column; that makes [[L, M0], M0] = 0 and [M, P] = 0
    hold exactly while the tower itself stays nontrivial.
    """
    rng = random.Random(seed * 1_000_003 + n)

    def strict_upper() -> Operator:
        rows = [[Fraction(0)] * n for _ in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                rows[i][j] = Fraction(rng.randint(-2, 2), rng.randint(1, 3))
        return Operator.from_rows(rows, EXACT)

    M0 = Operator.unit(n, n - 2, n - 1)
    while True:
        L = strict_upper()
        ad1 = commutator(L, M0)
        if ad1.is_zero():
            continue
        # ask for tower depth >= 2 where the dimension allows it
        if n >= 4 and commutator(L, ad1).is_zero():
            continue
        return _instance(f"nilpotent{n}", L, M0, M0, n)


_CATALOG = {
    "heisenberg3": lambda seed: _heisenberg3(),
    "diag2": lambda seed: _diag2(),
    "commuting2": lambda seed: _commuting2(),
    "expected-fail2": lambda seed: _expected_fail2(),
    "nilpotent3": lambda seed: _nilpotent(3, seed),
    "nilpotent4": lambda seed: _nilpotent(4, seed),
    "nilpotent5": lambda seed: _nilpotent(5, seed),
    "nilpotent6": lambda seed: _nilpotent(6, seed),
}


def catalog_names() -> tuple[str, ...]:
    return tuple(sorted(_CATALOG))


def catalog_instance(name: str, seed: int = 0) -> ProlongationInstance:
    try:
        builder = _CATALOG[name]
    except KeyError:
        raise KeyError(
            f"unknown catalog instance {name!r}; available: {', '.join(catalog_names())}"
        ) from None
    return builder(seed)
