"""Command line front end: run verification suites from a scenario file.

    heavenlab verify scenario.json [--suite NAME]... [--format text|structured]
    heavenlab catalog list
    heavenlab catalog show <name>

Exit status: 0 all required checks passed, 1 at least one failed, 2 the
scenario or command line could not be parsed.  Structured output is
deterministic: same scenario, same seed, byte-identical report.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import random
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .adjoint import AdjointContext, bch_conjugate, bch_remainder_bound, bch_series
from .besselop import (
    EPS,
    RELATIONS,
    bessel_series,
    check_recurrence,
    series_eval,
    sum_rule_residual,
)
from .eds import (
    Section,
    check_proposition1,
    closure_check,
    constraint_residuals,
    random_section,
)
from .opcore import EXACT, FLOAT, Operator, frobenius
from .prolong import (
    ProlongationInstance,
    catalog_instance,
    catalog_names,
    compatibility_check,
    initial_condition_check,
    ode_residual,
    prolongation_residual,
    scalar_reduction,
    solution_L_form,
    solution_cal_form,
)
from .report import (
    VerificationReport,
    make_record,
    merge_reports,
    render_structured,
    render_text,
)

SUITES = (
    "bessel-recurrences",
    "ode-residuals",
    "solution-equivalence",
    "bch",
    "prolongation",
    "initial-conditions",
    "scalar-reduction",
    "eds-proposition1",
    "eds-closure",
    "eds-constraints",
    "compatibility",
)

# suites that run without operator initial data
INSTANCE_FREE = ("scalar-reduction", "eds-proposition1", "eds-closure")


class ScenarioError(Exception):
    """Scenario file is syntactically or semantically invalid."""


@dataclass(frozen=True)
class Scenario:
    name: str
    instance_spec: Optional[dict]
    mode: str = EXACT
    degree: int = 16
    cutoff: int = 8
    t_samples: tuple[Fraction, ...] = (Fraction(1, 2), Fraction(1), Fraction(2))
    u_samples: tuple[float, ...] = (-2.0, -1.0, 0.0)
    k_range: tuple[int, int] = (-4, 4)
    seed: int = 2026
    suites: tuple[str, ...] = SUITES
    scalar: Optional[dict] = None
    sections: tuple = ()
    closure_cap: int = 3


def _fraction(value, what: str) -> Fraction:
    try:
        if isinstance(value, float):
            return Fraction(value)
        return Fraction(str(value))
    except (ValueError, ZeroDivisionError) as e:
        raise ScenarioError(f"{what}: not a rational number: {value!r}") from e


def _operator(rows, what: str) -> Operator:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ScenarioError(f"{what}: expected a list of rows")
    try:
        return Operator.from_rows(
            [[_fraction(x, what) for x in row] for row in rows], EXACT
        )
    except ValueError as e:
        raise ScenarioError(f"{what}: {e}") from e


def build_instance(spec: dict) -> ProlongationInstance:
    if "catalog" in spec:
        try:
            return catalog_instance(spec["catalog"])
        except KeyError as e:
            raise ScenarioError(str(e.args[0])) from e
    if "operators" not in spec:
        raise ScenarioError("instance needs either 'catalog' or 'operators'")
    ops = spec["operators"]
    for required in ("L", "M0", "P0"):
        if required not in ops:
            raise ScenarioError(f"operators: missing {required}")
    L = _operator(ops["L"], "operators.L")
    M0 = _operator(ops["M0"], "operators.M0")
    P0 = _operator(ops["P0"], "operators.P0")
    n = L.dim
    N = _operator(ops["N"], "operators.N") if "N" in ops else Operator.zero(n, EXACT)
    A = _operator(ops["A"], "operators.A") if "A" in ops else Operator.identity(n, EXACT)
    B = _operator(ops["B"], "operators.B") if "B" in ops else Operator.identity(n, EXACT)
    name = spec.get("name", "custom")
    try:
        return ProlongationInstance(name=name, L=L, M0=M0, P0=P0, N=N, A=A, B=B)
    except ValueError as e:
        raise ScenarioError(f"instance: {e}") from e


def parse_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}")
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    known = {
        "name", "instance", "mode", "degree", "cutoff", "t_samples", "u_samples",
        "k_range", "seed", "suites", "scalar", "sections", "closure_cap",
    }
    extra = set(doc) - known
    if extra:
        raise ScenarioError(f"unknown scenario keys: {sorted(extra)}")
    if "name" not in doc or not isinstance(doc["name"], str) or not doc["name"]:
        raise ScenarioError("scenario needs a nonempty string 'name'")
    mode = doc.get("mode", EXACT)
    if mode not in (EXACT, FLOAT):
        raise ScenarioError(f"mode must be 'exact' or 'float', got {mode!r}")
    degree = int(doc.get("degree", 16))
    if degree < 4:
        raise ScenarioError("degree must be >= 4")
    cutoff = int(doc.get("cutoff", 8))
    if cutoff < 1:
        raise ScenarioError("cutoff must be >= 1")
    t_samples = tuple(
        _fraction(v, "t_samples") for v in doc.get("t_samples", ["1/2", "1", "2"])
    )
    if any(t <= 0 for t in t_samples):
        raise ScenarioError("t_samples must be positive")
    u_samples = tuple(float(v) for v in doc.get("u_samples", [-2, -1, 0]))
    k_raw = doc.get("k_range", [-4, 4])
    if (
        not isinstance(k_raw, list)
        or len(k_raw) != 2
        or not all(isinstance(k, int) for k in k_raw)
        or k_raw[0] > k_raw[1]
    ):
        raise ScenarioError("k_range must be [lo, hi] with integer lo <= hi")
    k_range = (k_raw[0], k_raw[1])
    seed = int(doc.get("seed", 2026))
    instance_spec = doc.get("instance")
    if instance_spec is not None:
        if not isinstance(instance_spec, dict):
            raise ScenarioError("instance must be an object")
        build_instance(instance_spec)  # validate eagerly
    suites_raw = doc.get("suites")
    if suites_raw is None:
        suites = SUITES if instance_spec is not None else INSTANCE_FREE
    else:
        if not isinstance(suites_raw, list) or not suites_raw:
            raise ScenarioError("suites must be a nonempty list")
        bad = [s for s in suites_raw if s not in SUITES]
        if bad:
            raise ScenarioError(f"unknown suites: {bad}; available: {list(SUITES)}")
        suites = tuple(dict.fromkeys(suites_raw))
    needs_instance = [s for s in suites if s not in INSTANCE_FREE]
    if needs_instance and instance_spec is None:
        raise ScenarioError(f"suites {needs_instance} need an 'instance'")
    scalar = doc.get("scalar")
    if scalar is not None:
        if not isinstance(scalar, dict):
            raise ScenarioError("scalar must be an object")
        bad = set(scalar) - {"omega", "p0", "m0", "t_samples"}
        if bad:
            raise ScenarioError(f"unknown scalar keys: {sorted(bad)}")
    sections = doc.get("sections", ())
    if sections and not all(isinstance(s, dict) for s in sections):
        raise ScenarioError("sections must be polynomial objects")
    return Scenario(
        name=doc["name"],
        instance_spec=instance_spec,
        mode=mode,
        degree=degree,
        cutoff=cutoff,
        t_samples=t_samples,
        u_samples=u_samples,
        k_range=k_range,
        seed=seed,
        suites=suites,
        scalar=scalar,
        sections=tuple(sections),
        closure_cap=int(doc.get("closure_cap", 3)),
    )


def scenario_digest(sc: Scenario) -> dict:
    """Normalized scenario echo embedded in reports (all values JSON-safe)."""
    return {
        "name": sc.name,
        "instance": sc.instance_spec,
        "mode": sc.mode,
        "degree": sc.degree,
        "cutoff": sc.cutoff,
        "t_samples": [str(t) for t in sc.t_samples],
        "u_samples": list(sc.u_samples),
        "k_range": list(sc.k_range),
        "seed": sc.seed,
        "suites": list(sc.suites),
        "scalar": sc.scalar,
        "sections": [dict(s) for s in sc.sections],
        "closure_cap": sc.closure_cap,
    }


def _suite_seed(seed: int, suite: str) -> int:
    h = hashlib.sha256(f"{seed}:{suite}".encode()).hexdigest()
    return int(h[:12], 16)


def _mode_instance(sc: Scenario, inst: ProlongationInstance) -> ProlongationInstance:
    return inst if sc.mode == EXACT else inst.to_float()


def _fmt_t(t: Fraction) -> str:
    return str(t)


# -- suite runners ------------------------------------------------------------


def _run_bessel(sc: Scenario, inst: ProlongationInstance) -> VerificationReport:
    mi = _mode_instance(sc, inst)
    k_lo, k_hi = sc.k_range
    reports = [
        check_recurrence(rel, mi.L, sc.degree, range(k_lo, k_hi + 1))
        for rel in RELATIONS
    ]
    records = []
    for t in sc.t_samples:
        tv = t if sc.mode == EXACT else float(t)
        resid, bound = sum_rule_residual(mi.L, tv, sc.cutoff, sc.degree)
        records.append(
            make_record(
                f"sum-rule[t={_fmt_t(t)}]",
                "bessel-recurrences",
                "sum_{|m|<=K} J_m(tL) = 1",
                resid,
                bound,
                detail=f"K={sc.cutoff} D={sc.degree}",
            )
        )
    reports.append(VerificationReport(name="sum-rule", records=tuple(records)))
    return merge_reports("bessel-recurrences", reports)


def _run_ode(sc: Scenario, inst: ProlongationInstance) -> VerificationReport:
    mi = _mode_instance(sc, inst)
    sol = solution_cal_form(mi, sc.degree)
    twoL = 2.0 * frobenius(mi.L)
    records = []
    for kind, S in (("P2", sol.p), ("M2", sol.m)):
        resid = ode_residual(S, kind, sol.ctx)
        residual = resid.max_coeff_norm()
        if sc.mode == EXACT:
            bound = 0.0
        else:
            bound = (
                64.0
                * EPS
                * (sc.degree + 2) ** 2
                * max(1.0, twoL * twoL)
                * max(1.0, S.max_coeff_norm())
            )
        eq = (
            "t P'' - P' + t ad_L^2[P] = 0"
            if kind == "P2"
            else "t M'' + M' + t ad_L^2[M] = 0"
        )
        records.append(
            make_record(
                f"{kind}-coefficients",
                "ode-residuals",
                eq,
                residual,
                bound,
                detail=f"complete through degree {sc.degree - 1}",
            )
        )
    return VerificationReport(name="ode-residuals", records=tuple(records))


def _run_equivalence(sc: Scenario, inst: ProlongationInstance) -> VerificationReport:
    mi = _mode_instance(sc, inst)
    sol = solution_cal_form(mi, sc.degree)
    nL = frobenius(mi.L)
    scale = max(1.0, frobenius(mi.M0) + frobenius(mi.P0))
    records = []
    for t in sc.t_samples:
        tv = t if sc.mode == EXACT else float(t)
        pc, ptb = series_eval(sol.p, tv)
        mc, mtb = series_eval(sol.m, tv)
        lf = solution_L_form(mi, tv, sc.cutoff, sc.degree)
        roundoff = 0.0
        if sc.mode == FLOAT:
            r = float(t) * nL / 2.0
            roundoff = (
                64.0
                * EPS
                * (2 * sc.cutoff + 3)
                * (sc.degree + 2)
                * max(1.0, nL) ** 2
                * scale
                * math.exp(min(2 * r, 700.0))
            )
        for label, cal_val, cal_tail, l_val, l_tail in (
            ("P", pc, ptb.value, lf.p, lf.p_tail),
            ("M", mc, mtb.value, lf.m, lf.m_tail),
        ):
            records.append(
                make_record(
                    f"{label}-route[t={_fmt_t(t)}]",
                    "solution-equivalence",
                    f"{label}: adjoint-series route = bilateral-sum route",
                    frobenius(cal_val - l_val),
                    cal_tail + l_tail + roundoff,
                    detail=f"K={sc.cutoff} D={sc.degree}",
                )
            )
    return VerificationReport(name="solution-equivalence", records=tuple(records))


def _run_bch(sc: Scenario, inst: ProlongationInstance) -> VerificationReport:
    fi = inst.to_float()
    ctx = AdjointContext(fi.L)
    nL = frobenius(fi.L)
    records = []
    for label, a0 in (("M0", fi.M0), ("P0", fi.P0)):
        for t in sc.t_samples:
            tv = float(t)
            s = bch_series(ctx, a0, tv, sc.degree)
            c = bch_conjugate(ctx, a0, tv)
            rb = bch_remainder_bound(ctx, a0, tv, sc.degree)
            r = tv * nL
            conj_err = (1e-12 + 64.0 * EPS * (sc.degree + 2)) * max(
                1.0, frobenius(a0)
            ) * math.exp(min(2 * r, 700.0))
            records.append(
                make_record(
                    f"bch-{label}[t={_fmt_t(t)}]",
                    "bch",
                    "exp(it ad_L)[A] = exp(itL) A exp(-itL)",
                    frobenius(s - c),
                    rb + conj_err,
                    detail=f"D={sc.degree}",
                )
            )
    return VerificationReport(name="bch", records=tuple(records))


def _run_prolongation(sc: Scenario, inst: ProlongationInstance) -> VerificationReport:
    return merge_reports(
        "prolongation",
        [prolongation_residual(inst, u, sc.degree) for u in sc.u_samples],
    )


def _run_scalar(sc: Scenario) -> VerificationReport:
    params = sc.scalar or {}
    omega = _fraction(params.get("omega", 1), "scalar.omega")
    p0 = _fraction(params.get("p0", 1), "scalar.p0")
    m0 = _fraction(params.get("m0", 1), "scalar.m0")
    ts = tuple(
        _fraction(v, "scalar.t_samples") for v in params.get("t_samples", [])
    ) or sc.t_samples
    X = Operator.from_rows([[omega]], EXACT)
    s0 = bessel_series(X, 0, sc.degree)
    s1 = bessel_series(X, 1, sc.degree)
    records = []
    for t in ts:
        kappa, chi = scalar_reduction(omega, p0, m0, t, sc.degree)
        v1, _ = series_eval(s1, t)
        v0, _ = series_eval(s0, t)
        kappa_op = p0 * (t / 2) * v1.entry(0, 0)
        chi_op = m0 * v0.entry(0, 0)
        records.append(
            make_record(
                f"kappa[t={_fmt_t(t)}]",
                "scalar-reduction",
                "p0 (t/2) J_1(t w) = 1x1 operator route",
                abs(float(kappa - kappa_op)),
                0.0,
                detail=f"omega={omega} D={sc.degree}",
            )
        )
        records.append(
            make_record(
                f"chi[t={_fmt_t(t)}]",
                "scalar-reduction",
                "m0 J_0(t w) = 1x1 operator route",
                abs(float(chi - chi_op)),
                0.0,
                detail=f"omega={omega} D={sc.degree}",
            )
        )
    return VerificationReport(name="scalar-reduction", records=tuple(records))


_DEFAULT_SECTIONS = (
    {"1": "0"},
    {"x^2": "1"},
    {"x*y*z": "1/2", "z^2": "-1"},
)


def _run_proposition1(sc: Scenario, rng: random.Random) -> VerificationReport:
    specs = list(sc.sections) if sc.sections else list(_DEFAULT_SECTIONS)
    reports = []
    for i, spec in enumerate(specs):
        try:
            section = Section(spec)
        except (ValueError, KeyError) as e:
            raise ScenarioError(f"sections[{i}]: {e}") from e
        rep = check_proposition1(section)
        reports.append(_prefix_records(rep, f"fixed{i}"))
    for i in range(3):
        rep = check_proposition1(random_section(rng))
        reports.append(_prefix_records(rep, f"random{i}"))
    return merge_reports("eds-proposition1", reports)


def _prefix_records(rep: VerificationReport, tag: str) -> VerificationReport:
    records = tuple(
        dataclasses.replace(r, check_id=f"{tag}:{r.check_id}") for r in rep.records
    )
    return dataclasses.replace(rep, records=records)


def _run_constraints(sc: Scenario, inst: ProlongationInstance) -> VerificationReport:
    return constraint_residuals(inst, u_samples=sc.u_samples, D=sc.degree)


def run_suite(
    sc: Scenario, suite: str, inst: Optional[ProlongationInstance]
) -> VerificationReport:
    rng = random.Random(_suite_seed(sc.seed, suite))
    if suite in INSTANCE_FREE:
        if suite == "scalar-reduction":
            return _run_scalar(sc)
        if suite == "eds-proposition1":
            return _run_proposition1(sc, rng)
        return closure_check(cap=sc.closure_cap)
    assert inst is not None
    if suite == "bessel-recurrences":
        return _run_bessel(sc, inst)
    if suite == "ode-residuals":
        return _run_ode(sc, inst)
    if suite == "solution-equivalence":
        return _run_equivalence(sc, inst)
    if suite == "bch":
        return _run_bch(sc, inst)
    if suite == "prolongation":
        return _run_prolongation(sc, inst)
    if suite == "initial-conditions":
        return initial_condition_check(_mode_instance(sc, inst), sc.degree)
    if suite == "eds-constraints":
        return _run_constraints(sc, inst)
    if suite == "compatibility":
        return compatibility_check(inst)
    raise ValueError(f"unknown suite {suite!r}")


def run_scenario(sc: Scenario, only: Optional[Sequence[str]] = None) -> VerificationReport:
    suites = tuple(only) if only else sc.suites
    inst = build_instance(sc.instance_spec) if sc.instance_spec is not None else None
    needs = [s for s in suites if s not in INSTANCE_FREE]
    if needs and inst is None:
        raise ScenarioError(f"suites {needs} need an 'instance'")
    reports = [run_suite(sc, suite, inst) for suite in suites]
    merged = merge_reports(sc.name, reports)
    return dataclasses.replace(merged, scenario=scenario_digest(sc))


# -- entry point ---------------------------------------------------------------


def _cmd_verify(args) -> int:
    try:
        with open(args.scenario, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        print(f"error: cannot read scenario: {e}", file=sys.stderr)
        return 2
    try:
        sc = parse_scenario(text)
        if args.seed is not None:
            sc = dataclasses.replace(sc, seed=args.seed)
        report = run_scenario(sc, only=args.suite or None)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    out = render_structured(report) if args.format == "structured" else render_text(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out)
            if not out.endswith("\n"):
                fh.write("\n")
    else:
        print(out)
    return 0 if report.all_passed() else 1


def _cmd_catalog(args) -> int:
    if args.action == "list":
        for name in catalog_names():
            print(name)
        return 0
    try:
        inst = catalog_instance(args.name)
    except KeyError as e:
        print(f"error: {e.args[0]}", file=sys.stderr)
        return 2
    compat = compatibility_check(inst)
    doc = {
        "name": inst.name,
        "dim": inst.dim,
        "mode": inst.mode,
        "operators": {
            "L": inst.L.to_jsonable(),
            "M0": inst.M0.to_jsonable(),
            "P0": inst.P0.to_jsonable(),
            "N": inst.N.to_jsonable(),
            "A": inst.A.to_jsonable(),
            "B": inst.B.to_jsonable(),
        },
        "compatibility": {
            r.check_id: r.verdict for r in compat.sorted().records
        },
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="heavenlab",
        description="verification suites for the prolongation operator calculus",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run suites from a scenario file")
    p_verify.add_argument("scenario", help="path to a scenario JSON file")
    p_verify.add_argument(
        "--suite",
        action="append",
        choices=SUITES,
        help="run only this suite (repeatable)",
    )
    p_verify.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p_verify.add_argument(
        "--format", choices=("text", "structured"), default="text", help="output format"
    )
    p_verify.add_argument("--out", default=None, help="write the report to a file")
    p_verify.set_defaults(func=_cmd_verify)

    p_cat = sub.add_parser("catalog", help="inspect the fixture catalog")
    cat_sub = p_cat.add_subparsers(dest="action", required=True)
    cat_sub.add_parser("list", help="list fixture names").set_defaults(func=_cmd_catalog)
    p_show = cat_sub.add_parser("show", help="print one fixture as JSON")
    p_show.add_argument("name")
    p_show.set_defaults(func=_cmd_catalog)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
