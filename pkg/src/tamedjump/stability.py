"""Closed-form mean-square stability indicators and step-size thresholds.

Everything here is plain arithmetic on the structural constants of a
problem; nothing is estimated from coefficient functions.  Inequalities
are strict throughout, so a step size equal to a threshold is not
certified.  A bound whose denominator vanishes places no restriction and
is reported as ``inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import LinearTestParams

INF = math.inf


@dataclass(frozen=True)
class NonlinearConstants:
    """Structural constants of the split-drift and whole-drift assumptions.

    ``rho``/``K``: one-sided and Lipschitz constants of the linear part u (or
    of f); ``beta``/``beta_bar``: dissipativity and growth constants of the
    superlinear part with exponent ``a_exp``; ``theta``/``C``: Lipschitz
    constants of g and h; ``mu``: one-sided constant of h.
    """

    rho: float
    K: float
    beta: float
    beta_bar: float
    a_exp: float
    theta: float
    C: float
    mu: float
    lam: float

    def __post_init__(self):
        for name, value in vars(self).items():
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
        if not self.a_exp > 1:
            raise ValueError("growth exponent a_exp must exceed 1")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")


@dataclass(frozen=True)
class ExactSolutionConstants:
    mu_f: float
    sigma: float
    gamma_h: float
    lam: float

    def __post_init__(self):
        if self.sigma < 0 or self.gamma_h < 0:
            raise ValueError("sigma and gamma_h must be nonnegative")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")


@dataclass(frozen=True)
class StabilityVerdict:
    """Outcome of a stability check.

    ``threshold`` is None unless every entry of ``hypotheses`` holds.
    ``bounds`` lists the individual step-size bounds (informational even when
    a hypothesis fails) and ``conditions`` the finer branch conditions that
    led to ``case_label``.
    """

    indicator: float
    hypotheses: tuple = ()
    threshold: float | None = None
    case_label: str = ""
    bounds: dict = field(default_factory=dict)
    conditions: tuple = ()

    @property
    def certified(self) -> bool:
        return self.threshold is not None

    @property
    def failed(self) -> list[str]:
        return [name for name, ok in self.hypotheses if not ok]


class HypothesisFailed(ValueError):
    def __init__(self, verdict: StabilityVerdict):
        self.verdict = verdict
        super().__init__(f"{verdict.case_label}: hypothesis failed: " + "; ".join(verdict.failed))


def _ratio(num: float, den: float) -> float:
    return INF if den == 0 else num / den


def linear_indicator(p: LinearTestParams) -> float:
    return 2 * p.a + p.b ** 2 + p.lam * p.c * (2 + p.c)


def exact_linear_stable(p: LinearTestParams) -> bool:
    return linear_indicator(p) < 0


def sts_linear_amplification(p: LinearTestParams, dt: float) -> float:
    """Exact one-step multiplier of E|Y|^2 for the semi-tamed scheme on the linear test equation."""
    drift = p.a + p.lam * p.c
    return 1 + drift ** 2 * dt ** 2 + (p.b ** 2 + p.lam * p.c ** 2 + 2 * p.a + 2 * p.lam * p.c) * dt


def sts_linear_threshold(p: LinearTestParams) -> StabilityVerdict:
    l = linear_indicator(p)
    bound = _ratio(-l, (p.a + p.lam * p.c) ** 2)
    verdict = StabilityVerdict(
        indicator=l,
        hypotheses=(("l < 0", l < 0),),
        threshold=bound if l < 0 else None,
        case_label="semi-tamed, linear",
        bounds={"-l/(a+lam*c)^2": bound},
    )
    if l >= 0:
        raise HypothesisFailed(verdict)
    return verdict


def ncts_linear_case(p: LinearTestParams, dt: float) -> str:
    """Label of the sign-pattern case (in a, c and dt) that applies at ``dt``.

    Returns ``""`` when no case of the table applies.
    """
    a, c, lam = p.a, p.c, p.lam
    l = linear_indicator(p)
    crit = _ratio(-1.0, lam * c) if c < 0 else INF
    # cases equivalent to branch A
    if l / 2 < a <= 0 and c >= 0:
        return "A1: l/2 < a <= 0, c >= 0"
    if l / 2 < a < 0 and c < 0 and dt <= crit:
        return "A2: l/2 < a < 0, c < 0, dt <= -1/(lam c)"
    if a > 0 and c < 0 and dt >= crit and 2 * a - l > 0:
        return "A3: a > 0, c < 0, dt >= -1/(lam c)"
    # cases equivalent to branch B
    if a > 0 and c > 0:
        return "B1: a > 0, c > 0"
    if a > 0 and c < 0 and dt < crit:
        return "B2: a > 0, c < 0, dt < -1/(lam c)"
    if a < 0 and c < 0 and dt > crit:
        return "B3: a < 0, c < 0, dt > -1/(lam c)"
    return ""


def ncts_linear_verdict(p: LinearTestParams, dt: float) -> StabilityVerdict:
    """Per-step-size certificate for the tamed scheme on the linear test equation.

    Two sufficient branches are tried.  A: ``a(1 + lam c dt) <= 0``,
    ``2a - l > 0`` and ``dt < (2a - l)/(a^2 + lam^2 c^2)``.  B:
    ``a(1 + lam c dt) > 0`` and ``dt < -l/(a + lam c)^2``.  An uncertified
    verdict means neither applies, not that the scheme is unstable.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    a, c, lam = p.a, p.c, p.lam
    l = linear_indicator(p)
    sign = a * (1 + lam * c * dt)
    bound_a = _ratio(2 * a - l, a ** 2 + lam ** 2 * c ** 2)
    bound_b = _ratio(-l, (a + lam * c) ** 2)
    branch_a = (
        ("A: a(1+lam*c*dt) <= 0", sign <= 0),
        ("A: 2a-l > 0", 2 * a - l > 0),
        ("A: dt < (2a-l)/(a^2+lam^2*c^2)", dt < bound_a),
    )
    branch_b = (
        ("B: a(1+lam*c*dt) > 0", sign > 0),
        ("B: dt < -l/(a+lam*c)^2", dt < bound_b),
    )
    ok_a = all(ok for _, ok in branch_a)
    ok_b = all(ok for _, ok in branch_b)
    if l >= 0:
        raise HypothesisFailed(StabilityVerdict(
            indicator=l, hypotheses=(("l < 0", False),), case_label="tamed, linear",
            bounds={"A": bound_a, "B": bound_b}, conditions=branch_a + branch_b))
    case = ncts_linear_case(p, dt)
    if ok_a:
        threshold, label = bound_a, "tamed, linear, branch A"
    elif ok_b:
        threshold, label = bound_b, "tamed, linear, branch B"
    else:
        threshold, label = None, "tamed, linear, not certified"
    if case:
        label += f" [{case}]"
    return StabilityVerdict(
        indicator=l,
        hypotheses=(("l < 0", True), (f"certified at dt={dt:g}", ok_a or ok_b)),
        threshold=threshold,
        case_label=label,
        bounds={"A": bound_a, "B": bound_b},
        conditions=branch_a + branch_b,
    )


def exact_nonlinear_alpha(c: ExactSolutionConstants) -> float:
    root = math.sqrt(c.gamma_h)
    return 2 * c.mu_f + c.sigma + c.lam * root * (root + 2)


def exponential_bound(alpha: float, x0_msq: float, t: float) -> float:
    return x0_msq * math.exp(alpha * t)


def sts_nonlinear_alpha(k: NonlinearConstants) -> float:
    """Limit of the exponential decay rate (negated) for the semi-tamed scheme."""
    return -2 * k.rho + k.theta ** 2 + k.lam * k.C * (k.C + 2)


# the exact-solution rate for the whole-drift assumption has the same form
whole_drift_alpha = sts_nonlinear_alpha


def ncts_nonlinear_alpha(k: NonlinearConstants) -> float:
    return k.K + k.theta ** 2 + k.lam * k.C * (2 * k.K + k.C) - 2 * k.lam * k.mu


def sts_nonlinear_threshold(k: NonlinearConstants) -> StabilityVerdict:
    alpha1 = sts_nonlinear_alpha(k)
    lip = k.K + k.lam * k.C
    bounds = {
        "-alpha1/(K+lam*C)^2": _ratio(-alpha1, lip ** 2),
        "2beta/([2(K+lam*C)+beta_bar]beta_bar)": _ratio(2 * k.beta, (2 * lip + k.beta_bar) * k.beta_bar),
        "(2beta-beta_bar)/(2(K+lam*C)beta_bar)": _ratio(2 * k.beta - k.beta_bar, 2 * lip * k.beta_bar),
    }
    hypotheses = (
        ("alpha1 < 0", alpha1 < 0),
        ("2beta-beta_bar > 0", 2 * k.beta - k.beta_bar > 0),
    )
    ok = all(h for _, h in hypotheses)
    verdict = StabilityVerdict(
        indicator=alpha1,
        hypotheses=hypotheses,
        threshold=min(bounds.values()) if ok else None,
        case_label="semi-tamed, nonlinear",
        bounds=bounds,
    )
    if not ok:
        raise HypothesisFailed(verdict)
    return verdict


def ncts_nonlinear_threshold(k: NonlinearConstants) -> StabilityVerdict:
    alpha3 = ncts_nonlinear_alpha(k)
    bounds = {
        "-alpha3/(2K^2+lam^2*C^2)": _ratio(-alpha3, 2 * k.K ** 2 + k.lam ** 2 * k.C ** 2),
        "(beta-C*beta_bar)/beta_bar^2": _ratio(k.beta - k.C * k.beta_bar, k.beta_bar ** 2),
    }
    hypotheses = (
        ("beta-C*beta_bar > 0", k.beta - k.C * k.beta_bar > 0),
        ("beta_bar(1+2C)-2beta < 0", k.beta_bar * (1 + 2 * k.C) - 2 * k.beta < 0),
        ("alpha3 < 0", alpha3 < 0),
    )
    ok = all(h for _, h in hypotheses)
    verdict = StabilityVerdict(
        indicator=alpha3,
        hypotheses=hypotheses,
        threshold=min(bounds.values()) if ok else None,
        case_label="tamed, nonlinear",
        bounds=bounds,
    )
    if not ok:
        raise HypothesisFailed(verdict)
    return verdict
