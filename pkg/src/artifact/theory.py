"""Bound constants, step-size feasibility conditions and epsilon schedules.

Every formula is transcribed term by term, including asymmetries between the
i.i.d. and Markovian settings; nothing is simplified algebraically.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from math import ceil, log
from typing import Optional

from .errors import InvalidEpsilon, InvalidMixing, InvalidParams
from .stats import Radii, SpectralConstants

IID = "IID"
MARKOV = "MARKOV"


@dataclass(frozen=True)
class VRBounds:
    G_VR: float
    H_VR: float


def vr_bounds(R_theta, r_max, rho_max, gamma, min_abs_eig_C) -> VRBounds:
    """Upper bounds on the norm of one corrected update direction."""
    base = 3.0 * ((1 + gamma) * R_theta + r_max) * rho_max
    return VRBounds(G_VR=base * (1 + gamma * rho_max / min_abs_eig_C),
                    H_VR=base * (1 + 1 / min_abs_eig_C))


class _Terms:
    """Recurring sub-expressions shared by the constant formulas."""

    def __init__(self, sp: SpectralConstants, gamma):
        self.g = gamma
        self.rho = sp.rho_max
        self.r = sp.r_max
        self.lA = sp.lambda_A_hat
        self.lC = sp.lambda_C
        self.mC = sp.min_abs_eig_C
        self.P1 = 1 + gamma * self.rho / self.mC
        self.P2 = 1 + 1 / self.mC
        self.Q = self.rho * (1 + gamma) / self.mC


@dataclass(frozen=True)
class BoundConstantsIID:
    K1: float
    K2: float
    C1: float
    C2: float
    C3: float
    C4: float
    spectral: SpectralConstants
    gamma: float
    D: Optional[float] = None
    E: Optional[float] = None
    F: Optional[float] = None


def constants_iid(spectral: SpectralConstants, radii: Radii, gamma) -> BoundConstantsIID:
    """K and C constants of the i.i.d. analysis.

    ``K2`` is the constant of the w-side update bound; it carries no
    ``rho_max`` factor, exactly as written in its defining display.
    """
    t = _Terms(spectral, gamma)
    g, rho, lA, lC = t.g, t.rho, t.lA, t.lC
    lead = (1 + g) * radii.R_theta + t.r
    pre = (2 * rho ** 2 * g ** 2 / lA) * (3 / lC) * 10 * (1 + g) ** 2 * rho ** 2
    return BoundConstantsIID(
        K1=lead ** 2 * rho ** 2 * t.P1 ** 2,
        K2=lead ** 2 * t.P2 ** 2,
        C1=pre * t.P1 ** 2 * (1 + 2 / lC) * t.Q ** 2,
        C2=pre * t.P2 ** 2,
        C3=10 * (1 + g) ** 2 * rho ** 2 * t.P1 ** 2 * (1 + 2 / lC) * t.Q ** 2,
        C4=10 * (1 + g) ** 2 * rho ** 2 * t.P2 ** 2,
        spectral=spectral,
        gamma=gamma,
    )


def _check_rates_args(alpha, beta, M):
    if alpha <= 0 or beta <= 0 or M < 1:
        raise InvalidParams("need alpha > 0, beta > 0 and M >= 1")


def rates_iid(consts: BoundConstantsIID, alpha, beta, M):
    """Contraction factors ``(D, E, F)`` of the i.i.d. analysis."""
    _check_rates_args(alpha, beta, M)
    t = _Terms(consts.spectral, consts.gamma)
    g, rho, lA, lC = t.g, t.rho, t.lA, t.lC
    a, b = alpha, beta
    D = (12 / lA) * (1 / (a * M) + a * 5 * (1 + g) ** 2 * rho ** 2 * t.P1 ** 2
                     + (a ** 2 / b ** 2) * consts.C1 + b * consts.C2)
    E = (1 / (M * b)) * (2 / lC)
    F = (4 / lC) * (1 / (b * M) + b * 10
                    + (a ** 2 / b ** 2) * 10 * g ** 2 * rho ** 2 * (1 + 2 / lC) * t.Q ** 2
                    + ((a ** 3 / b ** 2) * consts.C3 + a * b * consts.C4) * (30 / lA) * g ** 2 * rho ** 2)
    return D, E, F


@dataclass(frozen=True)
class BoundConstantsMarkov:
    K1: float
    K2: float
    K3: float
    K4: float
    K5: float
    C1: float
    C2: float
    kappa: float
    rho: float
    spectral: SpectralConstants
    gamma: float


def constants_markov(spectral: SpectralConstants, radii: Radii, gamma, mixing,
                     R_w=None) -> BoundConstantsMarkov:
    """K and C constants of the Markovian analysis.

    ``mixing`` is any object with ``kappa`` and ``rho`` attributes.
    ``R_w`` defaults to ``radii.R_w``.
    """
    kappa, mr = float(mixing.kappa), float(mixing.rho)
    if not 0.0 <= mr < 1.0 or kappa < 0:
        raise InvalidMixing(f"need kappa >= 0 and 0 <= rho < 1, got ({kappa}, {mr})")
    R_w = radii.R_w if R_w is None else R_w
    t = _Terms(spectral, gamma)
    g, rho, r, lA, lC, mC = t.g, t.rho, t.r, t.lA, t.lC, t.mC
    R = radii.R_theta
    f2 = 1 + kappa * 2 * mr / (1 - mr)
    f1 = 1 + kappa * mr / (1 - mr)
    sq = R ** 2 * (1 + g) ** 2 + r ** 2
    pre = (96 / (lA * lC)) * g ** 2 * rho ** 2 * 10 * (1 + g) ** 2 * rho ** 2
    return BoundConstantsMarkov(
        K1=((1 + g) * R + r) ** 2 * rho ** 2 * t.P1 ** 2 * f2,
        K2=(2 / lA) * sq * 4 * rho ** 2 * t.P1 ** 2 * f1,
        K3=((32 / lC) * sq * rho ** 2 + (16 / lC) * (rho * (1 + g) * R + rho * r) / mC) * f1,
        K4=(12 / lC) * R_w ** 2 * f1,
        K5=((1 + g) * R + r) ** 2 * rho ** 2 * t.P2 ** 2 * f2,
        C1=t.P1 ** 2 * (1 + 2 / lC) * t.Q ** 2 * pre,
        C2=t.P2 ** 2 * pre,
        kappa=kappa,
        rho=mr,
        spectral=spectral,
        gamma=gamma,
    )


def rates_markov(consts: BoundConstantsMarkov, alpha, beta, M):
    """Contraction factors ``(D, E, F)`` of the Markovian analysis.

    The first bracketed term of ``F`` uses ``1 + 1/lambda_C`` where the
    neighbouring displays use ``1 + 2/lambda_C``; it is kept as written.
    """
    _check_rates_args(alpha, beta, M)
    t = _Terms(consts.spectral, consts.gamma)
    g, rho, lA, lC = t.g, t.rho, t.lA, t.lC
    a, b = alpha, beta
    D = (16 / lA) * (1 / (a * M) + a * 5 * (1 + g) ** 2 * rho ** 2 * t.P1 ** 2
                     + (a ** 2 / b ** 2) * consts.C1 + b * consts.C2)
    E = (1 / (M * b)) * (12 / lC)
    inner = t.P1 ** 2 * (1 + 2 / lC) * t.Q ** 2 * a ** 2 / b ** 2 + t.P2 ** 2 * b
    F = (24 / lC) * (1 / (b * M) + 10 * b
                     + 10 * g ** 2 * rho ** 2 * (1 + 1 / lC) * t.Q ** 2 * a ** 2 / b ** 2
                     + a * 120 * (1 + g) ** 2 * rho ** 2 / lA * inner * 5 * g ** 2 * rho ** 2)
    return D, E, F


@dataclass(frozen=True)
class Condition:
    id: str
    lhs: float
    rhs: float
    relation: str
    passed: bool


@dataclass
class ConditionReport:
    setting: str
    alpha: float
    beta: float
    M: int
    conditions: list = field(default_factory=list)
    D: float = float("nan")
    E: float = float("nan")
    F: float = float("nan")

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    @property
    def failed(self):
        return [c for c in self.conditions if not c.passed]

    def add(self, cid, lhs, relation, rhs):
        ok = {"<=": lhs <= rhs, "<": lhs < rhs, ">": lhs > rhs, ">=": lhs >= rhs}[relation]
        self.conditions.append(Condition(cid, float(lhs), float(rhs), relation, bool(ok)))

    def to_dict(self):
        return {
            "setting": self.setting, "alpha": self.alpha, "beta": self.beta, "M": self.M,
            "D": self.D, "E": self.E, "F": self.F, "passed": self.passed,
            "conditions": [asdict(c) for c in self.conditions],
        }


def _conditions_iid(rep, c: BoundConstantsIID, a, b, M):
    t = _Terms(c.spectral, c.gamma)
    g, rho, lA, lC = t.g, t.rho, t.lA, t.lC
    D, E, F = rates_iid(c, a, b, M)
    rep.D, rep.E, rep.F = D, E, F
    rep.add("lr_iid_1", a, "<=", min(1 / (5 * lA), (lA / 60) / ((1 + g) ** 2 * rho ** 2 * t.P1 ** 2)))
    lhs2 = (a ** 2 / b ** 2) * c.C3 + b * c.C4
    rep.add("lr_iid_2", lhs2, "<=",
            min((1 - D) / 144 * lA ** 2 * lC / (rho ** 2 * g ** 2) if g * rho > 0 else float("inf"),
                5 * (1 - D), c.C4))
    rep.add("lr_iid_3", M * b, ">", 4 / lC)
    rep.add("lr_iid_4", (lC / 6) * b - 10 * b ** 2
            - 10 * g ** 2 * rho ** 2 * (a ** 2 + 2 * a ** 2 / lC / b) * t.Q ** 2, ">=", 0.0)
    rep.add("lr_iid_5", 1 / (a * M) + a * 5 * (1 + g) ** 2 * rho ** 2 * t.P1 ** 2, "<=", lA / 6)
    k = rho ** 2 * g ** 2 / (lA ** 2 * lC)
    lhs6 = (a / (b ** 2 * M) * 72 * k + b * 720 * k
            + (a ** 2 / b ** 2) * 720 * k * g ** 2 * rho ** 2 * (1 + 2 / lC) * t.Q ** 2
            + a * 60 / lA * g ** 2 * rho ** 2)
    rep.add("lr_iid_6", lhs6, "<=", 1.0)
    rep.add("lr_iid_7", max(D, E, F), "<", 1.0)


def _conditions_markov(rep, c: BoundConstantsMarkov, a, b, M):
    t = _Terms(c.spectral, c.gamma)
    g, rho, lA, lC = t.g, t.rho, t.lA, t.lC
    D, E, F = rates_markov(c, a, b, M)
    rep.D, rep.E, rep.F = D, E, F
    # the step-size cap on alpha carries no label of its own
    rep.add("lr_markov_0", a, "<=", min((lA / 30) / ((1 + g) ** 2 * rho ** 2 * t.P1 ** 2), (3 / 5) / lA))
    rep.add("lr_markov_1", b, "<=", 1.0)
    rep.add("lr_markov_2", M * b, ">", 12 / lC)
    rep.add("lr_markov_3", (lC / 48) * b - 10 * b ** 2
            - 10 * g ** 2 * rho ** 2 * t.Q ** 2 * (a ** 2 + 2 * a ** 2 / lC / b), ">=", 0.0)
    k = (96 / (lA * lC)) * g ** 2 * rho ** 2
    lhs4 = (16 / lA) * (k * (1 / (b * M) + 10 * b
                             + 10 * g ** 2 * rho ** 2 * (1 + 2 / lC) * t.Q ** 2 * a ** 2 / b ** 2)
                        + 5 * g ** 2 * rho ** 2 * a)
    rep.add("lr_markov_4", lhs4, "<=", 1.0)
    lhs5 = t.P1 ** 2 * (1 + 2 / lC) * t.Q ** 2 * a ** 2 / b ** 2 + t.P2 ** 2 * b ** 2
    den1 = k * 10 * (1 + g) ** 2 * rho ** 2
    den2 = 120 * (1 + g) ** 2 * rho ** 2 / lA
    rep.add("lr_markov_5", lhs5, "<=",
            min((lA / 48) / den1 if den1 > 0 else float("inf"), (lC / 48) / den2 if den2 > 0 else float("inf")))
    rep.add("lr_markov_6", max(D, E, F), "<", 1.0)


def check_conditions(setting, consts, alpha, beta, M) -> ConditionReport:
    """Evaluate every step-size condition of ``setting`` literally."""
    rep = ConditionReport(setting, float(alpha), float(beta), int(M))
    if setting == IID:
        _conditions_iid(rep, consts, alpha, beta, M)
    elif setting == MARKOV:
        _conditions_markov(rep, consts, alpha, beta, M)
    else:
        raise InvalidParams(f"unknown setting {setting!r}")
    return rep


@dataclass(frozen=True)
class ScheduleCoefficients:
    c_alpha: float = 1.0
    c_beta: float = 1.0
    c_M: float = 1.0
    c_m: float = 1.0


EXPONENTS = {IID: (3 / 5, 2 / 5, 3 / 5), MARKOV: (3 / 4, 1 / 2, 1.0)}


def schedule_from_epsilon(setting, epsilon, coeffs: Optional[ScheduleCoefficients] = None):
    """Step sizes, batch size and epoch count for target accuracy ``epsilon``.

    Returns
    -------
    alpha, beta, M, m
    """
    if not 0.0 < epsilon < 1.0:
        raise InvalidEpsilon(f"epsilon must lie in (0, 1), got {epsilon}")
    if setting not in EXPONENTS:
        raise InvalidParams(f"unknown setting {setting!r}")
    c = coeffs or ScheduleCoefficients()
    ea, eb, eM = EXPONENTS[setting]
    alpha = c.c_alpha * epsilon ** ea
    beta = c.c_beta * epsilon ** eb
    # round before ceil so that exact powers such as 1e-5**-0.6 give 1000
    M = max(1, ceil(round(c.c_M * epsilon ** -eM, 9)))
    m = max(1, ceil(round(c.c_m * log(1 / epsilon), 9)))
    return alpha, beta, M, m


def _smallest_M(setting, consts, alpha, beta, hi=1e40):
    """Smallest batch size at which all conditions pass, or None."""
    if not check_conditions(setting, consts, alpha, beta, hi).passed:
        return None
    lo = 1.0
    if check_conditions(setting, consts, alpha, beta, 1).passed:
        return 1
    while hi / lo > 1.01:
        mid = (lo * hi) ** 0.5
        if check_conditions(setting, consts, alpha, beta, ceil(mid)).passed:
            hi = mid
        else:
            lo = mid
    return ceil(hi)


def calibrate_coefficients(setting, consts, margin=2.0) -> ScheduleCoefficients:
    """Instance-scale schedule coefficients.

    Searches a log grid, largest values first, for ``beta`` and the ratio
    ``alpha / beta`` at which every condition holds once ``M`` is large,
    then takes the smallest passing ``M`` times ``margin``. The triple is
    used as the schedule's value at ``epsilon = 1``. Along both schedules
    each left-hand side is nonincreasing as ``epsilon`` shrinks, so the
    conditions keep holding for every ``epsilon < 1``.
    """
    grid = [10.0 ** (-k / 10) for k in range(0, 301)]
    for beta in grid:
        for q in grid:
            alpha = q * beta
            M = _smallest_M(setting, consts, alpha, beta)
            if M is not None:
                return ScheduleCoefficients(alpha, beta, float(ceil(margin * M)), 1.0)
    raise InvalidParams("no feasible step sizes found on the calibration grid")


def epsilon_search(setting, consts, coeffs=None, grid=None):
    """Largest ``epsilon`` on ``grid`` whose schedule passes every condition.

    Returns ``(epsilon, schedule, report)``; ``epsilon`` is None when no grid
    point passes, and the report then belongs to the smallest one.
    """
    grid = sorted(grid or [10.0 ** -k for k in range(1, 9)], reverse=True)
    report = sched = None
    for eps in grid:
        sched = schedule_from_epsilon(setting, eps, coeffs)
        report = check_conditions(setting, consts, *sched[:3])
        if report.passed:
            return eps, sched, report
    return None, sched, report
