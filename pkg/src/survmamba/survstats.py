"""Evaluation statistics for right-censored survival data: concordance
index (Harrell's convention), Kaplan-Meier product-limit curves, the
two-group log-rank test, and median risk stratification.

Conventions, fixed so tests are exact: at a tied time, deaths are
processed before censorings (censored subjects at t are still at risk at
t); comparable c-index pairs require the earlier subject's event to be
observed; tied risks count 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedResultError


@dataclass(frozen=True)
class SurvivalOutcome:
    """Observed follow-up: time in months (> 0) and event flag
    (1 = death observed, 0 = censored)."""

    time: float
    event: int

    def __post_init__(self):
        if not self.time > 0:
            raise ValueError(f"outcome time must be positive, got {self.time}")
        if self.event not in (0, 1):
            raise ValueError(f"event flag must be 0 or 1, got {self.event}")


def concordance_index(risks, outcomes) -> float:
    """Fraction of comparable pairs ordered correctly by risk.

    A pair (i, j) is comparable iff time_i < time_j and subject i's event
    was observed. Concordant (risk_i > risk_j) counts 1, tied risks count
    1/2. Raises UndefinedResultError when no pair is comparable.
    """
    risks = np.asarray(risks, dtype=np.float64)
    times = np.asarray([o.time for o in outcomes], dtype=np.float64)
    events = np.asarray([o.event for o in outcomes], dtype=np.int64)
    if risks.shape != times.shape:
        raise ValueError(f"{risks.shape[0]} risks for {times.shape[0]} outcomes")
    concordant = 0.0
    comparable = 0
    for i in np.flatnonzero(events == 1):
        later = times > times[i]  # tied times are not comparable
        comparable += int(later.sum())
        concordant += float(np.sum(risks[i] > risks[later]))
        concordant += 0.5 * float(np.sum(risks[i] == risks[later]))
    if comparable == 0:
        raise UndefinedResultError("c-index undefined: no comparable pairs")
    return concordant / comparable


@dataclass
class KmCurve:
    """Product-limit curve: distinct event times, the step value after
    each, and the at-risk / event counts feeding each step."""

    times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray

    def value_at(self, t: float) -> float:
        idx = np.searchsorted(self.times, t, side="right") - 1
        return 1.0 if idx < 0 else float(self.survival[idx])


def kaplan_meier(outcomes) -> KmCurve:
    """S(t) = prod_{t_k <= t} (1 - d_k / n_k) over distinct death times."""
    if len(outcomes) == 0:
        raise ValueError("kaplan_meier: no outcomes")
    times = np.asarray([o.time for o in outcomes], dtype=np.float64)
    events = np.asarray([o.event for o in outcomes], dtype=np.int64)
    event_times = np.unique(times[events == 1])
    surv = []
    at_risk = []
    deaths = []
    s = 1.0
    for t in event_times:
        n_k = int(np.sum(times >= t))  # censored at t still at risk at t
        d_k = int(np.sum((times == t) & (events == 1)))
        s *= 1.0 - d_k / n_k
        surv.append(s)
        at_risk.append(n_k)
        deaths.append(d_k)
    return KmCurve(
        times=event_times,
        survival=np.asarray(surv),
        at_risk=np.asarray(at_risk, dtype=np.int64),
        events=np.asarray(deaths, dtype=np.int64),
    )


@dataclass
class LogrankResult:
    chi2: float
    p: float
    degenerate: bool = False  # no events / zero variance


def logrank_test(group_a, group_b) -> LogrankResult:
    """Two-group log-rank test via the hypergeometric model at each
    distinct death time; p from the chi-square distribution, 1 dof."""
    if len(group_a) == 0 or len(group_b) == 0:
        raise ValueError("logrank: both groups must be non-empty")
    ta = np.asarray([o.time for o in group_a])
    ea = np.asarray([o.event for o in group_a])
    tb = np.asarray([o.time for o in group_b])
    eb = np.asarray([o.event for o in group_b])
    death_times = np.unique(np.concatenate([ta[ea == 1], tb[eb == 1]]))
    obs_a = 0.0
    exp_a = 0.0
    var = 0.0
    for t in death_times:
        na = int(np.sum(ta >= t))
        nb = int(np.sum(tb >= t))
        da = int(np.sum((ta == t) & (ea == 1)))
        db = int(np.sum((tb == t) & (eb == 1)))
        n = na + nb
        d = da + db
        if n < 1:
            continue
        obs_a += da
        exp_a += d * na / n
        if n > 1:
            var += d * (na / n) * (nb / n) * (n - d) / (n - 1)
    if var <= 0.0:
        return LogrankResult(chi2=0.0, p=1.0, degenerate=True)
    chi2 = (obs_a - exp_a) ** 2 / var
    return LogrankResult(chi2=chi2, p=chi2_sf(chi2, 1), degenerate=False)


def risk_stratify(risks) -> list:
    """Median split: strictly above the median is 'high', else 'low'.

    Even n uses the midpoint of the two central order statistics.
    """
    risks = np.asarray(risks, dtype=np.float64)
    if risks.shape[0] < 2:
        raise ValueError("risk_stratify: need at least 2 subjects")
    med = float(np.median(risks))
    return ["high" if r > med else "low" for r in risks]


# -- chi-square tail via the regularized incomplete gamma --------------------
#
# P(chi2 > x | df) = Q(df/2, x/2). Q is evaluated by the standard pair:
# series expansion of P(a, x) for x < a + 1, Lentz continued fraction for
# Q(a, x) otherwise (Numerical Recipes 6.2).

_GAMMA_EPS = 3e-16
_GAMMA_ITMAX = 300


def _gamma_series_p(a: float, x: float) -> float:
    ap = a
    summ = 1.0 / a
    delta = summ
    for _ in range(_GAMMA_ITMAX):
        ap += 1.0
        delta *= x / ap
        summ += delta
        if abs(delta) < abs(summ) * _GAMMA_EPS:
            break
    return summ * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf_q(a: float, x: float) -> float:
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_ITMAX + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = Gamma(a, x)/Gamma(a)."""
    if x < 0 or a <= 0:
        raise ValueError(f"gamma_q: domain error a={a}, x={x}")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series_p(a, x)
    return _gamma_cf_q(a, x)


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution with df degrees of freedom."""
    if x <= 0:
        return 1.0
    return gamma_q(df / 2.0, x / 2.0)
