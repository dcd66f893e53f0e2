"""Algorithm parameters, feasibility checks and the search for a small m.

The sampler is exact only when a set of analytic inequalities hold for
the tuple (mu, m, L, alpha, gamma, delta).  Everything here is
deterministic: moments come from the certified series of the increment
law, never from simulation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .increments import IncrementDistribution

FINITE_VARIANCE = "finite_variance"
BETA_1_2 = "beta_in_1_2"
K_AUDIT = 60


@dataclass(frozen=True)
class AlgorithmParams:
    """Tuning parameters of the exact sampler."""

    mu: float
    m: float
    L: float = 1.1
    alpha: float = 4.0
    gamma: float = 1.0
    delta: float = 0.38
    mode: str = FINITE_VARIANCE
    eps: float | None = None

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.m > 0:
            raise ValueError("m must be positive")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.delta <= 0.5:
            raise ValueError("delta must lie in (0, 1/2]")
        if self.alpha <= 1:
            raise ValueError("alpha must exceed 1")
        if self.mode not in (FINITE_VARIANCE, BETA_1_2):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.eps is not None:
            if self.mode == BETA_1_2:
                if not 0 < self.eps < 1:
                    raise ValueError("eps must lie in (0, 1) in the beta in (1,2] mode")
                if self.alpha > (1 + self.eps) * (1 - self.delta):
                    raise ValueError("alpha exceeds (1+eps)(1-delta)")
            else:
                if not self.eps > 0:
                    raise ValueError("eps must be positive")
                if not 2 < self.alpha <= (2 + self.eps) * (1 - self.delta):
                    raise ValueError("need 2 < alpha <= (2+eps)(1-delta)")

    @property
    def beta(self) -> float | None:
        if self.eps is None:
            return None
        return (1.0 if self.mode == BETA_1_2 else 2.0) + self.eps

    def with_m(self, m: float) -> "AlgorithmParams":
        return replace(self, m=float(m))

    def to_dict(self):
        return asdict(self)


@dataclass
class FeasibilityReport:
    """Per-constraint verdicts plus the audited suprema."""

    cond_alpha: bool
    m_at_least_one: bool
    cm3: bool
    ci1: bool
    ci2: bool
    ci1_sup: float
    ci2_sup: float
    ci1_tail_envelope: float
    ci2_tail_envelope: float
    eps: float
    beta: float
    k_audit: int = K_AUDIT
    extra: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        gates = [self.cond_alpha, self.m_at_least_one, self.cm3, self.ci1, self.ci2]
        gates += [v for k, v in self.extra.items() if k.startswith("gate_")]
        return all(gates)

    def failed(self) -> list[str]:
        names = ["cond_alpha", "m_at_least_one", "cm3", "ci1", "ci2"]
        out = [n for n in names if not getattr(self, n)]
        out += [k for k, v in self.extra.items() if k.startswith("gate_") and not v]
        return out

    def to_dict(self):
        d = asdict(self)
        d["feasible"] = self.feasible
        return d


class InfeasibleParams(ValueError):
    def __init__(self, report: FeasibilityReport, message: str = "infeasible parameters"):
        super().__init__(f"{message}: failed {report.failed()}")
        self.report = report


# --------------------------------------------------------------------------
# moment bookkeeping


def _base_order(mode):
    return 1.0 if mode == BETA_1_2 else 2.0


def choose_eps(params: AlgorithmParams, d: IncrementDistribution) -> tuple[float, bool]:
    """Pick eps for the index constraint; returns (eps, constraint_holds).

    The smallest admissible order is alpha/(1 - delta); any order below the
    moment limit of the law works.  Among admissible orders we pick the one
    giving the smallest tail envelope for the first inequality.
    """
    base = _base_order(params.mode)
    lim = d.moment_limit
    if params.eps is not None:
        beta = base + params.eps
        ok = beta < lim and params.alpha <= beta * (1 - params.delta)
        if params.mode == FINITE_VARIANCE:
            ok = ok and params.alpha > 2
        else:
            ok = ok and params.alpha > 1 and params.eps < 1
        return params.eps, ok
    beta_min = max(params.alpha / (1.0 - params.delta), base + 1e-9)
    if params.mode == BETA_1_2:
        beta_cap = min(lim, 2.0) - 1e-9
    else:
        beta_cap = lim
    ok_alpha = params.alpha > 2 if params.mode == FINITE_VARIANCE else params.alpha > 1
    if beta_min >= beta_cap or not ok_alpha:
        # report the largest order the law allows, flagged as failing
        fallback = min(beta_cap, base + 2.0)
        return max(fallback - base - 1e-3, 1e-3), False
    hi = beta_cap if math.isfinite(beta_cap) else beta_min + 4.0
    cands = np.linspace(beta_min, hi, 24)[:-1] if math.isfinite(beta_cap) else np.linspace(beta_min, hi, 24)
    best = None
    u_k = params.mu * 2.0**K_AUDIT + params.m
    for b in cands:
        mom = d.positive_moment(float(b))
        if not math.isfinite(mom):
            continue
        val = math.log(max(mom, 1e-300)) + (params.alpha - b * (1 - params.delta)) * math.log(u_k)
        if best is None or val < best[0]:
            best = (val, float(b))
    if best is None:
        return max(beta_min - base, 1e-3), False
    return best[1] - base, True


# --------------------------------------------------------------------------
# the two key inequalities


def _log_norm(params):
    a, m = params.alpha, params.m
    return math.log(a - 1.0) + (a - 1.0) * math.log1p(m)


def ci1_lhs(params: AlgorithmParams, d: IncrementDistribution, z):
    """Left side of the first inequality at z (vectorized)."""
    z = np.asarray(z, dtype=float)
    a, m, mu, de = params.alpha, params.m, params.mu, params.delta
    tail = np.asarray(d.tail_prob((z + m) ** (1.0 - de)), dtype=float)
    with np.errstate(divide="ignore"):
        logv = math.log(6.0) + a * np.log1p(2 * z + m) + np.log(tail) - _log_norm(params) - math.log(mu)
    return np.exp(logv)


def ci2_lhs(params: AlgorithmParams, d: IncrementDistribution, z, ex2: float | None = None):
    """Left side of the second inequality at z (vectorized)."""
    z = np.asarray(z, dtype=float)
    a, m, mu, de, g = params.alpha, params.m, params.mu, params.delta, params.gamma
    ex2 = d.second_moment() if ex2 is None else ex2
    tail = np.asarray(d.tail_prob((z + m) ** (1.0 - de)), dtype=float)
    expo = (-g * (m + z) ** de + g * g * math.exp(g) * ex2 * z / ((m + z) ** (2 * (1 - de)) * mu)
            + 4.0 * z / mu * tail)
    logv = math.log(3.0) + a * np.log1p(2 * z + m) - _log_norm(params) - np.log(z) + expo
    return np.exp(np.minimum(logv, 700.0))


def _grid(params, k_audit):
    return params.mu * 2.0 ** np.arange(0, k_audit + 1)


def check_ci1(params, d, k_audit: int = K_AUDIT, eps: float | None = None):
    """Grid supremum of the first inequality plus a tail envelope beyond the grid.

    Returns (passes, grid_sup, tail_envelope, moment_envelope).
    """
    if eps is None:
        eps, _ = choose_eps(params, d)
    beta = _base_order(params.mode) + eps
    grid_sup = float(np.max(ci1_lhs(params, d, _grid(params, k_audit))))
    a, m, de, mu = params.alpha, params.m, params.delta, params.mu
    mom = d.positive_moment(beta)
    log_scale = math.log(6.0) + a * math.log(2.0) - _log_norm(params) - math.log(mu)
    u_k = params.mu * 2.0**k_audit + m
    if d.support_max < u_k ** (1 - de):
        tail_env = 0.0
    elif a <= beta * (1 - de) and m >= 1 and math.isfinite(mom):
        # for z beyond the grid: 6 (1+2z+m)^a P(X > u^(1-de)) <= 6 2^a u^(a - beta(1-de)) E(X+)^beta
        tail_env = math.exp(log_scale + (a - beta * (1 - de)) * math.log(u_k) + math.log(max(mom, 1e-300)))
    else:
        tail_env = math.inf
    moment_env = math.exp(log_scale + math.log(max(mom, 1e-300))) if math.isfinite(mom) else math.inf
    return grid_sup <= 1.0 and tail_env <= 1.0, grid_sup, tail_env, moment_env


def check_ci2(params, d, k_audit: int = K_AUDIT, eps: float | None = None):
    """Grid supremum of the second inequality plus a tail envelope beyond the grid.

    Returns (passes, grid_sup, tail_envelope, closed_form_bound).
    """
    if params.mode != FINITE_VARIANCE:
        raise ValueError("use check_ci2_beta12 in the beta in (1,2] mode")
    if eps is None:
        eps, _ = choose_eps(params, d)
    beta = 2.0 + eps
    ex2 = d.second_moment()
    grid_sup = float(np.max(ci2_lhs(params, d, _grid(params, k_audit), ex2)))
    a, m, de, mu, g = params.alpha, params.m, params.delta, params.mu, params.gamma
    mom = d.positive_moment(beta)
    z_k = params.mu * 2.0**k_audit
    u_k = z_k + m
    monotone = (u_k**de >= (a - 1.0) / (g * de)) and z_k >= m and beta * (1 - de) >= 1
    if monotone and math.isfinite(mom):
        expo = (-g * u_k**de + g * g * math.exp(g) * ex2 * u_k ** (2 * de - 1) / mu
                + 4.0 * mom * u_k ** (1 - beta * (1 - de)) / mu)
        logv = math.log(6.0) + a * math.log(2.0) + (a - 1.0) * math.log(u_k) - _log_norm(params) + expo
        tail_env = math.exp(min(logv, 700.0))
    else:
        tail_env = math.inf
    closed = ci2_closed_bound(params, ex2)
    return grid_sup <= 1.0 and tail_env <= 1.0, grid_sup, tail_env, closed


def _log_peak(a: float, de: float, g: float, m: float) -> float:
    """log of max_{u >= g^(1/de) m} u^a exp(-u^de).

    The unconstrained maximizer is u = (a/de)^(1/de) with value
    (a/de)^(a/de) exp(-a/de); below the lower end the boundary value is used.
    """
    r = a / de
    log_u0 = math.log(g) / de + math.log(m)
    if math.log(r) / de >= log_u0:
        return r * (math.log(r) - 1.0)
    return a * log_u0 - math.exp(de * log_u0)


def ci2_closed_bound(params: AlgorithmParams, ex2: float) -> float:
    """Closed-form sufficient bound for the second inequality (informational)."""
    a, m, de, mu, g = params.alpha, params.m, params.delta, params.mu, params.gamma
    shape = (1 - 2 * de) ** (1 - 2 * de) / (2 * (1 - de)) ** (2 * (1 - de))
    expo = (g * g * math.exp(g) + 4.0) * ex2 * shape / (mu * m ** (1 - 2 * de))
    peak = _log_peak(a, de, g, m)
    logv = (math.log(3.0) + a * math.log(2.0) - (a / de) * math.log(g) - _log_norm(params)
            - math.log(mu) + expo + peak)
    return math.exp(min(logv, 700.0))


def mgf_constant_fv(gamma: float, ex2: float) -> float:
    """A = (gamma^2 e^gamma / 2 + 2) E X^2."""
    return (gamma * gamma * math.exp(gamma) / 2.0 + 2.0) * ex2


def mgf_constant_beta12(gamma: float, eps: float, abs_moment: float) -> float:
    """A = (gamma^2/2 * e^max(1,gamma)/(1-eps) + 2) E|X|^(1+eps).

    The larger of e and e^gamma is used so the constant is valid under both
    readings of the exponential factor.
    """
    return (gamma * gamma / 2.0 * math.exp(max(1.0, gamma)) / (1.0 - eps) + 2.0) * abs_moment


def truncated_log_mgf_bound(gamma: float, delta: float, ex2: float, tail: float, u: float) -> float:
    """Upper bound on psi at level u in the finite variance case (needs E X^2 / u^(2(1-delta)) <= 1/2)."""
    return gamma * gamma * math.exp(gamma) * ex2 / (2.0 * u ** (2 * (1 - delta))) + 2.0 * tail


def check_ci2_beta12(params, d, k_audit: int = K_AUDIT, eps: float | None = None):
    """Closed-form replacement of the second inequality in the beta in (1,2] mode.

    Returns (passes, value, in1_holds, delta_ok).
    """
    if params.mode != BETA_1_2:
        raise ValueError("check_ci2_beta12 needs the beta in (1,2] mode")
    if eps is None:
        eps, _ = choose_eps(params, d)
    a, m, de, mu, g = params.alpha, params.m, params.delta, params.mu, params.gamma
    mom = d.abs_moment(1.0 + eps)
    big_a = mgf_constant_beta12(g, eps, mom)
    peak = _log_peak(a, de, g, m)
    logv = (math.log(3.0) + a * math.log(2.0) - (a / de) * math.log(g) - _log_norm(params)
            - math.log(mu) + 2.0 * big_a / mu + peak)
    val = math.exp(min(logv, 700.0))
    in1 = mom / m ** ((1 - de) * (1 + eps)) <= 0.5
    delta_ok = de <= eps / 2.0
    return val <= 1.0, val, in1, delta_ok


def check_cm3(params, d) -> bool:
    if params.mode == BETA_1_2:
        return True
    return d.second_moment() / params.m ** (2 * (1 - params.delta)) <= 0.5


def check_feasibility(params: AlgorithmParams, d: IncrementDistribution,
                      k_audit: int = K_AUDIT) -> FeasibilityReport:
    eps, cond_alpha = choose_eps(params, d)
    beta = _base_order(params.mode) + eps
    ok1, sup1, env1, moment1 = check_ci1(params, d, k_audit, eps)
    extra = {"ci1_moment_envelope": moment1}
    notes = []
    if params.mode == FINITE_VARIANCE:
        ok2, sup2, env2, closed = check_ci2(params, d, k_audit, eps)
        extra["ci2_closed_bound"] = closed
    else:
        ok2, sup2, in1, delta_ok = check_ci2_beta12(params, d, k_audit, eps)
        env2 = sup2
        extra["gate_mgf_moment"] = bool(in1)
        extra["gate_mgf_delta"] = bool(delta_ok)
    if not cond_alpha:
        notes.append(f"no admissible moment order: alpha/(1-delta) = "
                     f"{params.alpha / (1 - params.delta):.4g}, law has moments below {d.moment_limit:.4g}")
    return FeasibilityReport(
        cond_alpha=bool(cond_alpha),
        m_at_least_one=params.m >= 1,
        cm3=bool(check_cm3(params, d)),
        ci1=bool(ok1),
        ci2=bool(ok2),
        ci1_sup=sup1,
        ci2_sup=sup2,
        ci1_tail_envelope=env1,
        ci2_tail_envelope=env2,
        eps=float(eps),
        beta=float(beta),
        k_audit=k_audit,
        extra=extra,
        notes=notes,
    )


def require_feasible(params, d) -> FeasibilityReport:
    rep = check_feasibility(params, d)
    if not rep.feasible:
        raise InfeasibleParams(rep)
    return rep


def minimize_m(d: IncrementDistribution, mu: float, alpha: float, delta: float, gamma: float,
               L: float = 1.1, mode: str = FINITE_VARIANCE, eps: float | None = None,
               m_max: float = 1e9, rel_tol: float = 1e-3) -> AlgorithmParams:
    """Smallest feasible m in [1, m_max] by bisection (feasibility is monotone in m)."""

    def make(m):
        return AlgorithmParams(mu=mu, m=m, L=L, alpha=alpha, gamma=gamma, delta=delta, mode=mode, eps=eps)

    if check_feasibility(make(1.0), d).feasible:
        return make(1.0)
    top = check_feasibility(make(m_max), d)
    if not top.feasible:
        raise InfeasibleParams(top, f"no feasible m up to {m_max:g}")
    lo, hi = 1.0, m_max
    while hi / lo > 1.0 + rel_tol:
        mid = math.sqrt(lo * hi)
        if check_feasibility(make(mid), d).feasible:
            hi = mid
        else:
            lo = mid
    return make(hi)


def sweep_parameters(d, mu, L=1.1, deltas=(0.2, 0.25, 0.3, 0.38, 0.45, 0.5),
                     alphas=(2.02, 2.05, 2.1, 2.2, 2.5, 3.0, 4.0),
                     gammas=(0.5, 0.75, 1.0, 1.25, 1.5, 1.7, 2.0, 2.5), mode=FINITE_VARIANCE):
    """Coarse grid over (delta, alpha, gamma); returns the params with the smallest feasible m."""
    best = None
    for de in deltas:
        for a in alphas:
            if a >= d.moment_limit * (1 - de):
                continue
            for g in gammas:
                try:
                    p = minimize_m(d, mu, a, de, g, L=L, mode=mode, rel_tol=1e-2)
                except (InfeasibleParams, ValueError):
                    continue
                if best is None or p.m < best.m:
                    best = p
    if best is None:
        raise ValueError("no feasible configuration on the sweep grid")
    return best


def check_cm0(params: AlgorithmParams, d: IncrementDistribution, rng=None, length: int = 10**6):
    """Pilot check that the stationary law charges (m, (L+1) m].

    Returns ("verified" | "assumed", observed frequency).
    """
    from .oracles import lindley_chain

    rng = np.random.default_rng(0) if rng is None else rng
    w = lindley_chain(d, params.mu, length, rng)
    freq = float(np.mean((w > params.m) & (w <= (params.L + 1) * params.m)))
    if freq > 0:
        return "verified", freq
    warnings.warn("pilot chain never visited (m, (L+1)m]; the condition is assumed, not verified")
    return "assumed", freq
