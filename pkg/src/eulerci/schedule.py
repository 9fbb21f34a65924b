"""Stage-index lattice and the double-exponential parameter schedule.

A stage index J = (q, j, l) walks the lattice N x {0..7}^2 in lexicographic
order; 64 stages advance q by one.  The schedule is evaluated in log space
(lambda_q = a^{b^q - 1} overflows float64 around q ~ 15 already for a = 4)
and clamped to what the grid can resolve; every clamp and every Lemma-4.1
inequality is reported, never assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError

B_EXPONENT = 1.5  # the schedule's growth exponent b


@dataclass(frozen=True, order=True)
class StageIndex:
    q: int
    j: int = 0
    l: int = 0

    def __post_init__(self):
        if self.q < 0 or not 0 <= self.j <= 7 or not 0 <= self.l <= 7:
            raise ConfigError(f"invalid stage index {(self.q, self.j, self.l)}")

    def successor(self):
        q, j, l = self.q, self.j, self.l
        l += 1
        if l == 8:
            l = 0
            j += 1
        if j == 8:
            j = 0
            q += 1
        return StageIndex(q, j, l)

    @property
    def abs_index(self):
        return self.q + self.j / 8.0 + self.l / 64.0

    @property
    def q_star(self):
        return self.q - 1 if (self.j == 0 and self.l == 0) else self.q

    @property
    def s_index(self):
        return 1280 + 80 * self.j + 10 * self.l

    @property
    def m_bound(self):
        return 1.0 + 2.0**13 * (1.0 - 2.0**-self.q) + (8 * self.j + self.l) * 2.0 ** (6 - self.q)

    def __str__(self):
        return f"({self.q},{self.j},{self.l})"


def index_successor(idx):
    return idx.successor()


def derived_index(idx):
    """(q*, |J|, s(J), M(J)) for a stage index."""
    return idx.q_star, idx.abs_index, idx.s_index, idx.m_bound


@dataclass
class ScheduleConfig:
    a: float = 4.0
    alpha: float = 0.01
    beta: float = 2.0**-11
    grid_n: int = 128
    level_scale: float = 1.0  # s_Omega: velocity-dimension threshold scale
    kappa_target: float = 0.05  # contraction budget for auto amplitude scaling
    amplitude_scale: float | str = "auto"

    def validate(self):
        if not self.a > 1.0:
            raise ConfigError(f"schedule parameter a must be > 1, got {self.a}")
        if not 0.0 < self.alpha <= 0.05:
            raise ConfigError(f"alpha must lie in (0, 0.05], got {self.alpha}")
        if not 0.0 < self.beta < 0.5:
            raise ConfigError(f"beta must lie in (0, 0.5), got {self.beta}")
        n = self.grid_n
        if n < 16 or (n & (n - 1)) != 0:
            raise ConfigError(f"grid_n must be a power of two >= 16, got {n}")
        if isinstance(self.amplitude_scale, str) and self.amplitude_scale != "auto":
            raise ConfigError(f"amplitude_scale must be 'auto' or a float, got {self.amplitude_scale}")
        return self

    # -- log-domain schedule ------------------------------------------
    def log_lambda(self, abs_index):
        """log lambda_J = (b^|J| - 1) log a."""
        return (B_EXPONENT**abs_index - 1.0) * math.log(self.a)

    def log_delta(self, q):
        """log delta_q = -4 alpha log lambda_q; delta_{-1} := 1."""
        if q <= -1:
            return 0.0
        return -4.0 * self.alpha * self.log_lambda(q)

    def lam(self, abs_index):
        return math.exp(min(self.log_lambda(abs_index), 700.0))

    def delta(self, q):
        return math.exp(self.log_delta(q))


@dataclass
class FeasibilityReport:
    """Numerical evaluation of the Lemma 4.1 inequalities at one stage.

    Each entry maps the inequality name to (holds, log10 margin); the margin
    is log10(rhs) - log10(lhs), positive when the inequality holds.
    """

    entries: dict = field(default_factory=dict)

    def add(self, name, log_lhs, log_rhs):
        margin = (log_rhs - log_lhs) / math.log(10.0)
        self.entries[name] = (log_lhs <= log_rhs, margin)

    @property
    def all_hold(self):
        return all(ok for ok, _ in self.entries.values())

    def to_dict(self):
        out = {}
        for name in sorted(self.entries):
            ok, margin = self.entries[name]
            out[f"{name}_holds"] = ok
            out[f"{name}_log10_margin"] = margin
        return out


@dataclass
class ScheduleParams:
    """All derived parameters for one stage, with desk clamps applied."""

    index: StageIndex
    a: float
    alpha: float
    beta: float
    lam_raw: float
    lam: float  # lambda_{J+1}, clamped to N/4
    frequency_clamped: bool
    eta: float
    mu_raw: float
    mu: float
    mu_clamped: bool
    ell_formula: float
    ell: float
    ell_tilde_formula: float
    ell_tilde: float
    deltas: dict
    level_scale: float
    kappa_target: float
    amplitude_scale: float | str
    feasibility: FeasibilityReport

    def delta(self, q):
        return self.deltas[q]

    def to_dict(self):
        d = {
            "index": str(self.index),
            "a": self.a,
            "alpha": self.alpha,
            "beta": self.beta,
            "lambda_raw": self.lam_raw,
            "lambda": self.lam,
            "frequency_clamped": self.frequency_clamped,
            "eta": self.eta,
            "mu_raw": self.mu_raw,
            "mu": self.mu,
            "mu_clamped": self.mu_clamped,
            "ell_formula": self.ell_formula,
            "ell": self.ell,
            "ell_tilde_formula": self.ell_tilde_formula,
            "ell_tilde": self.ell_tilde,
            "level_scale": self.level_scale,
        }
        d.update(self.feasibility.to_dict())
        return d


def _lattice_scale_formula(cfg, q):
    """ell = 1/floor(2^4 delta_{q+4}^{-1} delta_{q-1}^{1/2} lambda_q)."""
    val = 2.0**4 / cfg.delta(q + 4) * math.sqrt(cfg.delta(q - 1)) * cfg.lam(q)
    return 1.0 / max(1.0, math.floor(val))


def _lattice_scale_tilde_formula(cfg, q):
    lam_j2 = cfg.lam(q + 2.0 / 8.0)
    val = math.sqrt(cfg.delta(q)) / cfg.delta(q + 4) * lam_j2
    return 1.0 / max(1.0, math.floor(val))


# geometry of the stage cells: U = Q + B(0, 0.23 ell) keeps same-color cells
# disjoint and dist(Q, dU) >= ell/8; the chi-cutoffs fit inside U when their
# support (width 1.5/mu) does not exceed that margin
CELL_MARGIN = 0.23
CHI_FIT = 1.5 / CELL_MARGIN  # mu >= CHI_FIT / ell
MIN_CUTOFF_CELLS = 6  # chi support at least this many grid cells


def mu_cap(n):
    return n / 4.0


def admissible_lattice_scales(n):
    """Reciprocal-of-even lattice scales usable at resolution n."""
    out = []
    k = 2
    while True:
        ell = 1.0 / k
        if CHI_FIT / ell > mu_cap(n):
            break
        out.append(ell)
        k += 2
    if not out:
        out = [0.5]
    return out


def clamp_lattice_scale(formula_value, n):
    """Finest admissible lattice scale not finer than the grid allows."""
    scales = admissible_lattice_scales(n)
    for ell in scales:  # coarsest to finest
        if ell <= formula_value:
            return ell
    return scales[-1]


def stage_params(idx, cfg, v1_norm=None):
    """Evaluate the full schedule at stage J = idx (parameters of J+1).

    v1_norm, when given, is the measured C^1 norm of v_J entering the
    (comparación ell mu) inequality.
    """
    cfg.validate()
    nxt = idx.successor()
    q = idx.q
    log_lam_next = cfg.log_lambda(nxt.abs_index)
    lam_raw = math.exp(min(log_lam_next, 700.0))
    cap = mu_cap(cfg.grid_n)  # lambda cap N/4 per the desk design
    lam = min(lam_raw, cap)
    clamped = lam_raw > cap

    deltas = {qq: cfg.delta(qq) for qq in range(max(-1, q - 1), q + 6)}
    deltas[-1] = 1.0

    eta = deltas[q + 4] * lam ** (1.0 - 2.0 * cfg.alpha)
    mu_raw = lam ** (1.0 - 4.0 * cfg.beta)

    ell_formula = _lattice_scale_formula(cfg, q)
    ell = clamp_lattice_scale(ell_formula, cfg.grid_n)
    ell_tilde_formula = _lattice_scale_tilde_formula(cfg, q)
    ell_tilde = clamp_lattice_scale(ell_tilde_formula, cfg.grid_n)

    # integer mu keeps the cutoff lattice 1-periodic on the torus
    mu_min = CHI_FIT / ell
    mu = float(min(max(math.ceil(mu_raw), math.ceil(mu_min)), math.floor(cap)))
    mu_clamped = abs(mu - mu_raw) > 1e-12

    rep = FeasibilityReport()
    la = math.log(cfg.a)
    log_lam = cfg.log_lambda(idx.abs_index)
    log_lam_n = log_lam_next
    ld = cfg.log_delta
    log_eta = ld(q + 4) + (1.0 - 2.0 * cfg.alpha) * log_lam_n
    log_mu = (1.0 - 4.0 * cfg.beta) * log_lam_n
    # (aux lambda negativa), both halves
    rep.add("aux_lambda_negativa_left", -cfg.beta * log_lam_n, 3000.0 * ld(q + 1))
    rep.add("aux_lambda_negativa_right", 3000.0 * ld(q + 1), ld(q + 4) - cfg.alpha * log_lam_n)
    # (aux rel parámetros)
    rep.add("aux_rel_parametros", log_lam, ld(q + 4) + log_mu - cfg.beta * log_lam_n)
    # (relación mu eta)
    rep.add(
        "relacion_mu_eta",
        0.5 * (ld(q) - ld(q + 2)) + log_mu - log_eta,
        -3.0 * cfg.beta * log_lam_n,
    )
    # (cociente de parámetros)
    rep.add(
        "cociente_de_parametros",
        0.5 * (ld(q) + ld(idx.q_star) - ld(q + 2)) + log_lam + log_lam_n - log_mu - log_eta,
        -2.0 * cfg.beta * log_lam_n,
    )
    # (otra relación entre las lambdas)
    rep.add("otra_relacion_lambdas", log_lam, 0.5 * ld(q) + (1.0 - 2.0 * cfg.beta) * log_lam_n)
    # (comparación ell mu)
    lhs = 1.0 / ell + (v1_norm if v1_norm is not None else 0.0)
    rep.add("comparacion_ell_mu", math.log(lhs), log_mu)
    _ = la

    return ScheduleParams(
        index=idx,
        a=cfg.a,
        alpha=cfg.alpha,
        beta=cfg.beta,
        lam_raw=lam_raw,
        lam=lam,
        frequency_clamped=clamped,
        eta=eta,
        mu_raw=mu_raw,
        mu=mu,
        mu_clamped=mu_clamped,
        ell_formula=ell_formula,
        ell=ell,
        ell_tilde_formula=ell_tilde_formula,
        ell_tilde=ell_tilde,
        deltas=deltas,
        level_scale=cfg.level_scale,
        kappa_target=cfg.kappa_target,
        amplitude_scale=cfg.amplitude_scale,
        feasibility=rep,
    )
