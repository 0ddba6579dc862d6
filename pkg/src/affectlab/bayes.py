"""Bayesian linear analysis of Fisher-z CCC scores.

The model regresses z-transformed CCC values on sum-coded factors for
affect representation (3 levels), training strategy (3) and test corpus
(2), with all interactions. Two computational routes target the same
normal-inverse-gamma posterior:

* a closed-form conjugate update (marginal coefficients are Student t);
* a Gibbs sampler over the exact conditionals, run as four seeded chains
  whose first half is discarded, providing R-hat/ESS diagnostics and
  arbitrary nonlinear contrasts.

Effect evidence is quantified with inclusion Bayes factors under a
Zellner g-prior (g = n), and planned contrasts are assessed against a
region of practical equivalence of +-0.1 on the correlation scale
(mapped to +-atanh(0.1) in z space).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import MissingLevel, NonConvergence, RankDeficient
from .metrics import fisher_z

FACTORS = ("representation", "strategy", "test_corpus")
RHAT_LIMIT = 1.01
BF_BANDS = ((100.0, "decisive"), (10.0, "strong"), (3.0, "moderate"))


@dataclass(frozen=True)
class RopeSpec:
    half_width_ccc: float = 0.1

    @property
    def z_bound(self) -> float:
        return float(np.arctanh(self.half_width_ccc))


@dataclass
class DesignSpec:
    y: np.ndarray                 # z-CCC responses
    X: np.ndarray                 # design matrix, column 0 = intercept
    columns: list                 # column names
    blocks: dict                  # block name -> column indices
    rows: list                    # per-row factor levels (dicts)
    levels: dict                  # factor -> ordered level list

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def cell_vector(self, **levels) -> np.ndarray:
        """Design vector of a factor-level cell (the cell's mean response)."""
        codes = {f: _sum_code(levels[f], self.levels[f]) for f in FACTORS}
        vec = [1.0]
        for name in self.columns[1:]:
            vec.append(_column_value(name, codes))
        return np.array(vec)


def _sum_code(level, ordered_levels):
    """Sum-to-zero codes of one level: L-1 columns per factor."""
    if level not in ordered_levels:
        raise MissingLevel(f"unknown level {level!r}")
    k = len(ordered_levels)
    idx = ordered_levels.index(level)
    codes = np.zeros(k - 1)
    if idx < k - 1:
        codes[idx] = 1.0
    else:
        codes[:] = -1.0
    return codes


def _column_value(name, codes) -> float:
    value = 1.0
    for part in name.split(":"):
        factor, _, j = part.rpartition("[")
        value *= codes[factor][int(j.rstrip("]"))]
    return float(value)


def build_design(observations, rope_clip: float = 1.0 - 1e-9) -> DesignSpec:
    """Build the sum-coded design from per-target cell observations.

    ``observations`` is an iterable of mappings with keys ``ccc``,
    ``representation``, ``strategy``, ``test_corpus`` (plus anything else,
    ignored). CCC values are Fisher z-transformed; every factor must show
    at least two levels and the coded matrix must be full column rank.
    """
    rows = []
    for obs in observations:
        if obs.get("ccc") is None:
            continue
        rows.append({k: obs[k] for k in FACTORS} | {"ccc": float(obs["ccc"]),
                                                    "target": obs.get("target")})
    if not rows:
        raise MissingLevel("no scored observations")
    levels = {}
    for f in FACTORS:
        levels[f] = sorted({r[f] for r in rows})
        if len(levels[f]) < 2:
            raise MissingLevel(
                f"factor {f!r} has a single level {levels[f]}; "
                "the factorial design needs at least two")
    y = np.array([fisher_z(float(np.clip(r["ccc"], -rope_clip, rope_clip)))
                  for r in rows])

    main_cols = {f: [f"{f}[{j}]" for j in range(len(levels[f]) - 1)]
                 for f in FACTORS}
    columns = ["intercept"]
    blocks = {}
    for f in FACTORS:
        blocks[f] = list(range(len(columns), len(columns) + len(main_cols[f])))
        columns.extend(main_cols[f])
    inter_specs = [("representation", "strategy"),
                   ("representation", "test_corpus"),
                   ("strategy", "test_corpus"),
                   ("representation", "strategy", "test_corpus")]
    for factors in inter_specs:
        name = ":".join(factors)
        combos = list(product(*(main_cols[f] for f in factors)))
        blocks[name] = list(range(len(columns), len(columns) + len(combos)))
        columns.extend(":".join(c) for c in combos)

    X = np.empty((len(rows), len(columns)))
    for i, r in enumerate(rows):
        codes = {f: _sum_code(r[f], levels[f]) for f in FACTORS}
        X[i, 0] = 1.0
        for j, name in enumerate(columns[1:], start=1):
            X[i, j] = _column_value(name, codes)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficient(
            f"design matrix rank < {X.shape[1]}; add observations or drop terms")
    return DesignSpec(y=y, X=X, columns=columns, blocks=blocks, rows=rows,
                      levels=levels)


# ---------------------------------------------------------------------------
# conjugate posterior + Gibbs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PriorSpec:
    """Normal-inverse-gamma prior: beta | s2 ~ N(m0, s2 V0), s2 ~ IG(a0, b0).

    Default scales follow mainstream default-prior regression practice:
    coefficient j gets sd 2.5/sd(x_j) (relative to the noise scale), the
    intercept a wide sd of 10, and the noise variance an IG(1, 1) prior.
    """

    m0: np.ndarray
    v0_diag: np.ndarray
    a0: float = 1.0
    b0: float = 1.0

    @staticmethod
    def default(design: DesignSpec) -> "PriorSpec":
        p = design.p
        m0 = np.zeros(p)
        m0[0] = float(design.y.mean())
        v0 = np.empty(p)
        v0[0] = 10.0 ** 2
        sds = design.X[:, 1:].std(axis=0)
        v0[1:] = (2.5 / np.where(sds > 0, sds, 1.0)) ** 2
        return PriorSpec(m0=m0, v0_diag=v0)


@dataclass
class Posterior:
    design: DesignSpec
    prior: PriorSpec
    m_n: np.ndarray
    V_n: np.ndarray
    a_n: float
    b_n: float
    chains_beta: np.ndarray       # (n_chains, kept, p)
    chains_sigma2: np.ndarray     # (n_chains, kept)
    rhat: dict                    # quantity name -> split R-hat
    ess: dict

    def coef_marginal(self, j: int):
        """Student-t marginal of coefficient j: (dof, loc, scale)."""
        scale = float(np.sqrt(self.b_n / self.a_n * self.V_n[j, j]))
        return 2.0 * self.a_n, float(self.m_n[j]), scale

    def contrast_marginal(self, a: np.ndarray):
        a = np.asarray(a, dtype=float)
        scale = float(np.sqrt(self.b_n / self.a_n * a @ self.V_n @ a))
        return 2.0 * self.a_n, float(a @ self.m_n), scale

    def contrast_prior(self, a: np.ndarray):
        a = np.asarray(a, dtype=float)
        pr = self.prior
        scale = float(np.sqrt(pr.b0 / pr.a0 * np.sum(a * a * pr.v0_diag)))
        return 2.0 * pr.a0, float(a @ pr.m0), scale

    def check_convergence(self, limit: float = RHAT_LIMIT) -> None:
        bad = {k: v for k, v in self.rhat.items() if v > limit}
        if bad:
            raise NonConvergence(f"R-hat above {limit}: {bad}")


def _split_rhat(draws: np.ndarray) -> float:
    """Split R-hat over (n_chains, n_draws) samples."""
    m, n = draws.shape
    half = n // 2
    segs = draws[:, :half * 2].reshape(m * 2, half)
    seg_means = segs.mean(axis=1)
    seg_vars = segs.var(axis=1, ddof=1)
    W = seg_means.size and float(seg_vars.mean())
    B = half * float(seg_means.var(ddof=1))
    if W <= 0:
        return 1.0
    var_plus = (half - 1) / half * W + B / half
    return float(np.sqrt(var_plus / W))


def _ess(draws: np.ndarray) -> float:
    """Effective sample size with Geyer initial positive-sequence truncation."""
    m, n = draws.shape
    centered = draws - draws.mean(axis=1, keepdims=True)
    max_lag = min(n - 1, 200)
    rho_sum = 0.0
    prev_pair = np.inf
    lag = 1
    denom = float(np.mean(draws.var(axis=1, ddof=0)))
    if denom == 0:
        return float(m * n)
    while lag + 1 <= max_lag:
        rhos = []
        for l in (lag, lag + 1):
            acf = np.mean([np.mean(centered[c, :-l] * centered[c, l:])
                           for c in range(m)]) / denom
            rhos.append(acf)
        pair = rhos[0] + rhos[1]
        if pair < 0:
            break
        pair = min(pair, prev_pair)   # enforce monotone decrease
        rho_sum += pair
        prev_pair = pair
        lag += 2
    return float(m * n / (1.0 + 2.0 * rho_sum))


def posterior(design: DesignSpec, prior: PriorSpec | None = None,
              n_iterations: int = 40_000, n_chains: int = 4,
              seed: int = 0, rhat_limit: float = RHAT_LIMIT) -> Posterior:
    """Closed-form NIG posterior plus a Gibbs sampler over it.

    The Gibbs draws (second half of each chain) are used for diagnostics
    and nonlinear contrasts; their means must agree with the analytic
    posterior, which the acceptance suite asserts. Raises
    :class:`NonConvergence` when any monitored split R-hat exceeds the
    limit.
    """
    prior = prior or PriorSpec.default(design)
    X, y = design.X, design.y
    n, p = X.shape
    if np.allclose(y.var(), 0.0):
        raise RankDeficient("zero-variance response; degenerate likelihood")
    V0_inv = np.diag(1.0 / prior.v0_diag)
    Vn_inv = V0_inv + X.T @ X
    V_n = np.linalg.inv(Vn_inv)
    V_n = (V_n + V_n.T) / 2.0
    m_n = V_n @ (V0_inv @ prior.m0 + X.T @ y)
    a_n = prior.a0 + n / 2.0
    b_n = prior.b0 + 0.5 * float(
        y @ y + prior.m0 @ V0_inv @ prior.m0 - m_n @ Vn_inv @ m_n)

    # Gibbs over the exact conditionals; beta | s2 ~ N(m_n, s2 V_n)
    L = np.linalg.cholesky(V_n)
    kept = n_iterations // 2
    chains_beta = np.empty((n_chains, kept, p))
    chains_sigma2 = np.empty((n_chains, kept))
    resid_const = y - X @ m_n
    a_cond = prior.a0 + (n + p) / 2.0
    seeds = np.random.SeedSequence(seed).spawn(n_chains)
    overdispersion = [0.25, 1.0, 4.0, 16.0]
    for c in range(n_chains):
        rng = np.random.default_rng(seeds[c])
        sigma2 = b_n / a_n * overdispersion[c % len(overdispersion)]
        for it in range(n_iterations):
            beta = m_n + np.sqrt(sigma2) * (L @ rng.standard_normal(p))
            resid = y - X @ beta
            dev = beta - prior.m0
            b_cond = prior.b0 + 0.5 * float(
                resid @ resid + dev @ (dev / prior.v0_diag))
            sigma2 = b_cond / rng.gamma(a_cond)
            if it >= n_iterations - kept:
                idx = it - (n_iterations - kept)
                chains_beta[c, idx] = beta
                chains_sigma2[c, idx] = sigma2

    rhat = {"sigma2": _split_rhat(chains_sigma2)}
    ess = {"sigma2": _ess(chains_sigma2)}
    for j, name in enumerate(design.columns):
        rhat[name] = _split_rhat(chains_beta[:, :, j])
        ess[name] = _ess(chains_beta[:, :, j])
    post = Posterior(design=design, prior=prior, m_n=m_n, V_n=V_n, a_n=a_n,
                     b_n=b_n, chains_beta=chains_beta,
                     chains_sigma2=chains_sigma2, rhat=rhat, ess=ess)
    post.check_convergence(rhat_limit)
    return post


# ---------------------------------------------------------------------------
# Bayes factors (Zellner g-prior)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BayesFactor:
    effect: str
    bf10: float
    bf01: float
    interpretation: str


def _interpret(bf10: float, bf01: float) -> str:
    side = "for" if bf10 >= bf01 else "against"
    value = max(bf10, bf01)
    for bound, word in BF_BANDS:
        if value >= bound:
            return f"{word} evidence {side} the effect"
    return "inconclusive"


def _log_ml_gprior(Xc: np.ndarray, yc: np.ndarray, g: float) -> float:
    """Log marginal likelihood ratio of a centered model vs intercept-only."""
    n, p = Xc.shape
    if p == 0:
        return 0.0
    if np.linalg.matrix_rank(Xc) < p:
        raise RankDeficient("model block is collinear")
    sst = float(yc @ yc)
    coef, *_ = np.linalg.lstsq(Xc, yc, rcond=None)
    sse = float(yc @ yc - (Xc @ coef) @ yc)
    r2 = 1.0 - sse / sst
    return (0.5 * (n - 1 - p) * np.log1p(g)
            - 0.5 * (n - 1) * np.log1p(g * (1.0 - r2)))


def bf_effect(design: DesignSpec, effect: str, g: float | None = None) -> BayesFactor:
    """Inclusion Bayes factor of one coded block (main effect or interaction).

    Marginal likelihoods come from the unit-information g-prior (g = n)
    with a flat prior on the intercept; the BF compares the full model
    against the full model without the block.
    """
    if effect not in design.blocks:
        raise KeyError(f"unknown effect {effect!r}; "
                       f"available: {sorted(design.blocks)}")
    g = float(design.n if g is None else g)
    yc = design.y - design.y.mean()
    all_idx = [j for j in range(1, design.p)]
    keep_idx = [j for j in all_idx if j not in design.blocks[effect]]

    def centered(idx):
        Xc = design.X[:, idx]
        return Xc - Xc.mean(axis=0)

    log_full = _log_ml_gprior(centered(all_idx), yc, g)
    log_red = _log_ml_gprior(centered(keep_idx), yc, g)
    log_bf10 = log_full - log_red
    bf10 = float(np.exp(log_bf10))
    bf01 = float(np.exp(-log_bf10))
    return BayesFactor(effect=effect, bf10=bf10, bf01=bf01,
                       interpretation=_interpret(bf10, bf01))


# ---------------------------------------------------------------------------
# ROPE contrasts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RopeResult:
    name: str
    median: float
    cri_low: float
    cri_high: float
    p_in: float
    bf_rope: float
    classification: str           # superior | inferior | equivalent | inconclusive


def rope_contrast(post: Posterior, contrast: np.ndarray, rope: RopeSpec,
                  name: str = "contrast") -> RopeResult:
    """Posterior of a linear contrast of coefficients against the ROPE.

    ``p_in`` is the posterior mass inside +-atanh(rope half width);
    ``bf_rope`` is the posterior odds of being inside divided by the prior
    odds. Classification: superior/inferior when 95% of the mass lies
    beyond the respective bound, equivalent when bf_rope >= 3.
    """
    z0 = rope.z_bound
    dof, loc, scale = post.contrast_marginal(contrast)
    dist = stats.t(df=dof, loc=loc, scale=scale)
    p_in = float(dist.cdf(z0) - dist.cdf(-z0))
    pdof, ploc, pscale = post.contrast_prior(contrast)
    prior_dist = stats.t(df=pdof, loc=ploc, scale=pscale)
    p_in_prior = float(prior_dist.cdf(z0) - prior_dist.cdf(-z0))
    eps = 1e-12
    odds_post = (p_in + eps) / (1.0 - p_in + eps)
    odds_prior = (p_in_prior + eps) / (1.0 - p_in_prior + eps)
    bf_rope = float(odds_post / odds_prior)
    p_above = float(1.0 - dist.cdf(z0))
    p_below = float(dist.cdf(-z0))
    if p_above >= 0.95:
        cls = "superior"
    elif p_below >= 0.95:
        cls = "inferior"
    elif bf_rope >= 3.0:
        cls = "equivalent"
    else:
        cls = "inconclusive"
    lo, hi = dist.ppf(0.025), dist.ppf(0.975)
    return RopeResult(name=name, median=float(dist.ppf(0.5)),
                      cri_low=float(lo), cri_high=float(hi), p_in=p_in,
                      bf_rope=bf_rope, classification=cls)


# ---------------------------------------------------------------------------
# full report
# ---------------------------------------------------------------------------

@dataclass
class PosteriorReport:
    coefficients: list            # dicts: name, median, cri, rhat, ess, bf
    effects: list                 # BayesFactor dicts per block
    cell_contrasts: list          # RopeResult dicts per factor cell
    rope: dict
    meta: dict

    def to_json(self) -> dict:
        return {"coefficients": self.coefficients, "effects": self.effects,
                "cell_contrasts": self.cell_contrasts, "rope": self.rope,
                "meta": self.meta}

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    def to_markdown(self) -> str:
        lines = ["## Posterior report", "",
                 f"ROPE: +-{self.rope['half_width_ccc']} CCC "
                 f"(+-{self.rope['z_bound']:.4f} in z space)", "",
                 "### Effects", "",
                 "| Effect | BF10 | BF01 | Interpretation |", "|---|---|---|---|"]
        for e in self.effects:
            lines.append(f"| {e['effect']} | {e['bf10']:.3g} | "
                         f"{e['bf01']:.3g} | {e['interpretation']} |")
        lines += ["", "### Condition means vs ROPE", "",
                  "| Condition | Median z | 95% CrI | P(in ROPE) | BF_rope "
                  "| Verdict |", "|---|---|---|---|---|---|"]
        for c in self.cell_contrasts:
            lines.append(
                f"| {c['name']} | {c['median']:.3f} | "
                f"[{c['cri_low']:.3f}, {c['cri_high']:.3f}] | "
                f"{c['p_in']:.3f} | {c['bf_rope']:.3g} | {c['classification']} |")
        lines += ["", "### Coefficients", "",
                  "| Coefficient | Median | 95% CrI | R-hat | ESS |",
                  "|---|---|---|---|---|"]
        for c in self.coefficients:
            lines.append(f"| {c['name']} | {c['median']:.4f} | "
                         f"[{c['cri_low']:.4f}, {c['cri_high']:.4f}] | "
                         f"{c['rhat']:.4f} | {c['ess']:.0f} |")
        return "\n".join(lines) + "\n"


def analyze(design: DesignSpec, rope: RopeSpec | None = None,
            n_iterations: int = 40_000, n_chains: int = 4,
            seed: int = 0) -> tuple:
    """Full pipeline: posterior, effect BFs, and per-cell ROPE contrasts."""
    rope = rope or RopeSpec()
    post = posterior(design, n_iterations=n_iterations, n_chains=n_chains,
                     seed=seed)
    coefficients = []
    for j, name in enumerate(design.columns):
        dof, loc, scale = post.coef_marginal(j)
        dist = stats.t(df=dof, loc=loc, scale=scale)
        coefficients.append({
            "name": name, "median": float(dist.ppf(0.5)),
            "cri_low": float(dist.ppf(0.025)),
            "cri_high": float(dist.ppf(0.975)),
            "rhat": post.rhat[name], "ess": post.ess[name]})
    effects = [vars(bf_effect(design, name)) for name in design.blocks]
    cells = []
    for rep in design.levels["representation"]:
        for strat in design.levels["strategy"]:
            for corpus in design.levels["test_corpus"]:
                vec = design.cell_vector(representation=rep, strategy=strat,
                                         test_corpus=corpus)
                res = rope_contrast(post, vec, rope,
                                    name=f"{rep}/{strat}/{corpus}")
                cells.append(vars(res))
    report = PosteriorReport(
        coefficients=coefficients, effects=effects, cell_contrasts=cells,
        rope={"half_width_ccc": rope.half_width_ccc, "z_bound": rope.z_bound},
        meta={"n_observations": design.n, "n_chains": n_chains,
              "n_iterations": n_iterations, "seed": seed,
              "max_rhat": max(post.rhat.values())})
    return post, report
