"""The simulation studies: selection power, selection stability, coverage of
coefficient and projection-parameter intervals, the conditional pivot under
non-normal errors, and the information inequality.

Every ``run_*`` function takes an :class:`ExperimentConfig` and returns a list
of :class:`ResultTable` objects, the main table first.
"""

from __future__ import annotations

import math
import time
from collections import Counter, defaultdict

import numpy as np
from scipy import stats

from ..errors import DomainError, InsufficientConditioning, RankDeficient
from ..fisher import CRITERIA, PhiCriterion, Strategy, verify_proposition1
from ..infer import ci_coef_ds, ci_coef_face_value, ci_coef_randomised, ci_projection
from ..linmodel import estimate_sigma, gen_design, projection_contrast, projection_parameter
from ..rng import cell_key, make_rng
from ..select import knockoff_construct, knockoff_filter, lasso_support, stability_select
from ..split import duplex_split, gamma_from_fraction, randomised_split, simple_split
from .config import ExperimentConfig
from .runner import run_replications
from .tables import ResultTable

__all__ = [
    "BETA_GRID",
    "gen_beta",
    "run_power",
    "run_stability",
    "run_coverage_coef",
    "run_coverage_projection",
    "run_theorem1",
    "run_prop1",
    "run_experiment",
]

BETA_GRID = np.round(np.arange(1, 11) / 10.0, 1)
N_ACTIVE = 10
STABILITY_BETA = BETA_GRID[::-1]
COVERAGE_BETA = np.array([1.0, -1.0, 0.5, -0.5, 0.2, -0.2])
COVERAGE_BINS = (0.0, 0.2, 0.5, 1.0)
MAX_SET_SIZE = 8
# asymptotic pivot study: local alternatives c / sqrt(n) and penalty lam_c / sqrt(n)
THEOREM1_C = (4.0, 2.0, 1.0)
THEOREM1_LAM = 1.5
THEOREM1_PILOT = 500
MIN_CONDITIONING = 0.05


def gen_beta(p: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` non-zero entries at uniform positions, values uniform on
    ``{+-0.1, ..., +-1.0}``."""
    if not 1 <= k <= p:
        raise DomainError(f"need 1 <= k <= p, got k={k}, p={p}")
    beta = np.zeros(p)
    pos = rng.choice(p, size=k, replace=False)
    beta[pos] = rng.choice(BETA_GRID, size=k) * rng.choice([-1.0, 1.0], size=k)
    return beta


def _simulate(cfg: ExperimentConfig, beta, rng):
    X = gen_design(cfg.n, cfg.p, cfg.rho, rng)
    return X, X @ beta + rng.standard_normal(cfg.n)


def _select(cfg: ExperimentConfig, X, y, rng, knockoffs=None) -> np.ndarray:
    if cfg.selector == "knockoff":
        return knockoff_filter(X, y, q=cfg.knockoff_q, rng=rng, method=cfg.knockoff_method,
                               knockoffs=knockoffs).s
    return stability_select(X, y, pfer=cfg.pfer, cutoff=cfg.cutoff, B=cfg.B, rng=rng).s


def _knockoffs(cfg: ExperimentConfig, X):
    """Knockoffs of a design shared by several selections, or None."""
    return knockoff_construct(X, cfg.knockoff_method) if cfg.selector == "knockoff" else None


def _sigma_hat(X, y, rng) -> float:
    return math.sqrt(estimate_sigma(X, y, "auto", rng=rng))


def _cell_fields(cfg: ExperimentConfig) -> dict:
    return {"selector": cfg.selector, "n": cfg.n, "p": cfg.p, "rho": cfg.rho, "f": cfg.f}


def _meta(cfg: ExperimentConfig, started: float, runs) -> dict:
    runs = runs if isinstance(runs, (list, tuple)) else [runs]
    return {
        "config": cfg.to_dict(),
        "cell": cfg.cell,
        "seed": cfg.seed,
        "elapsed_seconds": round(time.perf_counter() - started, 3),
        "replications": sum(r.n_reps for r in runs),
        "resampled": sum(r.resampled for r in runs),
    }


def _binom_se(p_hat: float, m: int) -> float:
    return math.sqrt(p_hat * (1.0 - p_hat) / m) if m else math.nan


# ---------------------------------------------------------------- power

class _PowerTask:
    def __init__(self, cfg):
        self.cfg = cfg

    def __call__(self, rng, rep):
        cfg = self.cfg
        beta = gen_beta(cfg.p, N_ACTIVE, rng)
        X, y = _simulate(cfg, beta, rng)
        Xk = _knockoffs(cfg, X)
        s_full = _select(cfg, X, y, rng, Xk)
        plan = duplex_split(X, cfg.f)
        s_ds = _select(cfg, X[plan.selection_idx], y[plan.selection_idx], rng)
        uv = randomised_split(y, cfg.f, _sigma_hat(X, y, rng), rng)
        s_r = _select(cfg, X, uv.u, rng, Xk)
        active = np.flatnonzero(beta)
        hits = np.array([np.isin(active, s) for s in (s_full, s_ds, s_r)])
        return np.abs(beta[active]), hits


METHODS3 = ("full", "ds", "r")


def run_power(cfg: ExperimentConfig, workers: int = 1):
    started = time.perf_counter()
    run = run_replications(_PowerTask(cfg), cfg.seed, cfg.cell, range(cfg.n_reps), workers)
    absb = np.concatenate([r[0] for r in run.results])
    hits = np.concatenate([r[1] for r in run.results], axis=1)
    per_rep = np.array([r[1].mean(axis=1) for r in run.results])  # (reps, 3)
    tpr = per_rep.mean(axis=0)
    se = per_rep.std(axis=0, ddof=1) / math.sqrt(len(per_rep)) if len(per_rep) > 1 else [math.nan] * 3

    meta = _meta(cfg, started, run)
    main = ResultTable("power", ["selector", "n", "p", "rho", "f", "n_reps", "resampled",
                                 "tpr_full", "tpr_ds", "tpr_r", "tpr_full_se", "tpr_ds_se",
                                 "tpr_r_se", "ratio_ds", "ratio_r"], meta=meta)
    main.add(**_cell_fields(cfg), n_reps=run.n_reps, resampled=run.resampled,
             tpr_full=float(tpr[0]), tpr_ds=float(tpr[1]), tpr_r=float(tpr[2]),
             tpr_full_se=float(se[0]), tpr_ds_se=float(se[1]), tpr_r_se=float(se[2]),
             ratio_ds=float(tpr[1] / tpr[0]) if tpr[0] > 0 else math.nan,
             ratio_r=float(tpr[2] / tpr[0]) if tpr[0] > 0 else math.nan)

    curve = ResultTable("power_curve", ["selector", "n", "p", "rho", "f", "method", "abs_beta",
                                        "power", "se", "count"], meta=meta)
    bins = np.round(absb, 1)
    for m, name in enumerate(METHODS3):
        for b in BETA_GRID:
            mask = bins == b
            cnt = int(mask.sum())
            pw = float(hits[m, mask].mean()) if cnt else math.nan
            curve.add(**_cell_fields(cfg), method=name, abs_beta=float(b), power=pw,
                      se=_binom_se(pw, cnt), count=cnt)
    return [main, curve]


# ------------------------------------------------------------ stability

class _StabilityTask:
    def __init__(self, cfg):
        self.cfg = cfg

    def __call__(self, rng, rep):
        cfg = self.cfg
        beta = np.zeros(cfg.p)
        beta[:N_ACTIVE] = STABILITY_BETA
        X, y = _simulate(cfg, beta, rng)
        sigma = _sigma_hat(X, y, rng)
        ds = np.zeros(N_ACTIVE)
        r = np.zeros(N_ACTIVE)
        for _ in range(cfg.n_draws):
            plan = simple_split(cfg.n, cfg.f, rng)
            s = _select(cfg, X[plan.selection_idx], y[plan.selection_idx], rng)
            ds += np.isin(np.arange(N_ACTIVE), s)
        Xk = _knockoffs(cfg, X)
        for _ in range(cfg.n_draws):
            uv = randomised_split(y, cfg.f, sigma, rng)
            r += np.isin(np.arange(N_ACTIVE), _select(cfg, X, uv.u, rng, Xk))
        return ds / cfg.n_draws, r / cfg.n_draws


def run_stability(cfg: ExperimentConfig, workers: int = 1):
    started = time.perf_counter()
    run = run_replications(_StabilityTask(cfg), cfg.seed, cfg.cell, range(cfg.n_reps), workers)
    freqs = {"ds": np.array([r[0] for r in run.results]),
             "r": np.array([r[1] for r in run.results])}
    table = ResultTable("stability", ["selector", "n", "p", "rho", "f", "method", "index",
                                      "beta", "mean", "sd", "n_datasets", "n_draws"],
                        meta=_meta(cfg, started, run))
    for name in ("ds", "r"):
        F = freqs[name]
        sd = F.std(axis=0, ddof=1) if len(F) > 1 else np.full(N_ACTIVE, math.nan)
        for i in range(N_ACTIVE):
            table.add(**_cell_fields(cfg), method=name, index=i + 1,
                      beta=float(STABILITY_BETA[i]), mean=float(F[:, i].mean()),
                      sd=float(sd[i]), n_datasets=len(F), n_draws=cfg.n_draws)
    return [table]


# ---------------------------------------------------- coverage helpers

COMBOS = (("ds", "fv"), ("ds", "hd"), ("r", "fv"), ("r", "hd"))


def _record(out, key, absb, covered, lengths):
    out[key].append((np.asarray(absb, float), np.asarray(covered, bool),
                     np.asarray(lengths, float)))


def _coverage_table(name, cfg, results, meta):
    table = ResultTable(name, ["selector", "n", "p", "rho", "f", "split", "method", "abs_beta",
                               "coverage", "coverage_se", "count", "mean_length",
                               "length_se"], meta=meta)
    for split, method in COMBOS:
        parts = [rec for res in results for rec in res["ci"].get((split, method), [])]
        absb = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0)
        cov = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, bool)
        lens = np.concatenate([p[2] for p in parts]) if parts else np.zeros(0)
        for b in COVERAGE_BINS:
            mask = np.isclose(absb, b)
            cnt = int(mask.sum())
            c = float(cov[mask].mean()) if cnt else math.nan
            ml = float(lens[mask].mean()) if cnt else math.nan
            lse = float(lens[mask].std(ddof=1) / math.sqrt(cnt)) if cnt > 1 else math.nan
            table.add(**_cell_fields(cfg), split=split, method=method, abs_beta=b,
                      coverage=c, coverage_se=_binom_se(c, cnt), count=cnt,
                      mean_length=ml, length_se=lse)
    return table


def _fixed_beta(p):
    beta = np.zeros(p)
    beta[:len(COVERAGE_BETA)] = COVERAGE_BETA
    return beta


# ------------------------------------------------- coefficient coverage

class _CoefTask:
    def __init__(self, cfg):
        self.cfg = cfg

    def __call__(self, rng, rep):
        cfg = self.cfg
        beta = _fixed_beta(cfg.p)
        absb = np.abs(beta)
        X, y = _simulate(cfg, beta, rng)
        sigma = _sigma_hat(X, y, rng)
        out = {"ci": defaultdict(list), "rank_deficient": 0}

        plan = duplex_split(X, cfg.f)
        X1, y1 = X[plan.selection_idx], y[plan.selection_idx]
        X2, y2 = X[plan.inference_idx], y[plan.inference_idx]
        s = _select(cfg, X1, y1, rng)
        if len(s):
            # face value: full-data t-intervals that ignore the selection step
            fv = ci_coef_face_value(X, y, s, cfg.alpha)
            _record(out["ci"], ("ds", "fv"), absb[s], fv.covers(beta[s]), fv.length)
            try:
                hd = ci_coef_ds(X2, y2, s, cfg.alpha)
                _record(out["ci"], ("ds", "hd"), absb[s], hd.covers(beta[s]), hd.length)
            except RankDeficient:
                out["rank_deficient"] += 1

        uv = randomised_split(y, cfg.f, sigma, rng)
        s = _select(cfg, X, uv.u, rng)
        if len(s):
            fv = ci_coef_face_value(X, y, s, cfg.alpha)
            _record(out["ci"], ("r", "fv"), absb[s], fv.covers(beta[s]), fv.length)
            hd = ci_coef_randomised(X, uv.v, s, uv.gamma, sigma, cfg.alpha)
            _record(out["ci"], ("r", "hd"), absb[s], hd.covers(beta[s]), hd.length)
        out["ci"] = dict(out["ci"])
        return out


def run_coverage_coef(cfg: ExperimentConfig, workers: int = 1):
    started = time.perf_counter()
    run = run_replications(_CoefTask(cfg), cfg.seed, cfg.cell, range(cfg.n_reps), workers)
    meta = _meta(cfg, started, run)
    meta["rank_deficient_holdout"] = sum(r["rank_deficient"] for r in run.results)
    return [_coverage_table("coverage_coef", cfg, run.results, meta)]


# -------------------------------------------------- projection coverage

class _ProjectionTask:
    def __init__(self, cfg):
        self.cfg = cfg

    def _intervals(self, out, key, absb, X, y, mu, s, sigma, inflation, method, target):
        ci = ci_projection(X, y, s, self.cfg.alpha, sigma, inflation, method, target)
        theta = projection_parameter(X, s, mu).values
        _record(out["ci"], key, absb[s], ci.covers(theta), ci.length)
        if key[1] == "hd":
            out["sizes"][key[0]] = (len(s), float(ci.length.mean()))

    def __call__(self, rng, rep):
        cfg = self.cfg
        beta = _fixed_beta(cfg.p)
        absb = np.abs(beta)
        X, y = _simulate(cfg, beta, rng)
        mu = X @ beta
        sigma = _sigma_hat(X, y, rng)
        gamma = gamma_from_fraction(cfg.f)
        out = {"ci": defaultdict(list), "sizes": {}, "rank_deficient": 0}

        plan = duplex_split(X, cfg.f)
        sel, inf = plan.selection_idx, plan.inference_idx
        s = _select(cfg, X[sel], y[sel], rng)
        if len(s):
            # face value: full-data intervals for beta_s(X) that ignore selection
            self._intervals(out, ("ds", "fv"), absb, X, y, mu, s, sigma, 1.0,
                            "face_value", "projection_full_design")
            try:
                self._intervals(out, ("ds", "hd"), absb, X[inf], y[inf], mu[inf], s, sigma, 1.0,
                                "ds_holdout", "projection_holdout_design")
            except RankDeficient:
                out["rank_deficient"] += 1

        uv = randomised_split(y, cfg.f, sigma, rng)
        s = _select(cfg, X, uv.u, rng)
        if len(s):
            self._intervals(out, ("r", "fv"), absb, X, y, mu, s, sigma, 1.0,
                            "face_value", "projection_full_design")
            self._intervals(out, ("r", "hd"), absb, X, uv.v, mu, s, sigma, 1.0 + gamma ** -2,
                            "randomised", "projection_full_design")
        out["ci"] = dict(out["ci"])
        return out


def run_coverage_projection(cfg: ExperimentConfig, workers: int = 1):
    started = time.perf_counter()
    run = run_replications(_ProjectionTask(cfg), cfg.seed, cfg.cell, range(cfg.n_reps), workers)
    meta = _meta(cfg, started, run)
    meta["rank_deficient_holdout"] = sum(r["rank_deficient"] for r in run.results)
    coverage = _coverage_table("coverage_projection", cfg, run.results, meta)

    lengths = ResultTable("projection_length", ["selector", "n", "p", "rho", "f", "split",
                                                "method", "set_size", "mean_length", "count"],
                          meta=meta)
    for split in ("ds", "r"):
        by_size = defaultdict(list)
        for res in run.results:
            if split in res["sizes"]:
                k, ml = res["sizes"][split]
                by_size[k].append(ml)
        for k in range(1, MAX_SET_SIZE + 1):
            vals = by_size.get(k, [])
            lengths.add(**_cell_fields(cfg), split=split, method="hd", set_size=k,
                        mean_length=float(np.mean(vals)) if vals else None, count=len(vals))
    return [coverage, lengths]


# ---------------------------------------------------- asymptotic pivot

def theorem1_design(cfg: ExperimentConfig, n: int):
    """Fixed design, mean and penalty for sample size ``n``."""
    X = gen_design(n, cfg.p, cfg.rho, make_rng(cfg.seed, cell_key(cfg.cell + "|design"), n))
    c = np.zeros(cfg.p)
    k = min(cfg.p, len(THEOREM1_C))
    c[:k] = THEOREM1_C[:k]
    return X, X @ (c / math.sqrt(n)), THEOREM1_LAM / math.sqrt(n)


class _Theorem1Task:
    def __init__(self, cfg, n):
        self.cfg = cfg
        self.n = n
        self.X, self.mu, self.lam = theorem1_design(cfg, n)

    def __call__(self, rng, rep):
        cfg, X, n = self.cfg, self.X, self.n
        if cfg.errors == "exponential":
            eps = rng.standard_exponential(n) - 1.0
        else:
            eps = rng.standard_normal(n)
        y = self.mu + eps
        sigma = 1.0 if cfg.known_sigma else math.sqrt(estimate_sigma(X, y, "classical"))
        uv = randomised_split(y, cfg.f, sigma, rng)
        if cfg.fixed_s is not None:
            s = np.asarray(cfg.fixed_s, dtype=np.intp)
        else:
            s = lasso_support(X, uv.u, self.lam).s
        if len(s) == 0:
            return (), math.nan
        eta = projection_contrast(X, s, 0)
        scale = math.sqrt(1.0 + uv.gamma ** -2) * sigma * eta.norm
        return tuple(int(i) for i in s), float(eta.eta @ (uv.v - self.mu)) / scale


def _theorem1_cell(cfg, n, workers):
    task = _Theorem1Task(cfg, n)
    cell = f"{cfg.cell}|t1n={n}"
    pilot_n = min(THEOREM1_PILOT, max(cfg.n_hits, 50))
    runs = [run_replications(task, cfg.seed, cell, range(pilot_n), workers)]
    results = list(runs[0].results)
    if cfg.fixed_s is not None:
        modal = tuple(sorted(int(i) for i in cfg.fixed_s))
    else:
        counts = Counter(s for s, _ in results if s)
        if not counts:
            raise InsufficientConditioning(f"n={n}: the lasso selected nothing in the pilot")
        top = max(counts.values())
        modal = min(s for s, c in counts.items() if c == top)
    freq = sum(1 for s, _ in results if s == modal) / len(results)
    if freq < MIN_CONDITIONING:
        raise InsufficientConditioning(
            f"n={n}: modal set {modal} has frequency {freq:.3f} < {MIN_CONDITIONING}")
    limit = int(math.ceil(cfg.n_hits / MIN_CONDITIONING))
    while sum(1 for s, _ in results if s == modal) < cfg.n_hits and len(results) < limit:
        missing = cfg.n_hits - sum(1 for s, _ in results if s == modal)
        batch = min(limit - len(results), int(math.ceil(1.1 * missing / freq)) + 10)
        run = run_replications(task, cfg.seed, cell, range(len(results), len(results) + batch),
                               workers)
        runs.append(run)
        results.extend(run.results)
    pivots = np.array([z for s, z in results if s == modal])[:cfg.n_hits]
    used = int(np.flatnonzero([s == modal for s, _ in results])[len(pivots) - 1]) + 1
    return modal, freq, used, pivots, runs


def run_theorem1(cfg: ExperimentConfig, workers: int = 1):
    started = time.perf_counter()
    q = stats.norm.ppf(1.0 - cfg.alpha / 2.0)
    rows, runs = [], []
    for n in cfg.n_grid:
        modal, freq, used, z, cell_runs = _theorem1_cell(cfg, n, workers)
        runs.extend(cell_runs)
        ks = stats.kstest(z, "norm")
        cov = float(np.mean(np.abs(z) <= q))
        rows.append(dict(n=n, p=cfg.p, f=cfg.f, errors=cfg.errors,
                         modal_set=" ".join(str(i) for i in modal), modal_freq=freq,
                         reps_used=used, hits=len(z), ks=float(ks.statistic),
                         ks_pvalue=float(ks.pvalue), coverage=cov,
                         coverage_se=_binom_se(cov, len(z)), pivot_mean=float(z.mean()),
                         pivot_sd=float(z.std(ddof=1))))
    table = ResultTable("theorem1", list(rows[0]), meta=_meta(cfg, started, runs))
    for r in rows:
        table.add(**r)
    return [table]


# ---------------------------------------------------- information bound

def run_prop1(cfg: ExperimentConfig, workers: int = 1):
    started = time.perf_counter()
    X = gen_design(cfg.n, cfg.p, cfg.rho, make_rng(cfg.seed, cell_key(cfg.cell + "|design")))
    v = np.ones(cfg.p) / math.sqrt(cfg.p)
    table = ResultTable("prop1", ["n", "p", "f", "strategy", "criterion", "lhs_sel", "rhs_sel",
                                  "se_sel", "jensen_sel", "lhs_inf", "rhs_inf", "se_inf",
                                  "jensen_inf", "degenerate", "exhaustive", "n_splits",
                                  "strict"])
    for strategy in ("simple", "stratified", "coin_flip"):
        for kind in CRITERIA:
            crit = PhiCriterion(kind, v if kind == "quadratic_form" else None)
            rng = make_rng(cfg.seed, cell_key(f"{cfg.cell}|{strategy}|{kind}"))
            res = verify_proposition1(X, Strategy(strategy), cfg.f, crit, n_mc=cfg.n_reps, rng=rng)
            table.add(n=cfg.n, p=cfg.p, f=cfg.f, strategy=strategy, criterion=kind,
                      lhs_sel=res.lhs_sel, rhs_sel=res.rhs_sel, se_sel=res.se_sel,
                      jensen_sel=res.jensen_sel, lhs_inf=res.lhs_inf, rhs_inf=res.rhs_inf,
                      se_inf=res.se_inf, jensen_inf=res.jensen_inf, degenerate=res.degenerate,
                      exhaustive=res.exhaustive, n_splits=res.n_splits, strict=res.strict())
    table.meta = _meta(cfg, started, [])
    return [table]


RUNNERS = {
    "power": run_power,
    "stability": run_stability,
    "coverage_coef": run_coverage_coef,
    "coverage_projection": run_coverage_projection,
    "theorem1": run_theorem1,
    "prop1": run_prop1,
}


def run_experiment(cfg: ExperimentConfig, workers: int = 1):
    return RUNNERS[cfg.experiment](cfg, workers)
