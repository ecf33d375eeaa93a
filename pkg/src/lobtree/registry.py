"""Experiment catalog: names, anchors, defaults and runners."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import brwstats as B
from . import verify as V
from .lobsim import ModelParams
from .measures import JumpDistribution, OrderBook

REFERENCE_PMF = "-1:0.3,1:0.7"
DEFAULT_SEED = 12345


@dataclass
class ExperimentConfig:
    experiment: str
    lam: float = 1.0
    j_pmf: str = REFERENCE_PMF
    n: list | None = None
    t: float | None = None
    horizon: float | None = None
    replicas: int | None = None
    seed: int = DEFAULT_SEED
    u_list: list | None = None
    y_list: list | None = None
    eps_list: list | None = None
    node_cap: int | None = None
    out: str | None = None
    fmt: str = "csv"
    threads: int = 1
    thresholds: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.experiment not in REGISTRY:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        JumpDistribution.parse(self.j_pmf)
        if self.replicas is not None and self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.lam <= 0:
            raise ConfigError("lambda must be positive")
        if self.fmt not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        unknown = set(self.thresholds) - set(REGISTRY[self.experiment].thresholds)
        if unknown:
            raise ConfigError(f"unknown thresholds for {self.experiment}: {sorted(unknown)}")

    def get(self, name: str):
        """Explicit setting if given, else the experiment default."""
        v = getattr(self, name)
        return REGISTRY[self.experiment].defaults.get(name) if v is None else v

    def threshold(self, name: str) -> float:
        return float(self.thresholds.get(name, REGISTRY[self.experiment].thresholds[name]))

    @property
    def jumps(self) -> JumpDistribution:
        return JumpDistribution.parse(self.j_pmf)

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.jumps, self.lam)


class ConfigError(ValueError):
    pass


@dataclass
class Verdict:
    """One criterion line: ``experiment,statistic,value,threshold,pass``."""

    statistic: str
    value: float
    threshold: str
    passed: bool
    inconclusive: bool = False
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Experiment:
    name: str
    anchor: str
    summary: str
    defaults: dict
    thresholds: dict
    runner: Callable


def _fmt(x) -> str:
    return f"{x:.6g}" if isinstance(x, float) else str(x)


def _from_stat(r: B.StatReport) -> Verdict:
    if r.target is not None:
        thr = f"{_fmt(r.target)}+/-{_fmt(r.tol)}"
    else:
        thr = "bound"
    return Verdict(f"{r.name}[{r.param}]", r.estimate, thr, bool(r.passed), detail=r.to_dict())


def _from_test(r: V.TestResult, stat: str | None = None, op: str = "<=") -> Verdict:
    detail = {k: v for k, v in r.to_dict().items() if not isinstance(v, np.ndarray)}
    detail["extra"] = {k: v for k, v in r.extra.items() if not isinstance(v, np.ndarray)}
    return Verdict(stat or r.name, r.statistic, f"{op}{_fmt(r.threshold)}", bool(r.passed),
                   r.inconclusive, detail)


def _cap(cfg):
    return cfg.get("node_cap")


def run_tau_identity(cfg, pool):
    return [_from_stat(B.tau_identity(cfg.jumps, cfg.get("replicas"), cfg.seed, _cap(cfg), pool))]


def run_mean_killed(cfg, pool):
    return [_from_stat(B.mean_killed(cfg.jumps, cfg.get("replicas"), cfg.seed, node_cap=_cap(cfg), pool=pool))]


def run_height_tail(cfg, pool):
    return [_from_stat(r) for r in B.height_tail(cfg.get("u_list"), cfg.get("replicas"), cfg.seed, pool)]


def run_size_tail(cfg, pool):
    return [_from_stat(r) for r in B.size_tail(cfg.get("u_list"), cfg.get("replicas"), cfg.seed,
                                               cfg.threshold("rel_tol"), pool)]


def run_tail_h_barrier(cfg, pool):
    return [_from_stat(r) for r in B.tail_h_barrier(cfg.jumps, cfg.get("u_list"), cfg.get("replicas"),
                                                    cfg.seed, cfg.threshold("tol"), _cap(cfg), pool)]


def run_tail_psi_star(cfg, pool):
    return [_from_stat(r) for r in B.tail_psi_star(cfg.jumps, cfg.get("u_list"), cfg.get("replicas"),
                                                   cfg.seed, cfg.threshold("tol"), _cap(cfg), pool)]


def run_label_count(cfg, pool):
    return [_from_stat(r) for r in B.label_count(cfg.jumps, cfg.get("y_list"), cfg.get("replicas"),
                                                 cfg.seed, cfg.threshold("rel_tol"),
                                                 node_cap=_cap(cfg), pool=pool)]


def run_min_walk_positive(cfg, pool):
    return [_from_stat(B.min_walk_positive(cfg.jumps, int(cfg.get("horizon")), cfg.get("replicas"),
                                           cfg.seed, pool))]


def run_contour_visits(cfg, pool):
    out = []
    for u in cfg.get("u_list"):
        u = int(u)
        reps = B.conditioned_generation(u, [max(u // 2, 1)], "height", cfg.get("replicas"), cfg.seed,
                                        pool=pool)
        out += [_from_stat(r) for r in reps if r.name == "contour_visits"]
    return out


def run_conditioned_generation(cfg, pool):
    out = []
    for cond in ("size", "height"):
        for u in cfg.get("u_list"):
            reps = B.conditioned_generation(int(u), cfg.get("y_list"), cond, cfg.get("replicas"),
                                            cfg.seed, cfg.threshold("slack"), pool)
            out += [_from_stat(r) for r in reps]
    return out


def run_variance_growth(cfg, pool):
    return [_from_stat(r) for r in B.variance_growth(cfg.get("n"), cfg.get("replicas"), cfg.seed, pool)]


def run_z_second_moment(cfg, pool):
    return [_from_stat(r) for r in B.z_second_moment(cfg.get("n"), cfg.get("replicas"), cfg.seed, pool)]


def run_kcal_conditioned(cfg, pool):
    return [_from_stat(r) for r in B.kcal_conditioned(cfg.jumps, cfg.get("u_list"), cfg.get("replicas"),
                                                      cfg.seed, node_cap=_cap(cfg), pool=pool)]


def run_node_count_at_level(cfg, pool):
    out = []
    for cond in (None, "tau", "psi_star"):
        reps = B.node_count_at_level(cfg.jumps, cfg.get("y_list"), cond, int(cfg.get("u_list")[0]),
                                     cfg.get("eps_list"), cfg.get("replicas"), cfg.seed,
                                     node_cap=_cap(cfg), slack=cfg.threshold("slack"), pool=pool)
        out += [_from_stat(r) for r in reps]
    return out


def _marginal(which):
    def run(cfg, pool):
        ns = [int(n) for n in cfg.get("n")]
        thr = cfg.threshold("ks")
        if len(ns) == 1:
            fn = V.price_marginal_test if which == "price" else V.mass_marginal_test
            r = fn(cfg.params, ns[0], cfg.get("t"), cfg.get("replicas"), cfg.seed, thr, pool=pool)
            out = [_from_test(r, f"ks_{which}[n={ns[0]}]")]
        else:
            r = V.marginal_sweep(cfg.params, which, ns, cfg.get("t"), cfg.get("replicas"), cfg.seed, thr,
                                 pool=pool)
            out = [Verdict(f"ks_{which}[n={r.extra['n_check']}]", r.statistic, f"<={_fmt(thr)}",
                           r.statistic <= thr, detail=r.extra),
                   Verdict(f"ks_{which}_decreasing[n={ns[0]}..{ns[-1]}]",
                           r.extra["ks"][ns[-1]] - r.extra["ks"][ns[0]], "<0",
                           bool(r.extra["decreasing"]))]
            if which == "mass":
                out.append(Verdict("mass_mean", r.extra["mean"],
                                   f"{_fmt(V.mass_reference(cfg.params, cfg.get('t')).mean())}+/-5%",
                                   bool(r.extra["mean_ok"])))
            return out
        if which == "mass" and cfg.get("t") > 0:
            out.append(Verdict("mass_mean", r.extra["mean"], f"{_fmt(r.extra['mean_target'])}+/-5%",
                               bool(r.extra["mean_ok"])))
        return out
    return run


def run_ratio(cfg, pool):
    r = V.ratio_test(cfg.params, cfg.get("n"), cfg.get("t"), cfg.get("replicas"), cfg.seed,
                     cfg.threshold("cap"), pool)
    ns = sorted(r.extra["deviation"])
    return [Verdict(f"ratio_halving[n={ns[0]}->{ns[-1]}]", r.extra["deviation"][ns[-1]],
                    f"<{_fmt(0.5 * r.extra['deviation'][ns[0]])}", bool(r.extra["halved"]), detail=r.extra),
            Verdict(f"ratio_cap[n={ns[-1]}]", r.statistic, f"<{_fmt(r.threshold)}", r.statistic < r.threshold)]


def run_density_profile(cfg, pool):
    tol = cfg.threshold("tol")
    r = V.density_profile_test(cfg.params, int(cfg.get("n")[0]), cfg.get("t"), cfg.threshold("p0"),
                               cfg.get("y_list"), cfg.get("replicas"), cfg.seed, 1 - tol, 1 + tol,
                               pool=pool)
    if r.inconclusive:
        return [_from_test(r, op="|ratio-1|<=")]
    return [Verdict(f"density_ratio[y={_fmt(y)}]", v, f"{_fmt(1 - tol)}..{_fmt(1 + tol)}",
                    1 - tol <= v <= 1 + tol) for y, v in r.extra["ratios"].items()]


def run_local_time(cfg, pool):
    r = V.local_time_tests(cfg.params, int(cfg.get("n")[0]), cfg.get("t"), cfg.get("eps_list"),
                           cfg.get("replicas"), cfg.seed, normalization=cfg.threshold("normalization"),
                           pool=pool)
    e, c = r.extra, r.extra["clauses"]
    return [
        Verdict("eps_occupation_gap_decreasing", e["eps_gaps"][-1], "decreasing", c["eps_monotone"],
                detail={"eps": e["eps"], "gaps": e["eps_gaps"]}),
        Verdict("l_pi_mean", e["l_pi_mean"], f"{_fmt(e['l_pi_target'])}+/-10%", c["l_pi_mean"],
                detail={"se": e["l_pi_se"], "normalized_target": e["l_pi_target_normalized"]}),
        Verdict("l_m_over_l_pi", e["l_ratio"], f"{_fmt(cfg.jumps.mean)}+/-0.05", c["l_ratio"]),
        Verdict("l_pi_growth_4t", e["growth_4t"], "2+/-15%", c["sqrt_scaling"]),
    ]


def run_idle_fraction(cfg, pool):
    r = V.idle_fraction_test(cfg.params, cfg.get("horizon"), cfg.get("replicas"), cfg.seed,
                             cfg.threshold("tol"), pool)
    return [Verdict("idle_fraction", r.statistic, f"{_fmt(cfg.jumps.mean)}+/-{_fmt(r.threshold)}",
                    r.passed, detail=r.extra)]


def run_coupling(cfg, pool):
    out = []
    level = cfg.threshold("level")
    for a in cfg.get("u_list"):
        r = V.coupling_equivalence_test(cfg.params, int(a), cfg.get("replicas"), cfg.seed,
                                        int(cfg.get("node_cap")), level, pool)
        for k, p in r.extra["p_values"].items():
            out.append(Verdict(f"ks_p_{k}[a={int(a)}]", p, f">={_fmt(level)}", p >= level,
                               detail={"ks": r.extra["ks"][k]}))
    return out


def run_excursion_iid(cfg, pool):
    out = []
    level = cfg.threshold("level")
    for a in cfg.get("u_list"):
        r = V.excursion_iid_test(cfg.params, int(a), int(cfg.get("n")[0]), cfg.get("replicas"), cfg.seed,
                                 level=level, pool=pool)
        if r.inconclusive:
            out.append(_from_test(r, f"excursion_iid[a={int(a)}]"))
            continue
        e = r.extra
        out.append(Verdict(f"lag1_spearman[a={int(a)}]", e["spearman"], f"|rho|<={_fmt(e['band'])}",
                           abs(e["spearman"]) <= e["band"]))
        out.append(Verdict(f"split_ks_p_height[a={int(a)}]", e["ks_p"], f">={_fmt(level)}", e["ks_p"] >= level))
    return out


def run_forest_vs_ctmc(cfg, pool):
    level = cfg.threshold("level")
    r = V.forest_vs_ctmc_test(cfg.params, OrderBook.parse("1:2"), cfg.get("replicas"), cfg.seed,
                              int(cfg.get("node_cap")), level)
    return [Verdict("ks_p_steps", r.extra["p_steps"], f">={_fmt(level)}", r.extra["p_steps"] >= level),
            Verdict("ks_p_max_price", r.extra["p_max_price"], f">={_fmt(level)}",
                    r.extra["p_max_price"] >= level)]


def _exp(name, anchor, summary, runner, defaults, thresholds=None):
    return Experiment(name, anchor, summary, defaults, thresholds or {}, runner)


_CAP = 10_000_000

REGISTRY: dict[str, Experiment] = {e.name: e for e in [
    _exp("tau_identity", "Eq. (formula-tau)", "exploration steps == 2|B|-|K|-1 on every tree",
         run_tau_identity, {"replicas": 1_000_000, "node_cap": 10_000}),
    _exp("mean_killed", "Eq. (mean-killed)", "E|K(T_1)| vs 1 - E(J)/P(J=1), 3 SE",
         run_mean_killed, {"replicas": 1_000_000, "node_cap": _CAP}),
    _exp("height_tail", "Eq. (tail-behavior-size+height)", "P(h(T_1) >= u) vs 1/u, 3 SE",
         run_height_tail, {"replicas": 1_000_000, "u_list": [5, 10, 20]}),
    _exp("size_tail", "Eq. (tail-behavior-size+height)", "sqrt(u) P(|T_1| >= u) vs 1/sqrt(pi)",
         run_size_tail, {"replicas": 1_000_000, "u_list": [100, 400]}, {"rel_tol": 0.10}),
    _exp("tail_h_barrier", "Lemma A.2", "u P(h(B(T_1)) >= u) vs E(J)/P(J=1)",
         run_tail_h_barrier, {"replicas": 2_000_000, "u_list": [50], "node_cap": _CAP}, {"tol": 0.08}),
    _exp("tail_psi_star", "Lemma A.3", "u P(psi*(B(T_1)) >= u) vs E(J)^2/P(J=1)",
         run_tail_psi_star, {"replicas": 2_000_000, "u_list": [50], "node_cap": _CAP}, {"tol": 0.05}),
    _exp("label_count", "Eq. (m)", "(1/y) E #{v in B(T_1): label <= y} vs 1/P(J=1)",
         run_label_count, {"replicas": 1_000_000, "y_list": [100], "node_cap": _CAP}, {"rel_tol": 0.10}),
    _exp("min_walk_positive", "Lemma A.1", "P(walk minimum >= 0) vs E(J)/P(J=1); horizon = cutoff",
         run_min_walk_positive, {"replicas": 1_000_000, "horizon": 1000}),
    _exp("contour_visits", "Eq. (GW)", "E(visits of m | contour hits u), m = u/2",
         run_contour_visits, {"replicas": 1_000_000, "u_list": [2, 4]}),
    _exp("conditioned_generation", "Eq. (GW)", "E(Z_m | |T_1| > u) and E(Z_m | h >= u) <= C m; y_list = m",
         run_conditioned_generation, {"replicas": 200_000, "u_list": [50], "y_list": [1, 2, 5, 10, 20]},
         {"slack": 1.0}),
    _exp("variance_growth", "Appendix A.2", "Var(Z_1+...+Z_n) vs exact recursion, 3 SE",
         run_variance_growth, {"replicas": 1_000_000, "n": [1, 2, 5]}),
    _exp("z_second_moment", "Appendix A.2", "E[(Z_m - 1)^2] vs 2m, 3 SE",
         run_z_second_moment, {"replicas": 1_000_000, "n": [1, 2, 5]}),
    _exp("kcal_conditioned", "Eq. (kcal)", "E(|K(T_1)| | psi*(B(T_1)) > u) saturates in u",
         run_kcal_conditioned, {"replicas": 200_000, "u_list": [0, 10, 20, 40], "node_cap": _CAP}),
    _exp("node_count_at_level", "Eq. (estimate-g-d-2)", "kappa P(N_p >= kappa) / p bounded; y_list = p, eps_list = kappa",
         run_node_count_at_level, {"replicas": 200_000, "u_list": [20], "y_list": [2, 4, 8],
                                   "eps_list": [1, 4, 16], "node_cap": _CAP}, {"slack": 1.0}),
    _exp("price_marginal", "Theorem 2.1", "KS of scaled price vs |N(0, 2 lambda E(J)^2 t)|",
         _marginal("price"), {"replicas": 2000, "n": [50, 100, 200], "t": 1.0}, {"ks": 0.08}),
    _exp("mass_marginal", "Eq. (joint-law)", "KS of scaled mass vs |N(0, 2 lambda t)| and its mean",
         _marginal("mass"), {"replicas": 2000, "n": [50, 100, 200], "t": 1.0}, {"ks": 0.08}),
    _exp("ratio", "Lemma 5.10", "E|M - price/E(J)| halves over the n range, below a cap",
         run_ratio, {"replicas": 2000, "n": [25, 400], "t": 1.0}, {"cap": 0.1}),
    _exp("density_profile", "Eq. (limit)", "E(J) X_t([0,y])/y given price > p0",
         run_density_profile, {"replicas": 2000, "n": [200], "t": 1.0, "y_list": [0.1, 0.25, 0.4]},
         {"tol": 0.15, "p0": 0.5}),
    _exp("local_time", "Lemma 5.9", "local times at 0 of the rescaled price and mass",
         run_local_time, {"replicas": 2000, "n": [100], "t": 1.0, "eps_list": [0.4, 0.2, 0.1]},
         {"normalization": 1.0}),
    _exp("idle_fraction", "Eq. (G/M/1)", "time with mass 0 / time with price 0 vs E(J)",
         run_idle_fraction, {"replicas": 200, "horizon": 1e6}, {"tol": 0.02}),
    _exp("coupling_equivalence", "Theorem 3.1", "CTMC excursions above a vs explorations of T_{a+1}; u_list = a",
         run_coupling, {"replicas": 10_000, "u_list": [0], "node_cap": 100_000}, {"level": 0.01}),
    _exp("excursion_iid", "Lemma 2.2", "successive excursions above a are i.i.d.; n = excursions per path",
         run_excursion_iid, {"replicas": 200, "n": [100], "u_list": [0, 3]}, {"level": 0.01}),
    _exp("forest_vs_ctmc", "Lemma 5.8", "events until empty from 1:2, CTMC vs forest exploration",
         run_forest_vs_ctmc, {"replicas": 5000, "node_cap": 20_000}, {"level": 0.01}),
]}


def list_experiments() -> list[dict]:
    return [{"name": e.name, "anchor": e.anchor, "summary": e.summary, "defaults": e.defaults,
             "thresholds": e.thresholds} for e in REGISTRY.values()]


def run_experiment(cfg: ExperimentConfig, pool=None) -> list[Verdict]:
    cfg.validate()
    return REGISTRY[cfg.experiment].runner(cfg, pool)
