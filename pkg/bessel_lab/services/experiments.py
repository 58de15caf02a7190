"""
Registered experiments

Each experiment simulates (or evaluates) what it needs, reduces the paths in
the workers to per-path arrays, and turns them into StatReports. Experiments
on long grids stream the batches through their check instead.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from bessel_lab.config.constants import ACCEPTANCE_THRESHOLDS, EXPERIMENT_GRIDS
from bessel_lab.core import laws, martlab, randomtimes, specfun
from bessel_lab.core.pathsim import (
    PathGrid,
    estimate_level_local_time,
    generalized_occupation,
    occupation_refinement,
    rescaled_occupation,
)
from bessel_lab.core.stats import (
    correlation_report,
    histogram_table,
    identity_report,
    ks_report,
    moment_report,
    refinement_report,
    relative_moment_report,
    two_sample_report,
)
from bessel_lab.models.schemas import (
    BesselParams,
    Construction,
    ExperimentConfig,
    SimConfig,
    StatReport,
    TestKind,
)
from bessel_lab.services.simulation_service import SimulationService
from bessel_lab.utils.quadrature import quad_checked
from bessel_lab.utils.validators import UsageError

logger = logging.getLogger(__name__)


@dataclass
class ExperimentOutcome:
    reports: List[StatReport]
    histogram: Optional[pd.DataFrame] = None


@dataclass(frozen=True)
class Experiment:
    experiment_id: str
    title: str
    runner: Callable[[ExperimentConfig, SimulationService], ExperimentOutcome]
    anchor: str = ""
    defaults: Dict[str, object] = field(default_factory=dict)


EXPERIMENTS: Dict[str, Experiment] = {}


def register(experiment_id: str, title: str, anchor: str = "", **defaults):
    """
    Adds a runner to the registry

    anchor names the result the experiment checks; defaults override
    ExperimentConfig fields not set explicitly.
    """
    def decorator(runner):
        EXPERIMENTS[experiment_id] = Experiment(experiment_id, title, runner, anchor, dict(defaults))
        return runner
    return decorator


def get_experiment(experiment_id: str) -> Experiment:
    if experiment_id not in EXPERIMENTS:
        raise UsageError(f"Unknown experiment id '{experiment_id}'. Options: {', '.join(sorted(EXPERIMENTS))}")
    return EXPERIMENTS[experiment_id]


def sim_config(cfg: ExperimentConfig) -> SimConfig:
    return SimConfig(
        n_steps=cfg.n_steps,
        horizon=cfg.horizon,
        seed=cfg.seed,
        n_paths=cfg.n_paths,
        epsilon=cfg.epsilon,
        batch_size=cfg.batch_size,
        zero_threshold=cfg.zero_threshold,
        bridge_zero_detection=cfg.bridge_zero_detection,
    )


def exp1_cdf(x):
    return -np.expm1(-np.maximum(x, 0.0))


# Reducers: module level so they pickle into worker processes

def reduce_terminal(path: PathGrid) -> Dict[str, np.ndarray]:
    return {
        "g": randomtimes.last_zero_before(path),
        "r": path.r[:, -1].copy(),
        "l": path.l[:, -1].copy(),
    }


def reduce_meander(path: PathGrid) -> Dict[str, np.ndarray]:
    return {"g": randomtimes.last_zero_before(path), "m": randomtimes.meander_terminal(path)}


def reduce_compensator(path: PathGrid) -> Dict[str, np.ndarray]:
    return {"a": randomtimes.compensator_terminal(path)}


def reduce_hitting_local_time(path: PathGrid, levels: tuple) -> Dict[str, np.ndarray]:
    out = {}
    for a in levels:
        hit = randomtimes.first_hitting(path, a)
        out[f"l_{a:g}"] = randomtimes.value_at(path, path.l, hit)
    return out


def reduce_equilibrium(path: PathGrid, times: tuple) -> Dict[str, np.ndarray]:
    running = randomtimes.running_last_zero(path)
    out = {}
    for t in times:
        k = int(round(t / path.dt))
        out[f"age_{t:g}"] = np.power(path.times[k] - running[:, k], path.params.mu)
    return out


def reduce_pseudo_stopping(path: PathGrid) -> Dict[str, np.ndarray]:
    k = randomtimes.pseudo_stopping_index(path)
    rows = np.arange(path.n_paths)
    return {
        "rho": path.times[k],
        "value": np.power(path.r[rows, k], 2.0 * path.params.mu) - path.l[rows, k],
    }


def reduce_excursions(path: PathGrid, lengths: tuple) -> Dict[str, np.ndarray]:
    excursions = randomtimes.extract_excursions(path)
    out = {"l": path.l[:, -1].copy()}
    for x in lengths:
        out[f"count_{x:g}"] = np.array([np.count_nonzero(e >= x) for e in excursions], dtype=float)
    return out


def reduce_scaling(path: PathGrid, t_small: float) -> Dict[str, np.ndarray]:
    k = int(round(t_small / path.dt))
    return {"l_small": path.l[:, k].copy(), "l_one": path.l[:, -1].copy()}


def indicator_unit(x):
    return (x <= 1.0).astype(float)


def reduce_occupation(path: PathGrid, n: float) -> Dict[str, np.ndarray]:
    return {"occ": rescaled_occupation(path, indicator_unit, n), "l": path.l[:, -1].copy()}


def reduce_refinement(path: PathGrid, epsilon: float) -> Dict[str, np.ndarray]:
    return occupation_refinement(path, epsilon)


def decaying_weight(t):
    return np.exp(-t)


def reduce_level_local_time(path: PathGrid, levels: tuple, epsilon: float) -> Dict[str, np.ndarray]:
    out = {}
    for a in levels:
        out[f"la_{a:g}"] = estimate_level_local_time(path, a, epsilon)[:, -1]
        out[f"lhs_{a:g}"], out[f"rhs_{a:g}"] = generalized_occupation(path, a, epsilon, decaying_weight)
    return out


def reduce_z_tower(path: PathGrid, times: tuple) -> Dict[str, np.ndarray]:
    out = {"g": randomtimes.last_zero_before(path)}
    for t in times:
        out[f"r_{t:g}"] = path.r[:, int(round(t / path.dt))].copy()
    return out


def reduce_constancy(path: PathGrid, times: tuple, theta: float) -> Dict[str, np.ndarray]:
    params = path.params
    exp_spec = martlab.exponential_spec(theta)
    balayage = martlab.balayage_martingale(path, exp_spec)
    azema = martlab.azema_projection(path, martlab.identity_spec())
    x0 = laws.lt_mean(params, path.horizon)
    out = {}
    for t in times:
        k = int(round(t / path.dt))
        out[f"balayage_{t:g}"] = balayage[:, k] - balayage[:, 0]
        out[f"azema_{t:g}"] = azema[:, k]
        if t < path.horizon:
            x = laws.martingale_X_closed_form(params, path.r[:, k], path.l[:, k], path.times[k], path.horizon)
            out[f"x_{t:g}"] = np.asarray(x) - x0
    return out


def reduce_mhat_state(path: PathGrid, t: float) -> Dict[str, np.ndarray]:
    k = int(round(t / path.dt))
    return {"r": path.r[:, k].copy(), "g": randomtimes.running_last_zero(path)[:, k]}


def constant_barrier(level: float, x: float) -> float:
    return level


def staircase_barrier(x: float) -> float:
    return 1.0 if x < 0.5 else 2.0


def square(x):
    return np.asarray(x, dtype=float) ** 2


# Experiments

@register("beta-law", "Last zero before 1 follows Beta(mu, 1 - mu)", anchor="generalized arcsine law of the last zero")
def run_beta_law(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    params = cfg.params
    data = sim.run(params, sim_config(cfg), reduce_terminal)
    cdf = partial(laws.gmu_cdf, params)
    report = ks_report(
        data["g"], cdf, ACCEPTANCE_THRESHOLDS["ks_beta_law"], cfg.experiment_id, cfg.mu, cfg.seed,
        label="g_mu(1) ~ Beta(mu, 1-mu)", target=params.mu,
    )
    histogram = histogram_table(data["g"], cdf, edges=np.linspace(0.0, 1.0, 51))
    return ExperimentOutcome([report], histogram)


@register("local-time-mean", "E[L_1] = 2^mu / Gamma(1 - mu)", anchor="mean local time at zero")
def run_local_time_mean(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    params = cfg.params
    data = sim.run(params, sim_config(cfg), reduce_terminal)
    report = moment_report(data["l"], laws.lt_mean(params, cfg.horizon), cfg.experiment_id, cfg.mu, cfg.seed, label="E[L_T]")
    return ExperimentOutcome([report])


@register("compensator-exp1", "A_1 = c_mu int dL (1-u)^{-mu} is Exp(1)", anchor="exponential compensator of the last zero")
def run_compensator(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    data = sim.run(cfg.params, sim_config(cfg), reduce_compensator)
    report = ks_report(
        data["a"], exp1_cdf, ACCEPTANCE_THRESHOLDS["ks_default"], cfg.experiment_id, cfg.mu, cfg.seed,
        label="A_1 ~ Exp(1)", target=1.0,
    )
    histogram = histogram_table(data["a"], exp1_cdf, edges=np.linspace(0.0, 5.0, 51))
    return ExperimentOutcome([report], histogram)


@register(
    "hitting-local-time", "L at the first hitting of a is Exp with mean a^{2mu}", anchor="local time at first hitting",
    horizon=4.0, n_steps=40_000,
)
def run_hitting_local_time(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    levels = tuple(EXPERIMENT_GRIDS["hitting_levels"])
    data = sim.run(cfg.params, sim_config(cfg), partial(reduce_hitting_local_time, levels=levels))
    reports = []
    for a in levels:
        scaled = data[f"l_{a:g}"] / a ** (2.0 * cfg.mu)
        reports.append(ks_report(
            scaled, exp1_cdf, ACCEPTANCE_THRESHOLDS["ks_default"], cfg.experiment_id, cfg.mu, cfg.seed,
            label=f"L(T_{a:g}) / a^(2mu) ~ Exp(1)", target=1.0,
        ))
    return ExperimentOutcome(reports)


@register("meander-rayleigh", "Terminal meander is Rayleigh and independent of g", anchor="Rayleigh meander")
def run_meander(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    data = sim.run(cfg.params, sim_config(cfg), reduce_meander)
    _, cdf = laws.meander_law()
    reports = [
        ks_report(
            data["m"], cdf, ACCEPTANCE_THRESHOLDS["ks_meander"], cfg.experiment_id, cfg.mu, cfg.seed,
            label="meander ~ Rayleigh", target=math.sqrt(math.pi / 2.0),
        ),
        correlation_report(
            data["m"], data["g"], ACCEPTANCE_THRESHOLDS["correlation_abs"], cfg.experiment_id, cfg.mu,
            cfg.seed, label="corr(meander, g)",
        ),
    ]
    histogram = histogram_table(data["m"], cdf, edges=np.linspace(0.0, 4.0, 41))
    return ExperimentOutcome(reports, histogram)


@register(
    "hitting-barrier", "P(R crosses phi(L) before tau_u) = 1 - exp(-int phi^{-2mu})", anchor="barrier crossing before tau_u",
    horizon=40.0, n_steps=80_000, batch_size=25,
)
def run_hitting_barrier(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    params = cfg.params
    u = 1.0
    barriers = (
        ("constant", partial(constant_barrier, 1.0), None),
        ("staircase", staircase_barrier, [0.5]),
    )
    base = sim_config(cfg)
    half = max(1, cfg.n_paths // 2)
    reports = []
    # Each barrier gets its own half of the paths; seeds step by 2 so the
    # bridge streams (seed + 1) never coincide with a path stream
    for i, (name, phi, points) in enumerate(barriers):
        seed = cfg.seed + 2 * i
        paths = sim.iter_paths(params, base.model_copy(update={"n_paths": half, "seed": seed}))
        reports.append(martlab.barrier_crossing_check(
            paths, phi, u, points, seed=seed, experiment_id=cfg.experiment_id, label=f"{name} barrier, u={u:g}",
        ))
    return ExperimentOutcome(reports)


@register("equilibrium-martingale", "E[(t - g(t))^mu] = t^mu sin(pi mu) / (pi mu)", anchor="equilibrium submartingale of the age")
def run_equilibrium(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    times = tuple(EXPERIMENT_GRIDS["equilibrium_times"])
    data = sim.run(cfg.params, sim_config(cfg), partial(reduce_equilibrium, times=times))
    reports = []
    for t in times:
        target = t ** cfg.mu * math.sin(math.pi * cfg.mu) / (math.pi * cfg.mu)
        reports.append(moment_report(data[f"age_{t:g}"], target, cfg.experiment_id, cfg.mu, cfg.seed, label=f"t={t:g}"))
    return ExperimentOutcome(reports)


@register("pseudo-stopping", "E[R_rho^{2mu} - L_rho] = 0 at the pseudo-stopping time rho", anchor="pseudo-stopping time")
def run_pseudo_stopping(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    data = sim.run(cfg.params, sim_config(cfg), reduce_pseudo_stopping)
    report = moment_report(data["value"], 0.0, cfg.experiment_id, cfg.mu, cfg.seed, label="R_rho^(2mu) - L_rho")
    return ExperimentOutcome([report])


@register("stopping-gap", "E[M^h_g - h(g)] equals its closed form (h(x) = x gives mu(1 - mu))", anchor="optional stopping at the last zero")
def run_stopping_gap(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    params = cfg.params
    data = sim.run(params, sim_config(cfg), reduce_terminal)
    g = data["g"]
    identity = np.asarray
    samples = martlab.stopped_h_value(params, identity, g, cfg.horizon) - g
    target = martlab.closed_form_stopping_gap(params, identity, cfg.horizon)
    return ExperimentOutcome([moment_report(samples, target, cfg.experiment_id, cfg.mu, cfg.seed, label="h(x) = x")])


@register("excursion-levy", "Excursion counts per unit local time follow x^{-mu} / (2^mu Gamma(1 + mu))", anchor="excursion Levy measure")
def run_excursion_levy(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    params = cfg.params
    lengths = tuple(EXPERIMENT_GRIDS["excursion_lengths"])
    data = sim.run(params, sim_config(cfg), partial(reduce_excursions, lengths=lengths))
    mean_l = float(np.mean(data["l"]))
    reports = []
    for x in lengths:
        tail = laws.levy_tail(params, x)
        # Ratio estimator sum(count) / sum(L) written as a mean for its standard error
        samples = tail + (data[f"count_{x:g}"] - tail * data["l"]) / mean_l
        reports.append(
            relative_moment_report(
                samples,
                tail,
                ACCEPTANCE_THRESHOLDS["excursion_levy_relative"],
                cfg.experiment_id,
                cfg.mu,
                cfg.seed,
                label=f"n([{x:g}, inf))",
            )
        )
    return ExperimentOutcome(reports)


@register("scaling-law", "L_t has the law of t^mu L_1", anchor="Brownian scaling of L")
def run_scaling(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    t_small = 0.25
    data = sim.run(cfg.params, sim_config(cfg), partial(reduce_scaling, t_small=t_small * cfg.horizon))
    # Disjoint halves keep the two samples independent
    small = data["l_small"][0::2]
    scaled = (t_small ** cfg.mu) * data["l_one"][1::2]
    report = two_sample_report(
        small, scaled, ACCEPTANCE_THRESHOLDS["ks_default"], cfg.experiment_id, cfg.mu, cfg.seed,
        label=f"L_{t_small:g} vs {t_small:g}^mu L_1",
    )
    return ExperimentOutcome([report])


@register("occupation-limit", "n^delta int f(nR) -> (1/mu) int f(x) x^{1-2mu} dx L_T", anchor="rescaled occupation limit")
def run_occupation(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    n = 32.0
    data = sim.run(cfg.params, sim_config(cfg), partial(reduce_occupation, n=n))
    mu = cfg.mu
    target = float(np.mean(data["l"])) / (mu * (2.0 - 2.0 * mu))
    report = relative_moment_report(
        data["occ"], target, ACCEPTANCE_THRESHOLDS["occupation_limit_relative"],
        cfg.experiment_id, mu, cfg.seed, label=f"f = 1[0,1], n = {n:g}",
    )
    return ExperimentOutcome([report])


@register(
    "occupation-refinement", "Occupation estimates of L approach the exact local time as eps and dt halve",
    anchor="occupation estimator of L", n_paths=5_000, n_steps=4_000,
)
def run_occupation_refinement(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    if cfg.n_steps % 2:
        raise UsageError(f"occupation-refinement needs an even number of steps (got {cfg.n_steps})")
    data = sim.run(cfg.params, sim_config(cfg), partial(reduce_refinement, epsilon=cfg.epsilon))
    reports = [
        refinement_report(
            data["exact"], data["coarse"], data["fine"], cfg.experiment_id, cfg.mu, cfg.seed,
            label=f"bias at (eps/2, dt) vs (eps, 2 dt), eps={cfg.epsilon:g}",
        ),
        moment_report(
            data["extrapolated"] - data["exact"], 0.0, cfg.experiment_id, cfg.mu, cfg.seed,
            label="extrapolated - exact",
        ).model_copy(update={"kind": TestKind.DOCUMENTATION}),
    ]
    return ExperimentOutcome(reports)


@register(
    "level-local-time", "Local time at a level a > 0 from the occupation formula",
    anchor="occupation formula at level a", n_paths=10_000,
)
def run_level_local_time(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    params = cfg.params
    levels = tuple(EXPERIMENT_GRIDS["local_time_levels"])
    data = sim.run(params, sim_config(cfg), partial(reduce_level_local_time, levels=levels, epsilon=cfg.epsilon))
    reports = []
    for a in levels:
        reports.append(relative_moment_report(
            data[f"la_{a:g}"], laws.level_local_time_mean(params, a, cfg.horizon),
            ACCEPTANCE_THRESHOLDS["level_local_time_relative"], cfg.experiment_id, cfg.mu, cfg.seed,
            label=f"E[L_T^{a:g}]",
        ))
        reports.append(relative_moment_report(
            data[f"lhs_{a:g}"], float(np.mean(data[f"rhs_{a:g}"])),
            ACCEPTANCE_THRESHOLDS["level_occupation_relative"], cfg.experiment_id, cfg.mu, cfg.seed,
            label=f"occupation with w(u) = exp(-u) at a={a:g}",
        ))
    return ExperimentOutcome(reports)


@register(
    "doob-maximal", "Doob's maximal identity for the barrier balayage martingale", anchor="Doob maximal identity",
    horizon=20.0, n_steps=40_000, batch_size=25,
)
def run_doob(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    params = cfg.params
    u, level = 0.05, 0.2
    spec = martlab.barrier_spec(params, partial(constant_barrier, level), u)
    reports = martlab.doob_maximal_check(
        sim.iter_paths(params, sim_config(cfg)), spec, u, allow_censored=True,
        experiment_id=cfg.experiment_id, seed=cfg.seed,
    )
    return ExperimentOutcome(reports)


@register("z-tower", "E[1{g > t} w(R_t)] = E[Z_t w(R_t)]", anchor="Azema supermartingale Z")
def run_z_tower(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    params = cfg.params
    times = tuple(t * cfg.horizon for t in EXPERIMENT_GRIDS["z_tower_times"])
    data = sim.run(params, sim_config(cfg), partial(reduce_z_tower, times=times))
    weights = {
        "1": lambda r: np.ones_like(r),
        "R_t": lambda r: r,
        "exp(-R_t)": lambda r: np.exp(-r),
    }
    reports = []
    for t in times:
        r = data[f"r_{t:g}"]
        z = laws.z_supermartingale(params, r, t, cfg.horizon)
        after = (data["g"] > t).astype(float)
        for name, w in weights.items():
            reports.append(moment_report(
                (after - z) * w(r), 0.0, cfg.experiment_id, cfg.mu, cfg.seed, label=f"t={t:g}, w={name}",
            ))
    return ExperimentOutcome(reports)


@register("construction-agreement", "Direct and time-change constructions agree in law", anchor="time-change representation", n_paths=10_000, n_steps=2_000)
def run_construction_agreement(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    params = cfg.params
    direct = sim.run(params, sim_config(cfg), reduce_terminal)
    tc_cfg = sim.time_change_config(params, cfg.n_paths, cfg.n_steps, cfg.horizon, cfg.seed + 1, cfg.batch_size)
    changed = sim.run(
        params, tc_cfg, reduce_terminal, Construction.TIME_CHANGE, t_horizon=cfg.horizon, t_steps=cfg.n_steps,
    )
    threshold = 0.03
    reports = [
        two_sample_report(direct["g"], changed["g"], threshold, cfg.experiment_id, cfg.mu, cfg.seed, label="g_mu(T)"),
        two_sample_report(direct["r"], changed["r"], threshold, cfg.experiment_id, cfg.mu, cfg.seed, label="R_T"),
        two_sample_report(direct["l"], changed["l"], threshold, cfg.experiment_id, cfg.mu, cfg.seed, label="L_T"),
    ]
    return ExperimentOutcome(reports)


@register("martingale-constancy", "Balayage, Azema projection and X keep constant expectation", anchor="balayage martingales")
def run_constancy(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    times = tuple(t * cfg.horizon for t in EXPERIMENT_GRIDS["constancy_times"])
    data = sim.run(cfg.params, sim_config(cfg), partial(reduce_constancy, times=times, theta=1.0))
    reports = []
    for key in sorted(data):
        reports.append(moment_report(data[key], 0.0, cfg.experiment_id, cfg.mu, cfg.seed, label=key))
    return ExperimentOutcome(reports)


@register("xf-orthogonality", "X^f is orthogonal to functionals of (g, L_1)", anchor="meander orthogonality of X^f")
def run_xf(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    data = sim.run(cfg.params, sim_config(cfg), reduce_terminal)
    specs = [
        martlab.XfSpec(f=lambda x: x ** 2, df=lambda x: 2.0 * x, d2f=lambda x: 2.0 * np.ones_like(x), name="x^2"),
        martlab.XfSpec(f=lambda x: x ** 4, df=lambda x: 4.0 * x ** 3, d2f=lambda x: 12.0 * x ** 2, name="x^4"),
    ]
    weights = {
        "cos(g)": lambda g, l: np.cos(g),
        "1/(1+L)": lambda g, l: 1.0 / (1.0 + l),
    }
    reports = []
    for spec in specs:
        x = martlab.xf_value(spec, data["r"], data["g"], cfg.horizon)
        for name, w in weights.items():
            reports.append(moment_report(
                x * w(data["g"], data["l"]), 0.0, cfg.experiment_id, cfg.mu, cfg.seed, label=f"f={spec.name}, w={name}",
            ))
    return ExperimentOutcome(reports)


@register("mhat-martingale", "E[M-hat_t] = M-hat_0 = 0 for f(x) = x^2", anchor="M-hat decomposition", n_paths=2_000)
def run_mhat(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    params = cfg.params
    t = 0.5 * cfg.horizon
    data = sim.run(params, sim_config(cfg), partial(reduce_mhat_state, t=t))

    def evaluate(as_printed: bool) -> np.ndarray:
        return np.array([
            martlab.mhat_decomposition(params, square, float(r), t, float(g), cfg.horizon, as_printed).value
            for r, g in zip(data["r"], data["g"])
        ])

    reports = [moment_report(evaluate(False), 0.0, cfg.experiment_id, cfg.mu, cfg.seed, label="t=T/2")]
    if cfg.as_printed:
        printed = moment_report(evaluate(True), 0.0, cfg.experiment_id, cfg.mu, cfg.seed, label="t=T/2, as printed")
        reports.append(printed.model_copy(update={"kind": TestKind.DOCUMENTATION}))
    return ExperimentOutcome(reports)


def _identity_reports(params: BesselParams, experiment_id: str, as_printed: bool) -> List[StatReport]:
    mu = params.mu
    nu = params.nu
    reports = []

    def add(label: str, estimate: float, target: float, tolerance: float, kind: TestKind = TestKind.IDENTITY):
        reports.append(identity_report(estimate, target, tolerance, experiment_id, mu, label=label, kind=kind))

    add("Gamma(1/2) = sqrt(pi)", specfun.gamma_fn(0.5), math.sqrt(math.pi), 1e-13)
    add("Gamma(3/2) = sqrt(pi) / 2", specfun.gamma_fn(1.5), 0.5 * math.sqrt(math.pi), 1e-13)
    add("Q(1/2, 1/2) = erfc(sqrt(1/2))", specfun.reg_upper_gamma(0.5, 0.5), math.erfc(math.sqrt(0.5)), 1e-12)
    add(
        "half-order Bessel sqrt(2/pi) cosh(1)",
        specfun.bessel_i_scaled(-0.5, 1.0),
        math.sqrt(2.0 / math.pi) * math.cosh(1.0),
        1e-10,
    )
    half = BesselParams(mu=0.5)
    add(
        "reflected Brownian kernel p(1; 0, 1) at mu = 1/2",
        specfun.transition_density(half, 1.0, 0.0, 1.0),
        math.exp(-0.5) / math.sqrt(2.0 * math.pi),
        1e-12,
    )
    add(
        "kernel at the origin",
        specfun.transition_density(params, 0.5, 0.0, 0.0),
        mu * 2.0 ** mu * 0.5 ** (mu - 1.0) / specfun.gamma_fn(1.0 - mu),
        1e-12,
    )
    add("speed density at y = 1", float(specfun.speed_density(params, 1.0)), 1.0 / mu, 1e-15)
    add("scale function at x = 2", float(specfun.scale_fn(params, 2.0)), 4.0 ** mu, 1e-12)
    add("c_mu Gamma consistency", params.c_mu * 2.0 ** mu * specfun.gamma_fn(1.0 + mu), 1.0, 1e-13)

    cut = 30.0
    series = specfun._bessel_series(nu, cut)
    asymptotic = math.exp(cut) * specfun._bessel_asymptotic_scaled(nu, cut) * cut ** (-nu)
    add("Bessel series/asymptotic continuity at z=30 (relative)", series / asymptotic, 1.0, 1e-10)

    x0, t0 = 0.7, 1.0
    mass = quad_checked(
        lambda y: specfun.transition_density(params, t0, x0, y) / mu,
        0.0, x0 + 40.0, epsabs=1e-12, weight="alg", wvar=(1.0 - 2.0 * mu, 0.0),
    )
    add("transition density integrates to 1", mass, 1.0, 1e-8)

    s, t = 0.4, 0.6
    for x in (0.0, 0.5, 1.2):
        for y in (0.1, 0.9, 1.6):
            chained = quad_checked(
                lambda z: specfun.transition_density(params, s, x, z) * specfun.transition_density(params, t, z, y) / mu,
                0.0, 40.0, epsabs=1e-12, weight="alg", wvar=(1.0 - 2.0 * mu, 0.0),
            )
            add(
                f"Chapman-Kolmogorov at x={x:g}, y={y:g}",
                chained,
                specfun.transition_density(params, s + t, x, y),
                1e-6,
            )
    add(
        "symmetry p(t;x,y) = p(t;y,x)",
        specfun.transition_density(params, 0.3, 0.2, 1.1),
        specfun.transition_density(params, 0.3, 1.1, 0.2),
        0.0,
    )

    r, t = 0.8, 0.3
    add(
        "Z as incomplete gamma vs conditional integral",
        laws.conditional_h_integral(params, lambda _: 1.0, r, t, 1.0),
        laws.z_supermartingale(params, r, t, 1.0),
        1e-8,
    )
    add(
        "X closed form vs quadrature",
        laws.martingale_X_closed_form(params, 0.6, 0.1, 0.2, 1.0),
        laws.martingale_X_quadrature(params, 0.6, 0.1, 0.2, 1.0),
        1e-9,
    )
    add("X_0 = E[L_1]", laws.martingale_X_closed_form(params, 0.0, 0.0, 0.0, 1.0), laws.lt_mean(params), 1e-12)

    r, t, T = 0.8, 0.3, 1.0
    law = laws.conditional_g_law(params, r, t, T, g_t=0.1)
    # density / ((u - t)^{mu-1} (T - u)^{-mu}); the power factors go in the weight
    spread = params.beta_constant * quad_checked(
        lambda u: math.exp(-r * r / (2.0 * (u - t))) if u > t else 0.0,
        t, T, epsabs=1e-12, weight="alg", wvar=(mu - 1.0, -mu),
    )
    add("conditional law of g has total mass 1", law.atom_weight + spread, 1.0, 1e-6)

    add(
        "M-hat vanishes for f = 1",
        martlab.mhat_decomposition(params, lambda z: 1.0, 0.7, 0.4, 0.2).value, 0.0, 1e-6,
    )
    add(
        "M-hat vanishes at a zero for f = x^2",
        martlab.mhat_decomposition(params, lambda z: z * z, 0.0, 0.4, 0.4).value, 0.0, 1e-6,
    )
    for name, f in (("1", lambda z: 1.0), ("x", lambda z: z)):
        add(
            f"M-hat vanishes at a zero for f = {name}",
            martlab.mhat_decomposition(params, f, 0.0, 0.4, 0.4).value, 0.0, 1e-6,
        )
    if as_printed:
        add(
            "M-hat for f = 1 with the alternative weights",
            martlab.mhat_decomposition(params, lambda z: 1.0, 0.7, 0.4, 0.2, as_printed=True).value,
            0.0, 1e-6, kind=TestKind.DOCUMENTATION,
        )

    u = 1.5
    add(
        "barrier probability invariant under truncation",
        laws.hitting_probability(params, laws.truncate_phi(lambda _: 1.3, u), 2.0 * u, points=[u]),
        laws.hitting_probability(params, lambda _: 1.3, u),
        1e-12,
    )
    add(
        "Levy tail integrates the excursion density",
        laws.levy_tail(params, 0.3),
        # int_{0.3}^inf v^{-1-mu} dv after v = 0.3 / s
        quad_checked(lambda s: 0.3 ** (-mu), 0.0, 1.0, epsabs=1e-12, weight="alg", wvar=(mu - 1.0, 0.0))
        / (2.0 ** mu * specfun.gamma_fn(mu)),
        1e-9,
    )
    add(
        "stopping gap for h(x) = x is mu(1 - mu)",
        martlab.closed_form_stopping_gap(params, np.asarray),
        mu * (1.0 - mu),
        1e-10,
    )
    add(
        "Beta(mu, 1-mu) density integrates to 1",
        float(laws.gmu_cdf(params, 1.0)),
        1.0,
        1e-12,
    )
    return reports


@register("identity-suite", "Deterministic identities of the kernel, Z, X, M-hat and the Levy tail", anchor="closed-form identities")
def run_identity_suite(cfg: ExperimentConfig, sim: SimulationService) -> ExperimentOutcome:
    return ExperimentOutcome(_identity_reports(cfg.params, cfg.experiment_id, cfg.as_printed))
