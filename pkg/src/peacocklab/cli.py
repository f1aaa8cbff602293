"""Command-line scenario runner.

Every subcommand resolves its parameters from (lowest to highest priority)
built-in defaults, an optional INI-like config file (``--config``) and
command-line flags.  All parameters are validated before any simulation
starts.  A run writes its artifacts plus ``summary.csv`` (one row per check)
into the output directory and exits with

* 0 when every check passed,
* 1 when a check failed or the run itself failed,
* 2 on usage or configuration errors.

The output directory defaults to ``$PEACOCKLAB_OUT/<subcommand>``.
"""
import argparse
import configparser
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from . import io
from .construction import run_construction
from .counterexamples import (FALSIFICATION_COLUMNS, TimeChange, branched_peacock, integrated_clock,
                              jump_count_pmf, jump_mimicker, markov_falsification_stat, planar_radius,
                              regularized_branch_event, stay_probability, switch_probability)
from .errors import MissingSummary, PeacockError
from .lambda_family import FIGURE1_LAMBDAS, fake_brownian, figure1_scenarios, lambda_motion
from .measures import (CircleLaw, DiracLaw, EmpiricalMeasure, GaussianLaw, PeacockCurve, as_empirical,
                       brownian_curve, circle_curve, convex_order_test, convolve_gaussian, regularize_peacock,
                       w2_gaussian, w2_sliced)
from .rng import TAG_AUX, CounterRNG
from .sde import DiffusionCoefficient, SimulationConfig, marginal_at, quadratic_variation_estimate, simulate

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(Exception):
    """Invalid configuration; the message names the key path and line."""


# -- parameters -----------------------------------------------------------------

@dataclass(frozen=True)
class Param:
    name: str
    kind: type
    default: object
    check: object = None  # callable(value) -> bool
    rule: str = ""
    help: str = ""


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _unit(v):
    return 0 < v <= 1


def _floats(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())


def _bool(text):
    if isinstance(text, bool):
        return text
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


COMMON = (
    Param("seed", int, 0, _nonneg, ">= 0", "master seed"),
    Param("n_paths", int, 10_000, _positive, ">= 1", "number of paths / samples"),
    Param("dt", float, 1e-4, _unit, "in (0, 1]", "time step"),
    Param("workers", int, 1, _positive, ">= 1", "worker threads (never changes results)"),
)

SCENARIOS = {
    "simulate-lambda": (
        "Euler ensemble of the unit-speed lambda coefficient.",
        (Param("lambda", float, 0.0, lambda v: 0 <= v <= 1, "in [0, 1]"),
         Param("r0", float, 0.0, _nonneg, ">= 0", "start radius (0 = origin, lambda = 0 only)"),
         Param("t_end", float, 1.0, _unit, "in (0, 1]"),
         Param("rms_factor", float, 3.0, _positive, "> 0", "radius identity threshold in units of sqrt(2 dt t)"),
         Param("mean_tol", float, 0.01, _positive, "> 0", "tolerance on the mean squared radius"),
         Param("export_paths", int, 100, _nonneg, ">= 0", "paths written to paths.csv"),
         Param("record_points", int, 100, _positive, ">= 1", "recorded grid points per path")),
        {}),
    "fake-bm": (
        "Fake Brownian motion against Brownian motion from the same initial law.",
        (Param("r0", float, 1.0, _positive, "> 0", "radius of the uniform initial circle"),
         Param("ks_threshold", float, 0.02, _positive, "> 0"),
         Param("w2_threshold", float, 0.03, _positive, "> 0"),
         Param("w2_times", _floats, (0.25, 0.5, 1.0), lambda v: len(v) > 0 and all(0 < t <= 1 for t in v),
               "times in (0, 1]"),
         Param("n_directions", int, 256, _positive, ">= 1"),
         Param("eigen_threshold", float, 0.1, _positive, "> 0"),
         Param("bm_eigen_threshold", float, 0.8, _positive, "> 0"),
         Param("min_pairs", int, 500, _positive, ">= 1"),
         Param("qv_t_end", float, 2e-3, _unit, "in (0, 1]", "horizon of the fine run for local covariances"),
         Param("qv_radius", float, 0.1, _positive, "> 0"),
         Param("export_paths", int, 100, _nonneg, ">= 0")),
        {"n_paths": 20_000}),
    "figure1": (
        "Single trajectories for lambda in {0, sqrt(2)/2, 1} until they leave the unit disc.",
        (Param("r0", float, 0.2, lambda v: 0 < v < 1, "in (0, 1)"),
         Param("max_time", float, 10.0, _positive, "> 0")),
        {"seed": 7}),
    "regularize": (
        "Gaussian regularization of a Brownian or circle marginal curve.",
        (Param("source", str, "circle", lambda v: v in ("brownian", "circle"), "brownian | circle"),
         Param("epsilon", float, 0.1, _positive, "> 0"),
         Param("delta", float, 0.1, _positive, "> 0"),
         Param("times", _floats, (0.0, 0.25, 0.5, 0.75, 1.0),
               lambda v: len(v) > 1 and all(0 <= t <= 1 for t in v) and all(np.diff(v) > 0),
               "increasing times in [0, 1]"),
         Param("n_se", float, 3.0, _positive, "> 0")),
        {"n_paths": 100_000}),
    "construct": (
        "Level-n regularized dyadic construction and its marginal checks.",
        (Param("source", str, "brownian", lambda v: v in ("brownian", "dirac"), "brownian | dirac"),
         Param("n_level", int, 3, lambda v: 0 <= v <= 10, "in [0, 10]"),
         Param("epsilon", float, 0.25, _positive, "> 0"),
         Param("delta", float, 0.25, _positive, "> 0"),
         Param("cloud_size", int, 256, _positive, ">= 1"),
         Param("w2_threshold", float, 0.05, _positive, "> 0"),
         Param("n_probes", int, 1000, _positive, ">= 1")),
        {"n_paths": 20_000, "dt": 1e-3}),
    "counterexample": (
        "Branched circle peacock in R^4, Markov falsification and branch-event bounds.",
        (Param("t", float, 5.0 / 12.0, _unit, "in (0, 1]"),
         Param("time_change", _bool, True, None, "boolean"),
         Param("method", str, "exact", lambda v: v in ("exact", "euler"), "exact | euler"),
         Param("gap_factor", float, 0.4, _positive, "> 0"),
         Param("n_se", float, 3.0, _positive, "> 0"),
         Param("p", int, 14, _positive, ">= 1", "noise power of the branch event"),
         Param("event_t", float, 0.5, _unit, "in (0, 1]"),
         Param("event_samples", int, 100_000, _positive, ">= 1")),
        {"n_paths": 20_000}),
    "jump-mimicker": (
        "Event-driven jump mimicker with exponential clocks.",
        (Param("t0", float, math.exp(-2.0), lambda v: 0 < v < 1, "in (0, 1)"),
         Param("t_end", float, 1.0, _unit, "in (0, 1]"),
         Param("n_se", float, 3.0, _positive, "> 0"),
         Param("max_count", int, 3, _nonneg, ">= 0", "largest jump count checked"),
         Param("chi2_p", float, 1e-3, _unit, "in (0, 1]"),
         Param("angle_bins", int, 36, lambda v: v >= 2, ">= 2"),
         Param("export_paths", int, 100, _nonneg, ">= 0")),
        {"n_paths": 50_000, "dt": 0.01}),
    "verify-w2": (
        "Closed-form Gaussian W2 checks.",
        (Param("case", str, "diagonal", lambda v: v in ("diagonal", "metric"), "diagonal | metric"),
         Param("a", _floats, (1.0,), lambda v: len(v) > 0 and min(v) >= 0, "non-negative variances"),
         Param("b", _floats, (4.0,), lambda v: len(v) > 0 and min(v) >= 0, "non-negative variances"),
         Param("dim", int, 1, _positive, ">= 1"),
         Param("tol", float, 1e-10, _positive, "> 0"),
         Param("triangle_tol", float, 1e-9, _positive, "> 0"),
         Param("n_triples", int, 1000, _positive, ">= 1")),
        {}),
    "verify-convex-order": (
        "Convex-order battery: exact Gaussian cases, circle laws, regularization monotonicity.",
        (Param("case", str, "all", lambda v: v in ("all", "gaussian", "circle", "regularization"),
               "all | gaussian | circle | regularization"),
         Param("dim", int, 2, _positive, ">= 1"),
         Param("n_cases", int, 100, _positive, ">= 1"),
         Param("n_measures", int, 20, _positive, ">= 1"),
         Param("measure_size", int, 2000, _positive, ">= 1"),
         Param("epsilon", float, 0.1, _positive, "> 0"),
         Param("epsilon_prime", float, 0.5, _positive, "> 0")),
        {"n_paths": 100_000}),
}


def _flag(name):
    return "--" + name.replace("_", "-")


# -- config files -----------------------------------------------------------------

def read_config(path, scenario):
    """Flat ``key = value`` file; keys may also sit in a ``[<scenario>]`` section.

    Returns ``{key: (value, where)}`` with ``where`` like ``file:line [section].key``.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    shift = 0
    first = next((ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith(("#", ";"))), "")
    if not first.startswith("["):
        text = "[DEFAULT]\n" + text
        shift = 1
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        if isinstance(exc, configparser.ParsingError):
            msg = "; ".join(f"{path}:{lineno - shift}: not a key = value line" for lineno, _ in exc.errors)
        elif getattr(exc, "lineno", None) is not None:
            msg = f"{path}:{exc.lineno - shift}: {exc.message}"
        else:
            msg = f"{path}: {exc}"
        raise ConfigError(msg) from None
    lines_of = _line_numbers(lines)
    out = {}
    for key, value in cp.defaults().items():
        out[key] = (value, f"{path}:{lines_of.get(('DEFAULT', key), '?')} {key}")
    if cp.has_section(scenario):
        for key in cp.options(scenario):
            if key in cp.defaults() and cp.get(scenario, key) == cp.defaults()[key] \
                    and (scenario, key) not in lines_of:
                continue
            out[key] = (cp.get(scenario, key), f"{path}:{lines_of.get((scenario, key), '?')} [{scenario}].{key}")
    for section in cp.sections():
        if section != scenario and section not in SCENARIOS:
            raise ConfigError(f"{path}: unknown section [{section}]")
    return {k.replace("-", "_"): v for k, v in out.items()}


def _line_numbers(lines):
    section = "DEFAULT"
    found = {}
    for i, raw in enumerate(lines, start=1):
        s = raw.strip()
        if not s or s.startswith(("#", ";")):
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            continue
        for sep in ("=", ":"):
            if sep in s:
                found[(section, s.split(sep, 1)[0].strip().lower())] = i
                break
    return found


def resolve(scenario, args):
    """Merge defaults, config file and flags; validate every value."""
    _, params, overrides = SCENARIOS[scenario]
    table = {p.name: p for p in COMMON + params}
    values, where = {}, {}
    for p in table.values():
        values[p.name] = overrides.get(p.name, p.default)
        where[p.name] = "default"
    if args.config:
        try:
            cfg = read_config(args.config, scenario)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        for key, (value, loc) in cfg.items():
            if key == "out":
                values["out"], where["out"] = value, loc
                continue
            if key not in table:
                raise ConfigError(f"{loc}: unknown key {key!r} for {scenario}")
            values[key], where[key] = value, loc
    for p in table.values():
        flag = getattr(args, p.name, None)
        if flag is not None:
            values[p.name], where[p.name] = flag, f"flag {_flag(p.name)}"
    for p in table.values():
        try:
            v = p.kind(values[p.name]) if p.kind is not _bool else _bool(values[p.name])
        except (TypeError, ValueError):
            raise ConfigError(f"{where[p.name]}: {p.name}={values[p.name]!r} is not a valid "
                              f"{getattr(p.kind, '__name__', 'value')}") from None
        if p.check is not None and not p.check(v):
            raise ConfigError(f"{where[p.name]}: {p.name}={values[p.name]!r} must be {p.rule}")
        values[p.name] = v
    out = getattr(args, "out", None) or values.get("out")
    values["out"] = Path(out) if out else io.default_out_root() / scenario
    return values


# -- scenarios -----------------------------------------------------------------------

def _cfg(v, **kw):
    base = dict(n_paths=v["n_paths"], dt=v["dt"], master_seed=v["seed"], workers=v["workers"])
    base.update(kw)
    return SimulationConfig(**base)


def _stride(t_end, dt, points):
    n_steps = int(math.floor(t_end / dt + 1e-9))
    return max(1, n_steps // points)


def _export(path, e, n):
    if n > 0:
        io.write_ensemble(path, e.subset(np.arange(min(n, e.n_paths))))


def run_simulate_lambda(v, s):
    lam, r0, t_end = v["lambda"], v["r0"], v["t_end"]
    if r0 == 0 and lam != 0:
        raise ConfigError("r0=0 (start at the origin) is only allowed for lambda=0")
    initial = DiracLaw.origin(2) if r0 == 0 else CircleLaw(r0)
    cfg = _cfg(v, t_end=t_end, initial=initial, record_stride=_stride(t_end, v["dt"], v["record_points"]))
    e = lambda_motion(lam, cfg, r_min=min(0.1, r0) if r0 > 0 else 0.1)
    _export(v["out"] / "paths.csv", e, v["export_paths"])
    io.write_measure(v["out"] / "marginal_end.csv", EmpiricalMeasure(e.states_at(e.times[-1]))
                     if e.n_aborted < e.n_paths else EmpiricalMeasure(np.zeros((1, 2))))
    s.info("origin_hits", e.n_aborted)
    live = ~e.aborted
    r2_end = np.sum(e.paths[live, -1] ** 2, axis=1)
    r2_start = np.sum(e.paths[live, 0] ** 2, axis=1)
    horizon = float(e.times[-1])
    if lam == 0.0:
        growth = r2_end - r2_start
        rms = float(np.sqrt(np.mean((growth - horizon) ** 2)))
        s.le("radius_identity_rms", rms, v["rms_factor"] * math.sqrt(2.0 * v["dt"] * horizon))
        mean = float(np.mean(r2_end))
        target = r2_start.mean() + horizon
        s.check("mean_r2_end", mean, f"in [{io.fmt(target - v['mean_tol'])}, {io.fmt(target + v['mean_tol'])}]",
                abs(mean - target) <= v["mean_tol"])
    growth = r2_end - r2_start
    se = float(np.std(growth, ddof=1) / math.sqrt(growth.size)) if growth.size > 1 else 0.0
    dev = abs(float(np.mean(growth)) - horizon)
    if e.n_aborted:
        s.info("l2_growth_deviation_survivors", dev)
    else:
        s.le("l2_growth_deviation", dev, 3.0 * se)


def _ks(a, b):
    return float(stats.ks_2samp(a, b).statistic)


def run_fake_bm(v, s):
    times = tuple(sorted(v["w2_times"]))
    stride_pts = [int(round(t / v["dt"])) for t in times]
    stride = math.gcd(*stride_pts)
    init = CircleLaw(v["r0"])
    fake = fake_brownian(_cfg(v, initial=init, record_stride=stride))
    bm = simulate(DiffusionCoefficient.identity(2),
                  _cfg(v, initial=init, record_stride=stride, master_seed=v["seed"] + 1))
    _export(v["out"] / "fake_paths.csv", fake, v["export_paths"])
    s.info("origin_hits", fake.n_aborted)
    r_fake = planar_radius(fake.states_at(1.0))
    r_bm = planar_radius(bm.states_at(1.0))
    s.le("ks_radius", _ks(r_fake, r_bm), v["ks_threshold"])
    for t in times:
        mf, mb = marginal_at(fake, t), marginal_at(bm, t)
        io.write_measure(v["out"] / f"fake_marginal_t{t:g}.csv", mf)
        s.le(f"sliced_w2_t{t:g}", w2_sliced(mf, mb, v["n_directions"], seed=v["seed"]), v["w2_threshold"])
    # local covariance near (r0, 0) from a short run recorded at every step
    qcfg = _cfg(v, t_end=max(v["qv_t_end"], v["dt"]), initial=init)
    window = (0, qcfg.n_steps)
    centre = (v["r0"], 0.0)
    qf = quadratic_variation_estimate(fake_brownian(qcfg), window, centre, v["qv_radius"])
    qb = quadratic_variation_estimate(simulate(DiffusionCoefficient.identity(2), qcfg), window, centre,
                                      v["qv_radius"])
    s.le("eigen_ratio", qf.eigen_ratio, v["eigen_threshold"])
    s.ge("eigen_ratio_bm", qb.eigen_ratio, v["bm_eigen_threshold"])
    s.ge("qv_pairs", qf.n_pairs, v["min_pairs"])
    s.ge("qv_pairs_bm", qb.n_pairs, v["min_pairs"])


def run_figure1(v, s):
    res = figure1_scenarios(v["out"], seed=v["seed"], dt=v["dt"], start_radius=v["r0"], max_time=v["max_time"])
    for lam in FIGURE1_LAMBDAS:
        label = f"lambda_{lam:.4f}"
        t, xs = res[label]
        r = planar_radius(xs)
        s.le(f"exit_time_{label}", float(t[-1]), v["max_time"])
        s.ge(f"exit_radius_{label}", float(r[-1]), 1.0)
        if lam == 1.0:
            s.le("lambda_1_perpendicular_deviation", float(np.max(np.abs(xs[:, 1]))), 0.0)
        if lam == 0.0:
            drops = int(np.count_nonzero(np.diff(xs[:, 0] ** 2 + xs[:, 1] ** 2) < 0))
            s.le("lambda_0_radius_decreases", drops, 0)


def _moment_rows(s, cloud, target, name, n_se):
    per_coord = cloud.samples**2
    m = per_coord.mean(axis=0)
    se = per_coord.std(axis=0, ddof=1) / math.sqrt(cloud.n)
    dev = float(np.max(np.abs(m - target)))
    s.le(name, dev, float(n_se * np.max(se)))


def run_regularize(v, s):
    times = np.asarray(v["times"])
    eps, delta = v["epsilon"], v["delta"]
    if v["source"] == "brownian":
        curve = regularize_peacock(brownian_curve(times), eps, delta, seed=v["seed"])
        for t, law in zip(times, curve.laws):
            target = t + eps * (t + delta)
            s.le(f"variance_error_t{t:g}", float(np.max(np.abs(np.diag(law.covariance) - target))), 1e-12)
    else:
        source = circle_curve(times)
        emp = [as_empirical(law, v["n_paths"], v["seed"], step=k) for k, law in enumerate(source.laws)]
        curve = regularize_peacock(PeacockCurve(times, tuple(emp)), eps, delta, seed=v["seed"] + 1)
        for t, law in zip(times, curve.laws):
            _moment_rows(s, law, t / 2.0 + eps * (t + delta), f"second_moment_error_t{t:g}", v["n_se"])
    io.write_curve(v["out"] / "curve", curve, n_samples=min(v["n_paths"], 10_000), seed=v["seed"])
    for k in range(len(times) - 1):
        verdict = convex_order_test(curve.laws[k], curve.laws[k + 1], seed=v["seed"] + k)
        s.check(f"convex_order_t{times[k]:g}_t{times[k + 1]:g}", verdict.consistent, "consistent",
                verdict.consistent)


def run_construct(v, s):
    n = v["n_level"]
    dyadics = np.arange(2**n + 1) / 2**n
    if v["source"] == "brownian":
        source, base, allow_flat = brownian_curve(dyadics), DiffusionCoefficient.identity(2), False
    else:
        source = PeacockCurve.from_function(dyadics, lambda t: DiracLaw.origin(2))
        base, allow_flat = DiffusionCoefficient.zero(2), True
    cfg = _cfg(v, record_stride=max(1, int(round(0.5 / 2**n / v["dt"]))))
    e, rep = run_construction(source, base, n, v["epsilon"], v["delta"], cfg, cloud_size=v["cloud_size"],
                              threshold=v["w2_threshold"], n_probes=v["n_probes"], allow_flat=allow_flat)
    io.write_table(v["out"] / "report.csv", ("t_dyadic", "sliced_w2", "threshold", "pass"), rep.dyadic_rows)
    io.write_table(v["out"] / "floor.csv", ("t", "min_eig_measured"), rep.floor_rows)
    io.write_table(v["out"] / "budget.csv", ("interval", "target_increment", "measured_increment"),
                   rep.budget_rows)
    io.write_meta(v["out"] / "report.csv.meta", rep.params)
    for t, w2, thr, _ in rep.dyadic_rows:
        s.le(f"sliced_w2_t{t:g}", w2, thr)
    s.ge("floor_min_eig", rep.min_floor, 2.0 * v["epsilon"] - 1e-9)
    s.info("origin_or_nonfinite_aborts", e.n_aborted)


def run_counterexample(v, s):
    t = v["t"]
    tc = TimeChange() if v["time_change"] else None
    target = math.sqrt(tc.a2(t)) if tc else math.sqrt(t)
    cfg = _cfg(v)
    if v["method"] == "exact":
        e = branched_peacock(cfg, time_change=tc, times=np.array([0.0, t]))
    else:
        e = branched_peacock(_cfg(v, record_stride=max(1, int(round(t / v["dt"])))), time_change=tc,
                             method="euler")
    rep = markov_falsification_stat(e, t)
    io.write_table(v["out"] / "falsification.csv", FALSIFICATION_COLUMNS, [rep.row()])
    n_se = v["n_se"]
    if v["method"] == "exact":
        s.le("E_f_branch1_abs", abs(rep.e_f_branch1), 0.0)
        s.le("E_f_branch2_error", abs(rep.e_f_branch2 - target), 0.0)
    else:
        s.le("E_f_branch1_abs", abs(rep.e_f_branch1), 0.0)
        s.le("E_f_branch2_error", abs(rep.e_f_branch2 - target), n_se * rep.se_gap + math.sqrt(v["dt"]))
    s.le("E_f_overall_error", abs(rep.e_f_overall - target / 2.0), n_se * rep.se)
    s.ge("gap", rep.gap, v["gap_factor"] * target)
    n = rep.n_branch1 + rep.n_branch2
    s.le("branch1_frequency_error", abs(rep.n_branch1 / n - 0.5), n_se * math.sqrt(0.25 / n))
    ev = regularized_branch_event(v["event_t"], v["p"], time_change=tc, n_se=n_se,
                                  n_samples=v["event_samples"], seed=v["seed"])
    io.write_table(v["out"] / "branch_event.csv",
                   ("t", "noise_power", "p_hat", "se", "lower_bound", "upper_bound", "c", "lower_ok", "upper_ok"),
                   [(ev.t, ev.noise_power, ev.p_hat, ev.se, ev.lower_bound, ev.upper_bound, ev.c, ev.lower_ok,
                     ev.upper_ok)])
    s.check("branch_event_lower_bound", ev.p_hat, f">= {io.fmt(ev.lower_bound)} - {n_se:g} SE", ev.lower_ok)
    s.check("branch_event_upper_bound", ev.p_hat, f"<= {io.fmt(ev.upper_bound)} + {n_se:g} SE", ev.upper_ok)


def _angle_chi2_p(planar, bins):
    ang = np.mod(np.arctan2(planar[:, 1], planar[:, 0]), 2.0 * np.pi)
    counts = np.bincount(np.minimum((ang / (2.0 * np.pi) * bins).astype(int), bins - 1), minlength=bins)
    return float(stats.chisquare(counts).pvalue)


def run_jump_mimicker(v, s):
    cfg = _cfg(v, t_end=v["t_end"])
    e = jump_mimicker(v["t0"], cfg)
    _export(v["out"] / "paths.csv", e, v["export_paths"])
    n_se = v["n_se"]
    delta = float(integrated_clock(v["t_end"]) - integrated_clock(v["t0"]))
    s.info("clock_increment", delta)
    counts = e.extras["jump_count"][:, -1]
    n = counts.size
    rows = []
    for k in range(v["max_count"] + 1):
        p = float(np.mean(counts == k))
        target = jump_count_pmf(k, delta)
        se = math.sqrt(target * (1 - target) / n)
        rows.append((k, p, target, se))
        s.le(f"jump_count_{k}_error", abs(p - target), n_se * se)
    io.write_table(v["out"] / "jump_counts.csv", ("n", "frequency", "target", "se"), rows)
    for name, target, hit in (("stay", stay_probability(delta), counts % 2 == 0),
                              ("switch", switch_probability(delta), counts % 2 == 1)):
        p = float(np.mean(hit))
        s.le(f"{name}_probability_error", abs(p - target), n_se * math.sqrt(target * (1 - target) / n))
    radius = planar_radius(e.paths[..., 0:2]) + planar_radius(e.paths[..., 2:4])
    s.le("radius_deviation", float(np.max(np.abs(radius - np.sqrt(e.times)[None, :]))), 0.0)
    inc = e.paths[:, -1] - e.paths[:, 0]
    mean = inc.mean(axis=0)
    se = inc.std(axis=0, ddof=1) / math.sqrt(n)
    for i in range(4):
        s.le(f"martingale_x{i + 1}", float(abs(mean[i])), float(n_se * se[i]))
    cur = e.extras["branch_id"][:, -1]
    for b in (1, 2):
        planar = e.paths[cur == b, -1][:, 2 * (b - 1):2 * b]
        s.ge(f"angle_chi2_p_branch{b}", _angle_chi2_p(planar, v["angle_bins"]), v["chi2_p"])


def _random_psd(rng, i, d, lo=0.1, hi=10.0):
    q, _ = np.linalg.qr(rng.normal([i], 0, d * d, tag=TAG_AUX)[0, 0].reshape(d, d))
    ev = lo + (hi - lo) * rng.uniform([i], 1, d, tag=TAG_AUX)[0, 0]
    return (q * ev) @ q.T


def run_verify_w2(v, s):
    if v["case"] == "diagonal":
        d = v["dim"]
        a, b = v["a"], v["b"]
        if len(a) == 1:
            a = a * d
        if len(b) == 1:
            b = b * d
        if len(a) != d or len(b) != d:
            raise ConfigError(f"a and b need 1 or dim={d} entries")
        w = w2_gaussian(GaussianLaw(np.zeros(d), np.diag(a)), GaussianLaw(np.zeros(d), np.diag(b)))
        closed = math.sqrt(sum((math.sqrt(x) - math.sqrt(y)) ** 2 for x, y in zip(a, b)))
        print(float(f"{w:.12g}"))
        s.info("w2", w)
        s.le("closed_form_error", abs(w - closed), v["tol"])
        return
    rng = CounterRNG(v["seed"])
    d = v["dim"]
    sym = tri = ident = 0.0
    for i in range(v["n_triples"]):
        A, B, C = (GaussianLaw(np.zeros(d), _random_psd(rng, 3 * i + j, d)) for j in range(3))
        ab, ba = w2_gaussian(A, B), w2_gaussian(B, A)
        sym = max(sym, abs(ab - ba))
        tri = max(tri, ab - w2_gaussian(A, C) - w2_gaussian(C, B))
        ident = max(ident, w2_gaussian(A, A))
    s.le("symmetry_error", sym, v["tol"])
    s.le("triangle_violation", max(tri, 0.0), v["triangle_tol"])
    s.le("self_distance", ident, v["tol"])


def run_verify_convex_order(v, s):
    case, d = v["case"], v["dim"]
    rng = CounterRNG(v["seed"])
    if case in ("all", "gaussian"):
        correct = 0
        for i in range(v["n_cases"]):
            A = _random_psd(rng, 2 * i, d)
            B = A + _random_psd(rng, 2 * i + 1, d, lo=0.01, hi=1.0)
            ga, gb = GaussianLaw(np.zeros(d), A), GaussianLaw(np.zeros(d), B)
            correct += bool(convex_order_test(ga, gb).consistent and convex_order_test(gb, ga).violated)
        s.ge("gaussian_cases_correct", correct, v["n_cases"])
    if case in ("all", "circle"):
        a = as_empirical(CircleLaw(math.sqrt(0.25)), v["n_paths"], v["seed"], step=0)
        b = as_empirical(CircleLaw(math.sqrt(0.75)), v["n_paths"], v["seed"], step=1)
        verdict = convex_order_test(a, b, seed=v["seed"])
        s.check("circle_laws_consistent", verdict.consistent, "consistent", verdict.consistent)
    if case in ("all", "regularization"):
        ok = 0
        eps, eps2 = sorted((v["epsilon"], v["epsilon_prime"]))
        for i in range(v["n_measures"]):
            pts = rng.normal(np.arange(v["measure_size"]), i, d, tag=TAG_AUX)[:, 0]
            pts = pts * (1.0 + rng.uniform([i], 0, d, tag=TAG_AUX)[0, 0])
            m = EmpiricalMeasure(pts)
            lo = convolve_gaussian(m, GaussianLaw.isotropic(d, eps), v["seed"] + 2 * i)
            hi = convolve_gaussian(m, GaussianLaw.isotropic(d, eps2), v["seed"] + 2 * i + 1)
            ok += bool(convex_order_test(lo, hi, seed=v["seed"] + i).consistent)
        s.ge("regularization_monotone", ok, v["n_measures"])


RUNNERS = {
    "simulate-lambda": run_simulate_lambda,
    "fake-bm": run_fake_bm,
    "figure1": run_figure1,
    "regularize": run_regularize,
    "construct": run_construct,
    "counterexample": run_counterexample,
    "jump-mimicker": run_jump_mimicker,
    "verify-w2": run_verify_w2,
    "verify-convex-order": run_verify_convex_order,
}


# -- report -----------------------------------------------------------------------------

def report(run_dirs, out=None):
    """Merge the ``summary.csv`` of several runs; returns ``(rows, passed)``."""
    rows = []
    for d in run_dirs:
        for r in io.read_summary(d):
            rows.append((str(d), r["name"], r["value"], r["threshold"], r["pass"]))
    passed = all(r[4] == "true" for r in rows)
    if out is not None:
        io.write_table(Path(out) / "report.csv", ("run", "name", "value", "threshold", "pass"), rows)
        io.write_table(Path(out) / "summary.csv", io.SUMMARY_COLUMNS,
                       [("overall", passed, "all rows pass", passed)])
    return rows, passed


# -- argument parsing -----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    parser = _Parser(prog="peacocklab", description="Simulation scenarios and numerical checks for "
                                                    "mimicking martingale diffusions.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for name, (doc, params, overrides) in SCENARIOS.items():
        p = sub.add_parser(name, help=doc, description=doc)
        p.add_argument("--config", help="INI-like key = value file (flags win)")
        p.add_argument("--out", help="output directory (default $PEACOCKLAB_OUT/<command>)")
        for prm in COMMON + params:
            default = overrides.get(prm.name, prm.default)
            kind = str if prm.kind in (_floats, _bool) else prm.kind
            p.add_argument(_flag(prm.name), dest=prm.name, type=kind, default=None,
                           help=f"{prm.help + '; ' if prm.help else ''}default {default!r}")
    p = sub.add_parser("report", help="merge summary.csv files of earlier runs",
                       description="Merge summary.csv files of earlier runs; no recomputation.")
    p.add_argument("run_dirs", nargs="*")
    p.add_argument("--out", help="write report.csv and summary.csv here")
    return parser


def _print_summary(rows, stream=sys.stdout):
    for r in rows:
        name, value, threshold, ok = r
        print(f"{'PASS' if ok else 'FAIL'}  {name} = {io.fmt(value)}  {threshold}".rstrip(), file=stream)


def run(argv=None):
    """Execute one subcommand; returns the exit code."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code in (EXIT_OK, EXIT_USAGE) else EXIT_USAGE

    if args.command == "report":
        if not args.run_dirs:
            print("peacocklab report: error: at least one run directory is required", file=sys.stderr)
            return EXIT_USAGE
        try:
            rows, passed = report(args.run_dirs, args.out)
        except MissingSummary as exc:
            print(f"peacocklab report: error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        for r in rows:
            print(f"{'PASS' if r[4] == 'true' else 'FAIL'}  {r[0]}: {r[1]} = {r[2]}  {r[3]}".rstrip())
        print("overall:", "PASS" if passed else "FAIL")
        return EXIT_OK if passed else EXIT_FAIL

    try:
        values = resolve(args.command, args)
    except ConfigError as exc:
        print(f"peacocklab {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = values["out"]
    summary = io.Summary()
    try:
        out.mkdir(parents=True, exist_ok=True)
        RUNNERS[args.command](values, summary)
    except ConfigError as exc:
        print(f"peacocklab {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PeacockError, ArithmeticError, ValueError, OSError) as exc:
        print(f"peacocklab {args.command}: run failed: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        summary.check("run_completed", False, "true", False)
        _write_outputs(out, summary, values)
        return EXIT_FAIL
    _write_outputs(out, summary, values)
    _print_summary(summary.rows)
    return EXIT_OK if summary.passed else EXIT_FAIL


def _write_outputs(out, summary, values):
    try:
        summary.write(out)
        echo = {k: (",".join(io.fmt(x) for x in v) if isinstance(v, tuple) else v)
                for k, v in values.items() if k not in ("out", "workers")}
        io.write_meta(out / "config.meta", echo)
    except OSError as exc:
        print(f"cannot write outputs to {out}: {exc}", file=sys.stderr)


def main(argv=None):
    try:
        code = run(argv)
    except KeyboardInterrupt:
        code = EXIT_FAIL
    except Exception as exc:  # noqa: BLE001 - the exit-code contract covers every path
        print(f"peacocklab: unexpected error: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        code = EXIT_FAIL
    sys.exit(code)


if __name__ == "__main__":
    main()
