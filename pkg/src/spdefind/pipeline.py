"""End-to-end orchestration: simulate, discover, evaluate, and the benchmark runs."""

from __future__ import annotations

import json
import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import PRESETS, ExperimentConfig, preset_config, serialize_config
from .exceptions import BlowUp, ConfigError, MissingTruth, NonFinite, SpdeFindError
from .fileio import ModelFile, ModelTerm, read_model, write_model, write_prediction_csv
from .kramers_moyal import km_targets
from .library import TermDescriptor, build_dictionary, evaluate_terms, parse_term_name
from .metrics import GroundTruth, diffusion_amplitude, fpr, relative_l2
from .simulate import (EnsembleField, Grid1d, SpdeModel, TimeSpec, _ImplicitOperator,
                       ensemble_rng, sigmoid_front, simulate_ensemble, worker_count)
from .ssvb import SparsePosterior, refine_support, vb_fit
from .stlsq import stlsq_iterations

COMPONENTS = ("drift", "diffusion")

log = logging.getLogger(__name__)

# published reference values per case: (e-SINDy L2, VB L2, e-SINDy FPR, VB FPR)
REFERENCE_TABLE = {
    "allen-cahn": (0.0652, 0.0498, 0.0, 0.0),
    "nagumo": (1.5997, 0.1393, 11.4286, 0.0),
    "heat": (1.1586, 0.0587, 7.1428, 0.0),
}


@contextmanager
def _stage(name, timings):
    """Time a pipeline stage and tag escaping errors with its name."""
    t0 = time.perf_counter()
    try:
        yield
    except (SpdeFindError, ValueError, ArithmeticError) as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
        raise
    finally:
        elapsed = time.perf_counter() - t0
        timings[name] = timings.get(name, 0.0) + elapsed
        log.info("%s finished in %.2f s", name, elapsed)


# ---------------------------------------------------------------- simulate

def simulate_from_config(config: ExperimentConfig) -> EnsembleField:
    return simulate_ensemble(config.model(), config.grid(), config.time(), config.ensembles,
                             sigmoid_front, config.seed,
                             scale_noise_by_sqrt_dx=config.scale_noise_by_sqrt_dx,
                             blowup_bound=config.blowup_bound)


def check_field_matches(data: EnsembleField, config: ExperimentConfig) -> EnsembleField:
    """Re-attach the config's grid to a loaded field after checking nx, dx and dt agree."""
    grid, tspec = config.grid(), config.time()
    if data.grid.n_nodes != grid.n_nodes:
        raise ConfigError(f"field has nx={data.grid.n_nodes}, config says {grid.n_nodes}", key="grid.nx")
    if not math.isclose(data.dx, grid.dx, rel_tol=1e-9):
        raise ConfigError(f"field has dx={data.dx!r}, config grid gives {grid.dx!r}", key="grid.length")
    if not math.isclose(data.dt, tspec.dt, rel_tol=1e-12):
        raise ConfigError(f"field has dt={data.dt!r}, config says {tspec.dt!r}", key="time.dt")
    return EnsembleField(data.u, grid, TimeSpec((data.u.shape[1] - 1) * tspec.dt, tspec.dt),
                         data.seed, data.meta)


# ---------------------------------------------------------------- discover

@dataclass
class ComponentFit:
    posterior: SparsePosterior
    vb_iters: int
    refined: bool
    stlsq_coef: np.ndarray
    stlsq_active: np.ndarray
    stlsq_iters: int


@dataclass
class Discovery:
    terms: list
    fits: dict
    timings: dict = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.terms]

    def vb_model(self, component) -> ModelFile:
        return ModelFile.from_posterior(component, self.fits[component].posterior)

    def stlsq_model(self, component) -> ModelFile:
        f = self.fits[component]
        return ModelFile.from_stlsq(component, self.names, f.stlsq_coef, f.stlsq_active, f.stlsq_iters)


def _unscale(posterior: SparsePosterior, scale) -> SparsePosterior:
    return replace(posterior, coef_mean=posterior.coef_mean / scale,
                   coef_cov=posterior.coef_cov / np.outer(scale, scale))


def fit_component(D, y, config: ExperimentConfig, terms) -> ComponentFit:
    """STLSQ (baseline and initializer), VB, then optional support refinement."""
    hyper = config.hyper()
    coef, active, n_ls = stlsq_iterations(D, y, config.stlsq_config())
    w_init = np.where(active, config.init_on, config.init_off)
    state, post = vb_fit(D, y, hyper, w_init, terms)
    iters = state.n_iter
    if config.refine:
        state, post = refine_support(D, y, state, hyper, terms, on=config.init_on, off=config.init_off)
    return ComponentFit(post, iters, config.refine, coef, active, n_ls)


def discover(data: EnsembleField, config: ExperimentConfig) -> Discovery:
    timings: dict = {}
    terms = config.terms()
    with _stage("dictionary", timings):
        D = build_dictionary(data, terms).matrix
    with _stage("targets", timings):
        targets = km_targets(data)
        if not (np.all(np.isfinite(targets.y_drift)) and np.all(np.isfinite(targets.y_diff))):
            raise NonFinite("Kramers-Moyal targets contain non-finite values")
    scale = np.ones(D.shape[1])
    if config.standardize:
        scale = D.std(axis=0)
        scale[(scale == 0) | ~np.isfinite(scale)] = 1.0
        scale[[k for k, t in enumerate(terms) if t == TermDescriptor(0, 0)]] = 1.0
    Ds = D / scale
    ys = {"drift": targets.y_drift, "diffusion": targets.y_diff}

    def run(component):
        t0 = time.perf_counter()
        try:
            fit = fit_component(Ds, ys[component], config, terms)
        except (SpdeFindError, ValueError, ArithmeticError) as exc:
            exc.stage = f"discover-{component}"
            raise
        fit.posterior = _unscale(fit.posterior, scale)
        fit.stlsq_coef = fit.stlsq_coef / scale
        return fit, time.perf_counter() - t0

    # the two regressions share nothing, so they can run side by side
    if worker_count() > 1:
        with ThreadPoolExecutor(2) as pool:
            results = dict(zip(COMPONENTS, pool.map(run, COMPONENTS)))
    else:
        results = {c: run(c) for c in COMPONENTS}
    fits = {c: results[c][0] for c in COMPONENTS}
    for c in COMPONENTS:
        timings[f"discover-{c}"] = results[c][1]
    return Discovery(terms, fits, timings)


# ---------------------------------------------------------------- metrics

def score(drift: ModelFile, diffusion: ModelFile, names, truth: GroundTruth) -> dict:
    """Coefficient error and false-positive metrics for one drift/diffusion pair.

    ``fpr`` counts false positives of both components against the size of
    one dictionary; the per-component rates are reported alongside.
    """
    bd, bg = drift.coef_vector(names), diffusion.coef_vector(names)
    sd, sg = drift.support(names), diffusion.support(names)
    K = len(names)
    false_pos = int(np.count_nonzero(sd & ~truth.drift_support) + np.count_nonzero(sg & ~truth.diffusion_support))
    out = {
        "l2_stacked": relative_l2(truth.stacked, np.concatenate([bd, bg])),
        "l2_drift": relative_l2(truth.drift, bd),
        "fpr": 100.0 * false_pos / K,
        "fpr_drift": fpr(sd, truth.drift_support),
        "fpr_diffusion": fpr(sg, truth.diffusion_support),
        "drift_support_exact": bool(np.array_equal(sd, truth.drift_support)),
        "diffusion_support_exact": bool(np.array_equal(sg, truth.diffusion_support)),
        "diffusion_amplitude": None,
    }
    if "1" in diffusion.names:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                out["diffusion_amplitude"] = diffusion_amplitude(bg[list(names).index("1")])
            except SpdeFindError:
                out["diffusion_amplitude"] = None
    return out


def ground_truth(config: ExperimentConfig, terms) -> GroundTruth:
    return GroundTruth.from_model(config.truth_model(), terms, config.grid(),
                                  config.scale_noise_by_sqrt_dx)


# ---------------------------------------------------------------- prediction

def _split_terms(model: ModelFile):
    terms = [parse_term_name(n) for n in model.names]
    coef = np.array([t.mean for t in model.terms], dtype=float)
    return terms, coef


def predict_ensemble(drift: ModelFile, diffusion: ModelFile, grid: Grid1d, tspec: TimeSpec,
                     n_ensembles: int, seed: int, u0=sigmoid_front, *,
                     scale_noise_by_sqrt_dx=False, blowup_bound=1e6) -> np.ndarray:
    """Simulate the discovered SPDE with the same semi-implicit scheme as the data.

    A positive ``u_xx`` coefficient is treated implicitly; every other drift
    term and the noise amplitude ``sqrt(max(g^2, 0))`` are explicit.
    Returns the ensemble tensor ``(n_ensembles, N_t, N_x)``.
    """
    dterms, dcoef = _split_terms(drift)
    gterms, gcoef = _split_terms(diffusion)
    lap = TermDescriptor(0, 2)
    eps = 0.0
    if lap in dterms and dcoef[dterms.index(lap)] > 0:
        k = dterms.index(lap)
        eps = float(dcoef[k])
        dterms, dcoef = dterms[:k] + dterms[k + 1:], np.delete(dcoef, k)
    op = _ImplicitOperator(grid, eps, tspec.dt)
    nt, nx, dt = tspec.n_steps, grid.n_nodes, tspec.dt
    scale = 1.0 / np.sqrt(grid.dx) if scale_noise_by_sqrt_dx else 1.0
    x0 = np.asarray(u0(grid.x) if callable(u0) else u0, dtype=float)
    noise = np.stack([ensemble_rng(seed, s).standard_normal((nt - 1, nx)) for s in range(n_ensembles)])
    noise *= np.sqrt(dt) * scale
    u = np.empty((n_ensembles, nt, nx))
    cur = np.broadcast_to(x0, (n_ensembles, nx)).copy()
    u[:, 0] = cur

    def combo(terms, coef, state):
        if not terms:
            return np.zeros_like(state)
        return evaluate_terms(state, grid, terms) @ coef

    for n in range(nt - 1):
        g = np.sqrt(np.clip(combo(gterms, gcoef, cur), 0.0, None))
        cur = op.solve(cur + dt * combo(dterms, dcoef, cur) + g * noise[:, n])
        if not np.all(np.abs(cur) <= blowup_bound):
            raise BlowUp(f"prediction of the discovered model exceeded {blowup_bound:g} at step {n + 1}")
        u[:, n + 1] = cur
    return u


def truth_model_file(model: SpdeModel, component: str) -> ModelFile:
    """The generating SPDE written as a model file, for reference predictions."""
    if component == "drift":
        terms = [ModelTerm("u_xx", 1.0, model.diffusivity, 0.0)] if model.diffusivity else []
        terms += [ModelTerm(TermDescriptor(p, 0).name, 1.0, c, 0.0) for p, c in model.drift_poly if c]
    else:
        terms = [ModelTerm("1", 1.0, model.noise_amplitude**2, 0.0)] if model.noise_amplitude else []
    return ModelFile(component, terms)


# ---------------------------------------------------------------- reports

def _term_records(model: ModelFile):
    return [{"name": t.name, "pip": t.pip, "mean": t.mean, "std": t.std} for t in model.terms]


@dataclass
class RunReport:
    """Self-contained outcome of one run.  Wall-clock timings are kept out of
    it (see :func:`write_timings`) so that equal seeds give equal bytes."""

    config_text: str
    models: dict
    metrics: dict | None = None
    prediction: dict | None = None
    baseline_metrics: dict | None = None
    version: str = __version__

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "config": self.config_text,
            "drift": _term_records(self.models["drift"]),
            "diffusion": _term_records(self.models["diffusion"]),
            "drift_fit": {"elbo": self.models["drift"].elbo, "iters": self.models["drift"].iters},
            "diffusion_fit": {"elbo": self.models["diffusion"].elbo,
                              "iters": self.models["diffusion"].iters},
            "baseline": ({c: _term_records(self.models[f"{c}_stlsq"]) for c in COMPONENTS}
                         if "drift_stlsq" in self.models else None),
            "metrics": self.metrics,
            "baseline_metrics": self.baseline_metrics,
            "prediction": self.prediction,
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True, allow_nan=True) + "\n"

    def to_text(self) -> str:
        lines = [f"spdefind {self.version}"]
        for c in COMPONENTS:
            lines.append(f"[{c}] VB  (elbo {self.models[c].elbo:.6f}, {self.models[c].iters} sweeps)")
            lines += [f"  {t.name:<12} pip={t.pip:.4f} mean={t.mean:+.6f} std={t.std:.6f}"
                      for t in self.models[c].terms] or ["  (no terms)"]
            if f"{c}_stlsq" in self.models:
                lines.append(f"[{c}] e-SINDy")
                lines += [f"  {t.name:<12} coef={t.mean:+.6f}"
                          for t in self.models[f"{c}_stlsq"].terms] or ["  (no terms)"]
        for label, m in (("VB", self.metrics), ("e-SINDy", self.baseline_metrics)):
            if m:
                amp = m["diffusion_amplitude"]
                lines.append(f"{label}: L2 stacked {m['l2_stacked']:.4f}, drift {m['l2_drift']:.4f}, "
                             f"FPR {m['fpr']:.4f}%, amplitude "
                             f"{'n/a' if amp is None else format(amp, '.4f')}")
        if self.prediction:
            lines.append(f"prediction: relative error of the mean field "
                         f"{self.prediction['mean_field_rel_error']:.4f} over "
                         f"{self.prediction['ensembles']} ensembles")
        return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_report(out_dir, report: RunReport, name: str = "report.json") -> None:
    """Write the JSON report plus a plain-text rendering with a ``.txt`` suffix."""
    path = Path(out_dir) / name
    path.write_text(report.to_json())
    path.with_suffix(".txt").write_text(report.to_text())


def write_timings(out_dir, timings: dict) -> None:
    payload = {k: round(v, 6) for k, v in sorted(timings.items())}
    (Path(out_dir) / "timings.json").write_text(json.dumps(payload, indent=2) + "\n")


def model_filenames():
    return {"drift": "drift.spm", "diffusion": "diffusion.spm",
            "drift_stlsq": "drift_stlsq.spm", "diffusion_stlsq": "diffusion_stlsq.spm"}


def save_discovery(discovery: Discovery, config: ExperimentConfig, out_dir) -> RunReport:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    models = {}
    for c in COMPONENTS:
        models[c] = discovery.vb_model(c)
        models[f"{c}_stlsq"] = discovery.stlsq_model(c)
    for key, fname in model_filenames().items():
        write_model(out_dir / fname, models[key])
    report = RunReport(serialize_config(config), models)
    try:
        truth = ground_truth(config, discovery.terms)
    except MissingTruth:
        truth = None
    if truth is not None:
        report.metrics = score(models["drift"], models["diffusion"], discovery.names, truth)
        report.baseline_metrics = score(models["drift_stlsq"], models["diffusion_stlsq"],
                                        discovery.names, truth)
    write_report(out_dir, report)
    write_timings(out_dir, discovery.timings)
    return report


# ---------------------------------------------------------------- evaluate

def load_models(models_dir) -> dict:
    models_dir = Path(models_dir)
    models = {}
    for key, fname in model_filenames().items():
        path = models_dir / fname
        if path.exists() or key in COMPONENTS:
            models[key] = read_model(path)
    for c in COMPONENTS:
        if models[c].component != c:
            raise ConfigError(f"{models_dir / model_filenames()[c]} holds a "
                              f"{models[c].component} model")
    return models


def evaluate(models: dict, config: ExperimentConfig, out_dir, timings=None,
             report_name: str = "report.json") -> RunReport:
    """Score discovered models against the preset truth and export predictions."""
    timings = {} if timings is None else timings
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    terms = config.terms()
    names = [t.name for t in terms]
    with _stage("evaluate-metrics", timings):
        truth = ground_truth(config, terms)
        extra = [n for c in COMPONENTS for n in models[c].names if n not in names]
        if extra:
            raise ConfigError(f"model terms {extra} are outside the configured dictionary",
                              key="dictionary.poly_max")
        report = RunReport(serialize_config(config), models)
        report.metrics = score(models["drift"], models["diffusion"], names, truth)
        if "drift_stlsq" in models:
            report.baseline_metrics = score(models["drift_stlsq"], models["diffusion_stlsq"], names, truth)
    grid, tspec = config.grid(), config.time()
    common = dict(scale_noise_by_sqrt_dx=config.scale_noise_by_sqrt_dx, blowup_bound=config.blowup_bound)
    with _stage("evaluate-predict", timings):
        pred = predict_ensemble(models["drift"], models["diffusion"], grid, tspec,
                                config.eval_ensembles, config.eval_seed, **common)
        ref_model = config.truth_model()
        ref = predict_ensemble(truth_model_file(ref_model, "drift"),
                               truth_model_file(ref_model, "diffusion"), grid, tspec,
                               config.eval_ensembles, config.eval_seed, **common)
        pm, ps, rm, rs = pred.mean(0), pred.std(0), ref.mean(0), ref.std(0)
        write_prediction_csv(out_dir / "prediction.csv", grid.x, tspec.t, pm, ps)
        write_prediction_csv(out_dir / "prediction_truth.csv", grid.x, tspec.t, rm, rs)
        report.prediction = {
            "ensembles": config.eval_ensembles,
            "mean_field_rel_error": float(np.linalg.norm(pm - rm) / np.linalg.norm(rm)),
            "std_field_rel_error": float(np.linalg.norm(ps - rs) / max(np.linalg.norm(rs), 1e-300)),
        }
    write_report(out_dir, report, report_name)
    return report


# ---------------------------------------------------------------- benchmark runs

def run_case(case: str, out_dir, seed: int | None = None, ensembles: int | None = None,
             **overrides) -> tuple[RunReport, dict]:
    """Simulate, discover and evaluate one preset; returns the report and stage timings."""
    if seed is not None:
        overrides["seed"] = seed
    if ensembles is not None:
        overrides["ensembles"] = ensembles
    config = preset_config(case, **overrides)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings: dict = {}
    t0 = time.perf_counter()
    with _stage("simulate", timings):
        data = simulate_from_config(config)
    found = discover(data, config)
    timings.update(found.timings)
    del data
    save_discovery(found, config, out_dir)
    (out_dir / "config.txt").write_text(serialize_config(config))
    models = load_models(out_dir)
    report = evaluate(models, config, out_dir, timings)
    timings["total"] = time.perf_counter() - t0
    write_timings(out_dir, timings)
    return report, timings


def comparison_table(reports: dict) -> str:
    """Markdown table of VB and e-SINDy metrics next to the published values."""
    head = ("| case | VB L2 | published VB L2 | VB FPR % | e-SINDy L2 | published e-SINDy L2 | "
            "e-SINDy FPR % | published e-SINDy FPR % | VB drift-only L2 |\n"
            "|---|---|---|---|---|---|---|---|---|\n")
    rows = []
    for case, rep in reports.items():
        vb, base = rep.metrics, rep.baseline_metrics
        p_base, p_vb, p_bfpr, _ = REFERENCE_TABLE[case]
        rows.append(f"| {case} | {vb['l2_stacked']:.4f} | {p_vb:.4f} | {vb['fpr']:.4f} | "
                    f"{base['l2_stacked']:.4f} | {p_base:.4f} | {base['fpr']:.4f} | {p_bfpr:.4f} | "
                    f"{vb['l2_drift']:.4f} |")
    return head + "\n".join(rows) + "\n"


def run_paper(case: str, out_dir, seed: int | None = None, ensembles: int | None = None) -> dict:
    cases = PRESETS if case == "all" else (case,)
    if case != "all" and case not in PRESETS:
        raise ConfigError(f"unknown case {case!r}; expected one of {', '.join(PRESETS)} or all")
    out_dir = Path(out_dir)
    reports = {}
    for c in cases:
        reports[c], _ = run_case(c, out_dir / c, seed, ensembles)
    (out_dir / "comparison.md").write_text(comparison_table(reports))
    return reports
