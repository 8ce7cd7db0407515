"""Stage runner: models -> spectra -> bounds -> checks, with file emission.

Every run is a pure function of (config, seed): CSV and JSON bytes are
rendered in memory with repr-stable float formatting, then written in one
pass together with a manifest carrying per-file hashes and the config hash.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, plots
from .analysis import (
    converse_property_diagnostic,
    domination_check,
    separation_verdict,
    spectral_functionals,
    transmissibility_check,
)
from .coding import feinstein_bound, random_code_ensemble_error, verdu_han_bound
from .config import ExperimentConfig, parse_config
from .errors import CapExceededError, ConfigError
from .models import DeterministicCoupling, build_channel, build_coupling, build_source, validate_model
from .schedules import resolve_gamma_schedule
from .spectra import exact_spectrum, mc_spectrum, plim_estimate


@dataclass
class OutputFile:
    name: str
    content: bytes


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (tuple, list)):
        return ";".join(str(i) for i in x)
    return str(x)


def _csv(name: str, header, rows, config: ExperimentConfig, seed) -> OutputFile:
    lines = [f"# infospec {__version__} config={config.config_hash()} seed={_fmt(seed)}"]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    return OutputFile(name, ("\n".join(lines) + "\n").encode("utf-8"))


def _json_file(name: str, payload: dict, config: ExperimentConfig, seed) -> OutputFile:
    payload = dict(payload)
    payload.setdefault("config_sha256", config.config_hash())
    payload.setdefault("seed", seed)
    text = json.dumps(payload, sort_keys=True, indent=2, default=_json_default)
    return OutputFile(name, (text + "\n").encode("utf-8"))


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "__dict__"):
        return {k: v for k, v in obj.__dict__.items() if not k.startswith("_")}
    return repr(obj)


def _pmap(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Stage implementations
# ---------------------------------------------------------------------------


def _spectrum_for(config, n, which, source, coupling, channel, seed):
    engine = config.engine
    src = source
    cpl = coupling if which == "information" else None
    chn = channel if which == "information" else None
    if engine in ("auto", "exact"):
        try:
            return exact_spectrum(n, which, source=src, coupling=cpl, channel=chn)
        except CapExceededError:
            if engine == "exact":
                raise
    if config.samples is None or seed is None:
        raise ConfigError([("/mc", "Monte Carlo fallback needed but mc.samples/seed missing")])
    return mc_spectrum(n, which, source=src, coupling=cpl, channel=chn,
                       samples=config.samples, seed=seed)


def _stage_spectrum(config, models, seed, jobs):
    source, channel, coupling = models
    files = []
    summary_rows = []
    for which in config.which:
        spectra = _pmap(
            lambda n: _spectrum_for(config, n, which, source, coupling, channel, seed),
            config.n_grid, jobs,
        )
        rows = []
        for spec in spectra:
            for v, m in zip(spec.values, spec.masses):
                rows.append((spec.n, v, m, spec.mode, spec.seed))
        files.append(_csv(f"spectrum_{which}.csv", ["n", "value", "mass", "mode", "seed"],
                          rows, config, seed))
        upper_name = "h_upper" if which == "entropy" else "i_upper"
        lower_name = "h_lower" if which == "entropy" else "i_lower"
        if len(spectra) >= 2:
            up = plim_estimate(spectra, "p_limsup", config.delta)
            lo = plim_estimate(spectra, "p_liminf", config.delta)
            for (n, q_up), (_, q_lo) in zip(up.trajectory, lo.trajectory):
                summary_rows.append((n, upper_name, config.delta, q_up))
                summary_rows.append((n, lower_name, config.delta, q_lo))
        if config.plots:
            files.append(OutputFile(f"spectrum_{which}.png",
                                    plots.spectrum_figure(spectra, which)))
    if summary_rows:
        files.append(_csv("summary.csv", ["n", "quantity", "delta", "estimate"],
                          summary_rows, config, seed))
    return files


def _bound_rows_csv(name, reports, config, seed):
    rows = [
        (r.n, r.gamma, r.prob_term, r.exp_term, r.bound, r.epsilon, r.mode, r.seed, r.taint)
        for r in reports
    ]
    header = ["n", "gamma", "prob_term", "exp_term", "bound", "epsilon", "mode", "seed", "taint"]
    return _csv(name, header, rows, config, seed)


def _stage_bound_feinstein(config, models, seed, jobs):
    source, channel, coupling = models
    gammas = resolve_gamma_schedule(config.gamma_spec, config.n_grid)
    mode = {"auto": "auto", "exact": "exact", "monte_carlo": "monte_carlo"}[config.engine]

    def one(pair):
        n, gamma = pair
        return feinstein_bound(source, coupling, channel, n, float(gamma),
                               mode=mode, samples=config.samples, seed=seed)

    reports = _pmap(one, list(zip(config.n_grid, gammas)), jobs)
    files = [_bound_rows_csv("bounds_feinstein.csv", reports, config, seed)]
    if config.plots:
        files.append(OutputFile("bounds_feinstein.png",
                                plots.bounds_figure(reports, "random-coding bound")))
    return files


def _decoder_from_config(config, n):
    spec = config.raw.get("decoder", {"kind": "none"})
    kind = spec.get("kind", "none")
    if kind == "none":
        return None
    if kind == "identity":
        return lambda y: tuple(y)
    if kind.startswith("constant:"):
        symbol = int(kind.split(":", 1)[1])
        return lambda y: (symbol,) * n
    if kind == "table":
        table = {tuple(y): tuple(v) for y, v in spec["table"]}
        return lambda y: table[tuple(y)]
    raise ConfigError([("/decoder/kind", f"unknown decoder kind {kind!r}")])


def _stage_bound_converse(config, models, seed, jobs):
    source, channel, coupling = models
    if not isinstance(coupling, DeterministicCoupling):
        raise ConfigError([("/coupling", "converse bound needs a deterministic_map coupling")])
    gammas = resolve_gamma_schedule(config.gamma_spec, config.n_grid)

    def one(pair):
        n, gamma = pair
        return verdu_han_bound(source, channel, n, float(gamma), encoder=coupling,
                               decoder=_decoder_from_config(config, n))

    reports = _pmap(one, list(zip(config.n_grid, gammas)), jobs)
    files = [_bound_rows_csv("bounds_converse.csv", reports, config, seed)]
    if config.plots:
        files.append(OutputFile("bounds_converse.png",
                                plots.bounds_figure(reports, "converse bound")))
    return files


def _stage_simulate(config, models, seed, jobs):
    source, channel, coupling = models
    gammas = resolve_gamma_schedule(config.gamma_spec, config.n_grid)
    mode = config.raw.get("simulate", {}).get("mode", "exact_ensemble")

    def one(pair):
        n, gamma = pair
        try:
            return random_code_ensemble_error(
                source, coupling, channel, n, float(gamma), mode=mode,
                budget=config.codebooks, seed=seed,
            )
        except CapExceededError:
            if mode == "exact_ensemble" and config.samples is not None and seed is not None:
                return random_code_ensemble_error(
                    source, coupling, channel, n, float(gamma), mode="monte_carlo",
                    budget=config.codebooks, seed=seed,
                )
            raise

    reports = _pmap(one, list(zip(config.n_grid, gammas)), jobs)
    files = [_bound_rows_csv("simulate.csv", reports, config, seed)]
    if config.plots:
        files.append(OutputFile("simulate.png",
                                plots.bounds_figure(reports, "threshold-decoder simulation")))
    return files


def _condition_csv(name, report, config, seed):
    rows = [
        (r.n, r.gamma_n, r.c_n, r.term1, r.term2, r.combined, report.mode, report.verdict)
        for r in report.rows
    ]
    header = ["n", "gamma_n", "c_n", "term1", "term2", "combined", "mode", "verdict"]
    return _csv(name, header, rows, config, seed)


def _condition_payload(report):
    return {
        "mode": report.mode,
        "verdict": report.verdict,
        "eps": report.eps,
        "tol": report.tol,
        "slope": report.slope,
        "gamma_schedule": list(report.gamma_schedule),
        "c_schedule": list(report.c_schedule) if report.c_schedule else None,
        "rows": [
            {"n": r.n, "gamma_n": r.gamma_n, "c_n": r.c_n,
             "term1": r.term1, "term2": r.term2, "combined": r.combined}
            for r in report.rows
        ],
        "taint": list(report.taint),
    }


def _stage_check(config, models, seed, jobs, mode):
    source, channel, coupling = models
    opts = config.check_options
    tol = opts.get("tol", 0.01)
    files = []
    if mode in ("direct", "converse"):
        report = transmissibility_check(
            source, coupling, channel, config.n_grid, config.gamma_spec,
            "plus" if mode == "direct" else "minus", eps=0.0, tol=tol,
            mode=config.engine, samples=config.samples, seed=seed,
        )
        files.append(_condition_csv(f"condition_{mode}.csv", report, config, seed))
        files.append(_json_file(f"verdict_{mode}.json", {
            "check": mode, "inputs": config.raw, **_condition_payload(report),
        }, config, seed))
        if config.plots:
            files.append(OutputFile(f"condition_{mode}.png",
                                    plots.condition_figure(report, f"{mode} condition")))
        return files
    if mode == "epsilon":
        payload = {"check": "epsilon", "epsilon": config.epsilon, "inputs": config.raw}
        for sign, tag in (("plus", "direct"), ("minus", "converse")):
            report = transmissibility_check(
                source, coupling, channel, config.n_grid, config.gamma_spec, sign,
                eps=config.epsilon, tol=tol,
                mode=config.engine, samples=config.samples, seed=seed,
            )
            files.append(_condition_csv(f"condition_epsilon_{tag}.csv", report, config, seed))
            payload[tag] = _condition_payload(report)
        files.append(_json_file("verdict_epsilon.json", payload, config, seed))
        return files
    if mode == "domination":
        dom_mode = opts.get("domination_mode", "strict")
        c_spec = config.c_spec
        midpoint_info = None
        if c_spec == "midpoint":
            summary, detail = spectral_functionals(
                source, channel, config.n_grid, config.input_candidates, config.delta,
                engine=config.engine, samples=config.samples, seed=seed,
            )
            c_spec = 0.5 * (summary.h_upper + summary.i_lower)
            midpoint_info = {"r_f": summary.h_upper, "capacity": summary.i_lower,
                             "c_n": c_spec}
        report = domination_check(
            source, coupling, channel, config.n_grid, c_spec, config.gamma_spec,
            mode=dom_mode, eps=config.epsilon, engine=config.engine,
            samples=config.samples, seed=seed, tol=tol,
        )
        files.append(_condition_csv("condition_domination.csv", report, config, seed))
        files.append(_json_file("verdict_domination.json", {
            "check": "domination", "inputs": config.raw, "midpoint": midpoint_info,
            **_condition_payload(report),
        }, config, seed))
        if config.plots:
            files.append(OutputFile("condition_domination.png",
                                    plots.condition_figure(report, f"{dom_mode} domination")))
        return files
    if mode == "separation":
        verdict = separation_verdict(
            source, channel, config.n_grid, config.input_candidates,
            delta=config.delta, gap_tol=opts.get("gap_tol", 0.05),
            engine=config.engine, samples=config.samples, seed=seed,
            confirm=True, gamma_schedule=config.gamma_spec, tol=tol,
        )
        payload = {
            "check": "separation",
            "verdict": verdict.verdict,
            "reason": verdict.reason,
            "r_f": verdict.r_f,
            "capacity": verdict.capacity,
            "c_n": verdict.c_n,
            "best_input": None if verdict.best_input is None
            else list(verdict.best_input.probs),
            "flags": list(verdict.summary.flags),
            "inputs": config.raw,
        }
        if verdict.domination is not None:
            payload["domination"] = _condition_payload(verdict.domination)
            files.append(_condition_csv("condition_separation_confirm.csv",
                                        verdict.domination, config, seed))
        files.append(_json_file("verdict_separation.json", payload, config, seed))
        if config.plots:
            files.append(OutputFile("functionals_separation.png",
                                    plots.functional_figure(verdict.summary,
                                                            "rate vs capacity proxies")))
        return files
    raise ConfigError([("/stages", f"unknown check mode {mode!r}")])


def _stage_validate(config, models, seed):
    source, channel, coupling = models
    probe = tuple(n for n in config.n_grid if n <= 8) or (1, 2)
    payload = {
        "source": validate_model(source, probe).__dict__,
        "channel": validate_model(channel, probe).__dict__,
        "coupling": validate_model(coupling, probe).__dict__,
    }
    return [_json_file("validate.json", payload, config, seed)]


# ---------------------------------------------------------------------------
# Canned examples
# ---------------------------------------------------------------------------


def alternating_example_config(n_grid, samples=None, seed=0, plots_on=True) -> ExperimentConfig:
    raw = {
        "source": {"kind": "alternating_example"},
        "channel": {"kind": "alternating_example"},
        "coupling": {"kind": "deterministic_map", "params": {"map": "identity"}},
        "n_grid": list(n_grid),
        "stages": ["example:alternating"],
        "plots": plots_on,
    }
    if samples:
        raw["mc"] = {"samples": samples, "seed": seed}
    return parse_config(raw)


def mixed_example_config(n_grid, samples=100_000, seed=0, plots_on=True) -> ExperimentConfig:
    raw = {
        "source": {
            "kind": "mixed",
            "alphabet": [0, 1],
            "params": {
                "weights": [0.5, 0.5],
                "components": [
                    {"kind": "iid", "params": {"probs": [0.9, 0.1]}},
                    {"kind": "iid", "params": {"probs": [0.6, 0.4]}},
                ],
            },
        },
        "channel": {"kind": "dmc", "params": {"crossover": 0.05}},
        "coupling": {"kind": "independent", "params": {"per_letter": [0.5, 0.5]}},
        "n_grid": list(n_grid),
        "mc": {"samples": samples, "seed": seed},
        "stages": ["example:mixed"],
        "plots": plots_on,
    }
    return parse_config(raw)


def _stage_example_alternating(config, seed, jobs):
    source = build_source("alternating_example")
    channel = build_channel("alternating_example")
    uniform = build_coupling("independent", per_letter=[0.5, 0.5])
    ns = config.n_grid
    ent = [exact_spectrum(n, "entropy", source=source) for n in ns]
    info = [exact_spectrum(n, "information", source=None, coupling=uniform, channel=channel)
            for n in ns]
    files = []
    rows = [(s.n, v, m, s.mode, s.seed) for s in ent for v, m in zip(s.values, s.masses)]
    files.append(_csv("spectrum_entropy.csv", ["n", "value", "mass", "mode", "seed"],
                      rows, config, seed))
    rows = [(s.n, v, m, s.mode, s.seed) for s in info for v, m in zip(s.values, s.masses)]
    files.append(_csv("spectrum_information.csv", ["n", "value", "mass", "mode", "seed"],
                      rows, config, seed))
    delta = config.delta
    summary_rows = []
    for s in ent:
        summary_rows.append((s.n, "h_upper", delta, s.quantile(1 - delta)))
    for s in info:
        summary_rows.append((s.n, "i_lower", delta, s.quantile(delta)))
    files.append(_csv("summary.csv", ["n", "quantity", "delta", "estimate"],
                      summary_rows, config, seed))
    # the parity-matched zero-error code
    code_reports = []
    for n in ns:
        if n % 2 == 0:
            encoder = DeterministicCoupling.identity()
            decoder = lambda y: tuple(y)
        else:
            encoder = DeterministicCoupling.constant(0)
            decoder = (lambda m: (lambda y: (0,) * m))(n)
        code_reports.append(
            verdu_han_bound(source, channel, n, 1.0 / math.sqrt(n),
                            encoder=encoder, decoder=decoder)
        )
    files.append(_bound_rows_csv("bounds_converse.csv", code_reports, config, seed))
    verdict = separation_verdict(source, channel, ns, confirm=False, delta=delta)
    files.append(_json_file("verdict_separation.json", {
        "check": "separation",
        "verdict": verdict.verdict,
        "reason": verdict.reason,
        "r_f": verdict.r_f,
        "capacity": verdict.capacity,
        "zero_error_epsilons": [r.epsilon for r in code_reports],
        "inputs": config.raw,
    }, config, seed))
    if config.plots:
        files.append(OutputFile("spectrum_entropy.png",
                                plots.spectrum_figure(ent, "entropy")))
        files.append(OutputFile("functionals.png",
                                plots.functional_figure(verdict.summary,
                                                        "alternating example")))
    return files


def _stage_example_mixed(config, seed, jobs):
    source, channel, coupling = config.build_models()
    ns = config.n_grid
    samples = config.samples or 100_000
    h1 = -(0.9 * math.log(0.9) + 0.1 * math.log(0.1))
    h2 = -(0.6 * math.log(0.6) + 0.4 * math.log(0.4))
    spectra = [
        mc_spectrum(n, "entropy", source=source, samples=samples, seed=seed) for n in ns
    ]
    files = []
    rows = [(s.n, v, m, s.mode, s.seed) for s in spectra for v, m in zip(s.values, s.masses)]
    files.append(_csv("spectrum_entropy.csv", ["n", "value", "mass", "mode", "seed"],
                      rows, config, seed))
    top = spectra[-1]
    gap = converse_property_diagnostic(source, ns, "source_strong",
                                       engine="monte_carlo", samples=samples, seed=seed)
    evens = [n for n in ns if n % 2 == 0]
    odds = [n for n in ns if n % 2 == 1]
    semi = None
    if len(evens) >= 2 and len(odds) >= 2:
        semi = converse_property_diagnostic(
            source, ns, "semi_strong_source", subsequences=[evens, odds],
            engine="monte_carlo", samples=samples, seed=seed,
        )
    payload = {
        "example": "mixed",
        "component_entropies": [h1, h2],
        "mass_near_low_mode": top.mass_within(h1, 0.02),
        "mass_near_high_mode": top.mass_within(h2, 0.02),
        "strong_converse_gap": gap.gap,
        "strong_converse_passes": gap.passes,
        "semi_strong": None if semi is None else {
            "passes": semi.passes,
            "rows": [{"subsequence": list(s), "p_limsup": v} for s, v in semi.rows],
        },
        "inputs": config.raw,
    }
    files.append(_json_file("example_mixed.json", payload, config, seed))
    if config.plots:
        files.append(OutputFile(
            "spectrum_entropy.png",
            plots.spectrum_figure(spectra, "entropy",
                                  reference=[(h1, "h(0.1)"), (h2, "h(0.4)")]),
        ))
    return files


# ---------------------------------------------------------------------------
# Suite driver
# ---------------------------------------------------------------------------


def run_suite(config: ExperimentConfig, stages=None, seed=None, jobs: int = 1):
    """Execute the requested stages and return the rendered output files."""
    stages = list(stages) if stages is not None else config.stages
    seed = seed if seed is not None else config.seed
    files: list[OutputFile] = []
    models = None
    for stage in stages:
        if stage.startswith("example:"):
            if stage == "example:alternating":
                files.extend(_stage_example_alternating(config, seed, jobs))
            else:
                files.extend(_stage_example_mixed(config, seed, jobs))
            continue
        if models is None:
            models = config.build_models()
        if stage == "validate":
            files.extend(_stage_validate(config, models, seed))
        elif stage == "spectrum":
            files.extend(_stage_spectrum(config, models, seed, jobs))
        elif stage == "bound:feinstein":
            files.extend(_stage_bound_feinstein(config, models, seed, jobs))
        elif stage == "bound:converse":
            files.extend(_stage_bound_converse(config, models, seed, jobs))
        elif stage == "simulate":
            files.extend(_stage_simulate(config, models, seed, jobs))
        elif stage.startswith("check:"):
            files.extend(_stage_check(config, models, seed, jobs, stage.split(":", 1)[1]))
        else:
            raise ConfigError([("/stages", f"unknown stage {stage!r}")])
    return files


def emit_outputs(files, directory, config_hash=None, seed=None) -> dict:
    """Write rendered files plus a manifest; returns the manifest payload.

    The timestamp is informational only and excluded from all hashes.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for f in files:
        (directory / f.name).write_bytes(f.content)
    manifest = {
        "tool": "infospec",
        "version": __version__,
        "config_sha256": config_hash,
        "seed": seed,
        "files": [
            {
                "name": f.name,
                "sha256": hashlib.sha256(f.content).hexdigest(),
                "bytes": len(f.content),
            }
            for f in sorted(files, key=lambda f: f.name)
        ],
        "generated_at": datetime.now(timezone.utc).isoformat(),
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return manifest


def run_and_emit(config: ExperimentConfig, out_dir, stages=None, seed=None, jobs=1) -> dict:
    seed = seed if seed is not None else config.seed
    files = run_suite(config, stages=stages, seed=seed, jobs=jobs)
    return emit_outputs(files, out_dir, config_hash=config.config_hash(), seed=seed)
