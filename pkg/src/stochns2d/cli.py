"""``stoch-ns2d`` command line: run experiments, write artifacts, replay manifests."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import tempfile
import time
from dataclasses import asdict
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import checkpoint
from .config import EXPERIMENTS, ConfigError, RunConfig
from .ensemble import run_ensemble
from .forcing import A_D_probability, ou_sup_tail_estimate
from .harness import (EventSpec, HarnessError, LadderSpec, Numerics, lemma1_tail, exp_moment_check,
                      mode_time_averages, proposition_escape, result_document, spectrum_bound_report,
                      stationary_snapshots, time_average_mode, transition_estimate)
from .integrator import CertificationError, NumericalError, StepParams, evolve
from .lattice import (FieldError, VorticityField, decaying_profile, energy_spectrum, enstrophy, region_mask,
                      saturating_profile)
from .nonlinear import convolution_direct, convolution_fft, quadratic_invariants
from .stats import digest

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CERTIFICATION, EXIT_REPLAY = 0, 2, 3, 4, 5
OUT_ENV = "STOCH_NS2D_OUT"
MANIFEST = "manifest.json"
ERROR_RECORD = "error.json"


class Artifacts:
    """Collects files written into one output directory."""

    def __init__(self, root: Path):
        self.root = root
        self.names: list[str] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.names.append(name)
        return p

    def json(self, name: str, doc) -> None:
        self.path(name).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_plain) + "\n")

    def csv(self, name: str, header, rows) -> None:
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])

    def field(self, name: str, f: VorticityField) -> None:
        checkpoint.save(f, self.path(name))


def _plain(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer, np.floating, np.bool_)):
        return x.item()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not serialisable: {type(x)!r}")


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _initial_field(cfg: RunConfig) -> VorticityField:
    ph = cfg.physics
    if ph.initial == "zero":
        return VorticityField.zeros(ph.k_max)
    if ph.initial == "pair":
        return VorticityField.from_modes(ph.k_max, {tuple(ph.pair): ph.pair_amplitude})
    if ph.initial == "decaying":
        return decaying_profile(ph.k_max, ph.Phi0)
    if ph.initial == "saturating":
        return saturating_profile(ph.k_max, cfg.norm_params())
    rng = np.random.default_rng([cfg.mc.seed, 0x1F1E1D])
    target = ph.Phi0 if ph.Phi0 > 0 else None
    return VorticityField.random(ph.k_max, rng, enstrophy_target=target)


def _numerics(cfg: RunConfig) -> Numerics:
    nu = cfg.numerics
    return Numerics(nu.h, nu.order, nu.nonlinear, cfg.mc.threads, cfg.mc.chunk_size)


def _step_params(cfg: RunConfig) -> StepParams:
    nu = cfg.numerics
    return StepParams(nu.h, cfg.physics.delta, nu.tau_mode, nu.picard_max_iter, nu.picard_tol, nu.order,
                      nu.nonlinear, nu.picard_grid)


def _point_docs(cfg, kind, grid_name, grid, results, extra, wall):
    docs = []
    for x, res in zip(grid, results):
        params = dict(extra)
        params[grid_name] = x
        docs.append(result_document(EventSpec(kind, params), res, wall))
    return docs


def _curve_rows(grid, results):
    return [(x, r.n_traj, r.n_hits, r.p_hat, r.ci95[0], r.ci95[1]) for x, r in zip(grid, results)]


CURVE_HEADER_TAIL = ["n_traj", "n_hits", "p_hat", "ci_lo", "ci_hi"]


def exp_simulate(cfg: RunConfig, out: Artifacts) -> None:
    spec, p = cfg.noise_spec(), cfg.norm_params()
    omega0 = _initial_field(cfg)
    step = _step_params(cfg)
    fmt = cfg.io.checkpoint_format

    def save(i, f):
        out.field(f"checkpoints/step_{i:07d}.{fmt}", f)

    traj = evolve(omega0, cfg.numerics.T, spec, p, step, cfg.mc.seed, sample_every=cfg.numerics.sample_every,
                  D_grid=cfg.experiment.D_grid, checkpoint=save, checkpoint_every=cfg.io.checkpoint_every)
    keys = list(traj.observables)
    rows = [[t] + [traj.observables[k][i] for k in keys] for i, t in enumerate(traj.times)]
    out.csv("trajectory.csv", ["t"] + keys, rows)
    out.field(f"final.{fmt}", traj.fields[-1])
    if traj.certificates:
        out.json("certificates.json", [_cert_doc(c) for c in traj.certificates])


def _cert_doc(c) -> dict:
    d = asdict(c)
    d["max_ratio"] = c.max_ratio
    d["lemma3_ok"] = c.lemma3_ok
    return d


def exp_picard_certify(cfg: RunConfig, out: Artifacts) -> None:
    cfg.numerics.tau_mode = "certified"
    exp_simulate(cfg, out)


def exp_ensemble(cfg: RunConfig, out: Artifacts) -> None:
    spec, p, num = cfg.noise_spec(), cfg.norm_params(), _numerics(cfg)
    a0 = _initial_field(cfg).amplitudes
    n = int(round(cfg.numerics.T / num.h))
    every = cfg.numerics.sample_every
    D_grid = cfg.experiment.D_grid or (p.D,)

    def record(j, t, a):
        rec = {"phi": enstrophy(a)}
        for i, D in enumerate(D_grid):
            rec[f"in_{i}"] = region_mask(a, p.r, p.alpha, D)
        return rec

    steps = sorted(set(range(0, n + 1, every)) | {n})
    res = run_ensemble(num.stepper(spec.k_max), spec, a0, n_steps=n, n_traj=cfg.mc.n_traj, seed=cfg.mc.seed,
                       record=record, record_steps=steps, threads=num.threads, chunk_size=num.chunk_size)
    phi = res["phi"]
    header = ["t", "phi_mean", "phi_std"] + [f"p_in_U_{D:g}" for D in D_grid]
    rows = []
    for c, t in enumerate(res["times"]):
        rows.append([t, phi[:, c].mean(), phi[:, c].std()] + [res[f"in_{i}"][:, c].mean()
                                                               for i in range(len(D_grid))])
    out.csv("ensemble.csv", header, rows)
    out.csv("final_enstrophy.csv", ["trajectory", "phi"], [(i, v) for i, v in enumerate(phi[:, -1])])


def exp_verify_conservation(cfg: RunConfig, out: Artifacts) -> None:
    K = cfg.physics.k_max
    rng = np.random.default_rng([cfg.mc.seed, 0xC0A5])
    rows = []
    for i in range(cfg.experiment.n_fields):
        f = VorticityField.random(K, rng)
        b = convolution_fft(f)
        d = convolution_direct(f)
        ens, eng = quadratic_invariants(f, b)
        phi = enstrophy(f)
        dev = float(np.max(np.abs(b - d)) / max(np.max(np.abs(d)), np.finfo(float).tiny))
        rows.append((i, phi, ens, eng, abs(ens) / phi ** 1.5, abs(eng) / phi ** 1.5, dev))
    out.csv("conservation.csv", ["index", "phi", "enstrophy_flux", "energy_flux", "enstrophy_flux_rel",
                                 "energy_flux_rel", "oracle_rel_dev"], rows)
    rel = max(max(r[4], r[5]) for r in rows)
    out.json("conservation.json", {"k_max": K, "n_fields": len(rows), "max_flux_rel": rel,
                                   "max_enstrophy_flux_rel": max(r[4] for r in rows),
                                   "max_oracle_rel_dev": max(r[6] for r in rows), "tolerance": 1e-10,
                                   "passed": rel <= 1e-10})


def exp_lemma1(cfg: RunConfig, out: Artifacts) -> None:
    spec, num, ex = cfg.noise_spec(), _numerics(cfg), cfg.experiment
    omega0 = _initial_field(cfg) if cfg.physics.initial != "zero" else None
    D2 = ex.D2_grid or tuple(spec.R * x for x in (0.25, 0.5, 0.75, 1.0))
    t0 = time.perf_counter()
    tab = lemma1_tail(cfg.physics.Phi0, ex.t, D2, spec, cfg.mc.n_traj, cfg.mc.seed, num, omega0)
    wall = time.perf_counter() - t0
    out.csv("tail.csv", ["D2"] + CURVE_HEADER_TAIL, _curve_rows(D2, tab.results))
    R = spec.R if spec.R > 0 else max(cfg.physics.R, 1.0)
    mom = exp_moment_check(cfg.physics.Phi0, ex.t, spec, cfg.mc.n_traj, cfg.mc.seed, num, omega0, R=R)
    docs = _point_docs(cfg, "enstrophy_tail", "D2", D2, tab.results, {"Phi0": cfg.physics.Phi0, "t": ex.t}, wall)
    out.json("lemma1.json", {"points": docs, "slope": tab.slope, "R": spec.R, "exp_moment": asdict(mom)})


def exp_lemma2(cfg: RunConfig, out: Artifacts) -> None:
    spec, ex = cfg.noise_spec(), cfg.experiment
    t0 = time.perf_counter()
    res = ou_sup_tail_estimate(spec, tuple(ex.k), ex.tau, list(ex.B_grid), cfg.mc.n_traj,
                               cfg.numerics.n_substeps, cfg.mc.seed, cfg.mc.threads)
    wall = time.perf_counter() - t0
    out.csv("ou_sup.csv", ["B"] + CURVE_HEADER_TAIL, _curve_rows(ex.B_grid, res))
    doc = {"points": _point_docs(cfg, "ou_sup", "B", ex.B_grid, res, {"k": list(ex.k), "tau": ex.tau}, wall)}
    if ex.D_grid:
        ad = A_D_probability(spec, ex.D_grid, ex.tau, cfg.mc.n_traj, cfg.numerics.n_substeps, cfg.mc.seed,
                             cfg.mc.threads)
        out.csv("A_D.csv", ["D"] + CURVE_HEADER_TAIL, _curve_rows(ex.D_grid, ad))
        doc["A_D"] = _point_docs(cfg, "A_D", "D", ex.D_grid, ad, {"tau": ex.tau}, wall)
    out.json("lemma2.json", doc)


def exp_proposition(cfg: RunConfig, out: Artifacts) -> None:
    spec, p, num, ex = cfg.noise_spec(), cfg.norm_params(), _numerics(cfg), cfg.experiment
    D_grid = ex.D_grid or (p.D,)
    t0 = time.perf_counter()
    res = [proposition_escape(D, spec, p, cfg.mc.n_traj, cfg.mc.seed, num, ex.n_checks or None,
                              T=cfg.numerics.T) for D in D_grid]
    wall = time.perf_counter() - t0
    out.csv("escape.csv", ["D"] + CURVE_HEADER_TAIL, _curve_rows(D_grid, res))
    out.json("proposition.json", {"points": _point_docs(cfg, "region_escape", "D", D_grid, res,
                                                        {"r": p.r, "alpha": p.alpha, "T": cfg.numerics.T}, wall)})


def exp_theorem_ladder(cfg: RunConfig, out: Artifacts) -> None:
    spec, p, num, ex = cfg.noise_spec(), cfg.norm_params(), _numerics(cfg), cfg.experiment
    ladder = LadderSpec(ex.a_hat, spec.R, ex.levels)
    rows, docs = [], []
    for n in range(ex.levels):
        t0 = time.perf_counter()
        est = transition_estimate(ladder, n + 1, n, spec, p, cfg.mc.n_traj, cfg.mc.seed, num)
        wall = time.perf_counter() - t0
        w = est.worst
        rows.append((n, n + 1, est.D_n, est.D_m, w.n_traj, w.n_hits, w.p_hat, w.ci95[0], w.ci95[1], est.pi_n))
        doc = result_document(EventSpec("region_membership", {"D": est.D_n, "r": p.r, "alpha": p.alpha, "t": 1.0,
                                                              "m": n + 1, "n": n}), w, wall)
        doc["pi_n"] = est.pi_n
        doc["per_profile"] = [r.to_dict() for r in est.per_profile]
        docs.append(doc)
    out.csv("ladder.csv", ["n", "m", "D_n", "D_m"] + CURVE_HEADER_TAIL + ["pi_n"], rows)
    out.json("ladder.json", {"a_hat": ex.a_hat, "R": spec.R, "levels": ex.levels, "points": docs})


def exp_time_average(cfg: RunConfig, out: Artifacts) -> None:
    spec, p, num, ex = cfg.noise_spec(), cfg.norm_params(), _numerics(cfg), cfg.experiment
    omega0 = _initial_field(cfg)
    D_grid = ex.D_grid or (p.D,)
    t0 = time.perf_counter()
    avg = mode_time_averages(tuple(ex.k), ex.t, ex.T_avg, spec, cfg.mc.n_traj, cfg.mc.seed, num, omega0)
    res = [time_average_mode(tuple(ex.k), ex.t, ex.T_avg, D, p, spec, cfg.mc.n_traj, cfg.mc.seed, num,
                             averages=avg) for D in D_grid]
    wall = time.perf_counter() - t0
    out.csv("time_average.csv", ["D"] + CURVE_HEADER_TAIL, _curve_rows(D_grid, res))
    extra = {"k": list(ex.k), "t": ex.t, "T": ex.T_avg, "r": p.r, "alpha": p.alpha}
    out.json("time_average.json", {"points": _point_docs(cfg, "time_avg_mode", "D", D_grid, res, extra, wall)})


def exp_spectrum(cfg: RunConfig, out: Artifacts) -> None:
    spec, p, num, ex = cfg.noise_spec(), cfg.norm_params(), _numerics(cfg), cfg.experiment
    snaps = stationary_snapshots(spec, cfg.mc.n_traj, ex.burn_in, ex.n_snapshots, ex.spacing, cfg.mc.seed, num,
                                 _initial_field(cfg))
    est = energy_spectrum(snaps)
    out.csv("spectrum.csv", ["k", "e_k", "mode_count"], zip(est.k, est.e_k, est.mode_count))
    try:
        rep = spectrum_bound_report(snaps, p.r, ex.alpha_tilde, spec.R, tuple(ex.k_fit))
        doc = rep.to_dict()
    except HarnessError as exc:
        doc = {"error": str(exc)}
    doc["n_snapshots"] = int(snaps.shape[0])
    out.json("spectrum.json", doc)


RUNNERS = {
    "simulate": exp_simulate, "ensemble": exp_ensemble, "verify-conservation": exp_verify_conservation,
    "lemma1": exp_lemma1, "lemma2": exp_lemma2, "proposition": exp_proposition,
    "theorem-ladder": exp_theorem_ladder, "time-average": exp_time_average, "spectrum": exp_spectrum,
    "picard-certify": exp_picard_certify,
}


def _strip_wall_time(doc):
    if isinstance(doc, dict):
        return {k: _strip_wall_time(v) for k, v in doc.items() if k != "wall_time"}
    if isinstance(doc, list):
        return [_strip_wall_time(v) for v in doc]
    return doc


def file_digest(path: Path) -> str:
    """sha256 of an artifact; JSON documents are hashed without ``wall_time`` fields."""
    data = path.read_bytes()
    if path.suffix == ".json":
        return digest(_strip_wall_time(json.loads(data)))
    return hashlib.sha256(data).hexdigest()


def _versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "package": pkg, "platform": platform.platform()}


def _inputs(cfg: RunConfig) -> dict:
    if cfg.physics.forcing == "file" and cfg.physics.noise_file:
        p = Path(cfg.physics.noise_file)
        return {str(p): hashlib.sha256(p.read_bytes()).hexdigest()} if p.exists() else {}
    return {}


def _write_error(out_dir: Path, code: int, exc: BaseException, experiment: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"status": code, "error_type": type(exc).__name__, "message": str(exc), "experiment": experiment}
    for attr in ("ratio", "iterations"):
        if hasattr(exc, attr):
            doc[attr] = getattr(exc, attr)
    (out_dir / ERROR_RECORD).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_plain) + "\n")


def default_out_dir(cfg: RunConfig) -> Path:
    if cfg.io.out_dir:
        return Path(cfg.io.out_dir)
    root = Path(os.environ.get(OUT_ENV, "stoch-ns2d-out"))
    return root / f"{cfg.run.experiment}-seed{cfg.mc.seed}"


def run(cfg: RunConfig, out_dir: Path | None = None) -> int:
    """Execute one experiment; returns the exit status."""
    out_dir = Path(out_dir) if out_dir is not None else default_out_dir(cfg)
    try:
        cfg.validate()
    except (ConfigError, FieldError, ValueError) as exc:
        _write_error(out_dir, EXIT_CONFIG, exc, cfg.run.experiment)
        return EXIT_CONFIG
    out_dir.mkdir(parents=True, exist_ok=True)
    stale = out_dir / ERROR_RECORD
    if stale.exists():
        stale.unlink()
    arts = Artifacts(out_dir)
    t0 = time.perf_counter()
    try:
        RUNNERS[cfg.run.experiment](cfg, arts)
    except NumericalError as exc:
        _write_error(out_dir, EXIT_NUMERICAL, exc, cfg.run.experiment)
        return EXIT_NUMERICAL
    except CertificationError as exc:
        _write_error(out_dir, EXIT_CERTIFICATION, exc, cfg.run.experiment)
        return EXIT_CERTIFICATION
    except (ConfigError, FieldError, HarnessError, ValueError) as exc:
        _write_error(out_dir, EXIT_CONFIG, exc, cfg.run.experiment)
        return EXIT_CONFIG
    manifest = {
        "experiment": cfg.run.experiment,
        "seed": cfg.mc.seed,
        "threads": cfg.mc.threads,
        "config": cfg.to_ini(),
        "config_digest": digest(cfg.result_key()),
        "versions": _versions(),
        "inputs": _inputs(cfg),
        "artifacts": {name: file_digest(out_dir / name) for name in arts.names},
        "wall_time": time.perf_counter() - t0,
    }
    (out_dir / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _first_divergence(a: Path, b: Path) -> str:
    if a.suffix in (".csv", ".json"):
        la = a.read_text().splitlines()
        lb = b.read_text().splitlines()
        for i, (x, y) in enumerate(zip(la, lb)):
            if x != y:
                return f"line {i + 1}: {x!r} != {y!r}"
        return f"line count {len(la)} != {len(lb)}"
    da, db = a.read_bytes(), b.read_bytes()
    i = next((i for i, (x, y) in enumerate(zip(da, db)) if x != y), min(len(da), len(db)))
    return f"byte {i}"


def replay(manifest_path: Path, threads: int | None = None, out_dir: Path | None = None) -> tuple[int, str]:
    """Re-run a manifest's experiment and compare artifact hashes.

    Returns the exit status and a one-line report.
    """
    manifest_path = Path(manifest_path)
    try:
        man = json.loads(manifest_path.read_text())
        cfg = RunConfig.from_ini(man["config"])
        cfg.mc.seed = int(man["seed"])
        expected = man["artifacts"]
    except (OSError, KeyError, ValueError) as exc:
        return EXIT_CONFIG, f"cannot read manifest: {exc}"
    for path, sha in man.get("inputs", {}).items():
        p = Path(path)
        if not p.exists():
            return EXIT_CONFIG, f"missing input {path}"
        if hashlib.sha256(p.read_bytes()).hexdigest() != sha:
            return EXIT_REPLAY, f"input {path} changed since the original run"
    if threads is not None:
        cfg.mc.threads = threads
    with tempfile.TemporaryDirectory() as tmp:
        target = Path(out_dir) if out_dir is not None else Path(tmp) / "replay"
        cfg.io.out_dir = str(target)
        code = run(cfg, target)
        if code != EXIT_OK:
            return code, f"replay run failed with status {code}"
        got = json.loads((target / MANIFEST).read_text())["artifacts"]
        for name in sorted(set(expected) | set(got)):
            if name not in got or name not in expected:
                return EXIT_REPLAY, f"artifact set differs at {name}"
            if got[name] != expected[name]:
                where = ""
                orig = manifest_path.parent / name
                if orig.exists():
                    where = "; " + _first_divergence(orig, target / name)
                return EXIT_REPLAY, f"hash mismatch in {name}{where}"
    return EXIT_OK, f"{len(expected)} artifacts identical"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stoch-ns2d", description="Stochastic 2D Navier-Stokes experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=Path)
        sp.add_argument("--threads", type=int)
    rp = sub.add_parser("replay")
    rp.add_argument("manifest", type=Path)
    rp.add_argument("--threads", type=int)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "replay":
        code, msg = replay(args.manifest, args.threads)
        print(msg, file=sys.stdout if code == EXIT_OK else sys.stderr)
        return code
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
    except ConfigError as exc:
        cfg = RunConfig()
        cfg.run.experiment = args.command
        out = args.out or default_out_dir(cfg)
        _write_error(out, EXIT_CONFIG, exc, args.command)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg.run.experiment = args.command
    if args.seed is not None:
        cfg.mc.seed = args.seed
    if args.threads is not None:
        cfg.mc.threads = args.threads
    if args.out is not None:
        cfg.io.out_dir = str(args.out)
    out = default_out_dir(cfg)
    code = run(cfg, out)
    if code == EXIT_OK:
        print(f"wrote {out}")
    else:
        err = json.loads((out / ERROR_RECORD).read_text())
        print(f"{err['error_type']}: {err['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
