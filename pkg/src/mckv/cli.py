"""Command-line driver: ``mckv <command> --config <file> [--output-dir DIR] [--threads K]``.

Exit codes: 0 success, 1 validation failure, 2 runtime abort, 3 inconclusive study.
Every run directory gets a ``manifest.json`` listing each written file with its
SHA-256; failures also write ``error.json``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from mckv import __version__
from mckv._backend import BACKEND
from mckv.coefficients import AssumptionError, check_assumptions
from mckv.config import ConfigError, ExperimentConfig, load_config, resolve_output_dir
from mckv.fokker_planck import CFLError, FPStateError, solve_nonlinear_fp
from mckv.grid import GridDensity
from mckv.particles import ParticleStateError, TrajectoryStore, simulate

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_INCONCLUSIVE = 0, 1, 2, 3
MANIFEST = "manifest.json"
PLOT_KINDS = ("density-evolution", "holder-fit", "convergence", "stability-ratio")


class Inconclusive(RuntimeError):
    pass


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class RunWriter:
    """Writes files into a run directory and remembers their hashes."""

    def __init__(self, root: Path, formats=("csv", "json")):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.formats = set(formats)
        self.files: dict[str, str] = {}

    def text(self, name: str, text: str) -> None:
        ext = name.rsplit(".", 1)[-1]
        if ext in ("csv", "json") and ext not in self.formats:
            return
        data = text.encode("utf-8")
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        self.files[name] = _sha(data)

    def json(self, name: str, obj) -> None:
        self.text(name, json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n")

    def rows(self, name: str, header, rows, comments=()) -> None:
        buf = io.StringIO()
        for c in comments:
            buf.write(f"# {c}\n")
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        self.text(name, buf.getvalue())


def _plain(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def _grid_csv(l: GridDensity) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow([f"x{k}" for k in range(l.d)] + ["value"])
    for row in np.column_stack([l.nodes(), l.values.ravel()]):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


# ---- commands -------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, out: RunWriter, threads: int) -> int:
    cs = cfg.coefficients()
    store = simulate(cfg.sim_config(), cs, cfg.initial_density(), threads=threads)
    out.text("snapshots.csv", store.snapshots_csv().replace("\n", "\r\n"))
    out.text("metadata.json", store.metadata_json() + "\n")
    if not store.complete:
        raise RuntimeError("wall-clock budget exceeded; partial store written")
    return EXIT_OK


def cmd_fp_solve(cfg: ExperimentConfig, out: RunWriter, threads: int) -> int:
    cs = cfg.coefficients()
    times = cfg.sim["snapshot_times"] or None
    states = solve_nonlinear_fp(cs, cfg.initial_density(), cfg.sim["T"], cfg.fp["dt"],
                                snapshot_times=times,
                                record_every=None if times else cfg.fp["record_every"],
                                picard_tol=cfg.fp["picard_tol"])
    index = []
    for i, s in enumerate(states):
        name = f"states/density_{i:04d}.csv"
        out.text(name, _grid_csv(s.density))
        index.append({"file": name, "time": s.time, "mass": s.mass, "leakage": s.leakage})
    out.json("fp_states.json", {"coefficients": cs.describe(), "dt": cfg.fp["dt"],
                                "states": index})
    return EXIT_OK


def cmd_converge(cfg: ExperimentConfig, out: RunWriter, threads: int) -> int:
    from mckv.stability import mollifier_convergence_study

    rep = mollifier_convergence_study(cfg.coefficients(), cfg.initial_density(),
                                      cfg.sim_config(), cfg.study["n_list"], threads=threads)
    out.text("convergence.json", rep.to_json() + "\n")
    if rep.verdict == "inconclusive":
        raise Inconclusive(
            f"Cauchy distances {rep.cauchy_distances} below MC noise floor {rep.noise_floor:.3g}"
        )
    return EXIT_OK


def cmd_stability(cfg: ExperimentConfig, out: RunWriter, threads: int) -> int:
    from mckv.stability import stability_experiment

    cs = cfg.coefficients()
    rep = stability_experiment(cs, cfg.initial_density(),
                               cfg.initial_density(cfg.study["shift"]), cfg.sim_config(),
                               fp_dt=cfg.fp["dt"], particle=cfg.study["particle"],
                               threads=threads, check_samples=min(cfg.study["samples"], 200))
    out.text("stability.json", rep.to_json() + "\n")
    return EXIT_OK


def cmd_check_assumptions(cfg: ExperimentConfig, out: RunWriter, threads: int) -> int:
    cs = cfg.coefficients()
    rep = check_assumptions(cs, n_samples=cfg.study["samples"], seed=cfg.sim["seed"])
    out.text("assumptions.json", rep.to_json() + "\n")
    if not rep.passed:
        failed = [c for c, ok in rep.verdicts.items() if not ok]
        raise AssumptionError(f"{cs.name} violates {failed}")
    return EXIT_OK


def transport_selftest(pairs: int = 200, seed: int = 0) -> dict:
    """1-D closed form versus the LP, and dual attainment on translated masses."""
    from mckv.transport import (DiscreteMeasure, kantorovich_dual_value, wasserstein_1d,
                                wasserstein_lp)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        m, n = rng.integers(1, 65, 2)
        wa, wb = rng.random(m) + 1e-3, rng.random(n) + 1e-3
        mu = DiscreteMeasure(rng.normal(0, 2, (m, 1)), wa / wa.sum(), check=False)
        nu = DiscreteMeasure(rng.normal(0.5, 1, (n, 1)), wb / wb.sum(), check=False)
        p = float(rng.choice([1.0, 2.0]))
        worst = max(worst, abs(wasserstein_1d(mu, nu, p) - wasserstein_lp(mu, nu, p)[0]))
    dual = 0.0
    for _ in range(20):
        a, b = rng.normal(0, 3, 2)
        mu, nu = DiscreteMeasure.dirac([a]), DiscreteMeasure.dirac([b])
        best = max(kantorovich_dual_value(lambda x: x[:, 0], mu, nu),
                   kantorovich_dual_value(lambda x: -x[:, 0], mu, nu))
        dual = max(dual, abs(best - wasserstein_1d(mu, nu, 1.0)))
    return {"pairs": pairs, "max_oracle_gap": worst, "max_dual_gap": dual,
            "passed": bool(worst <= 1e-9 and dual <= 1e-9)}


def cmd_transport_selftest(cfg: ExperimentConfig | None, out: RunWriter, threads: int) -> int:
    pairs = cfg.study["selftest_pairs"] if cfg else 200
    seed = cfg.sim["seed"] if cfg else 0
    res = transport_selftest(pairs, seed)
    out.json("selftest.json", res)
    if not res["passed"]:
        raise RuntimeError(f"transport self-test failed: {res}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fp-solve": cmd_fp_solve,
    "converge": cmd_converge,
    "stability": cmd_stability,
    "check-assumptions": cmd_check_assumptions,
    "transport-selftest": cmd_transport_selftest,
}


# ---- manifest -------------------------------------------------------------

def _versions() -> dict:
    return {"mckv": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "backend": BACKEND}


def write_manifest(root: Path, command: str, cfg: ExperimentConfig | None, files: dict,
                   wall: float, threads: int, status: int) -> dict:
    manifest = {
        "command": command,
        "config": cfg.to_dict() if cfg else None,
        "files": dict(sorted(files.items())),
        "versions": _versions(),
        "threads": threads,
        "wall_seconds": wall,
        "exit_code": status,
    }
    (Path(root) / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True,
                                                  default=_plain) + "\n", encoding="utf-8")
    return manifest


def verify_manifest(run_dir) -> list[str]:
    """Names of listed files that are missing or whose content changed."""
    root = Path(run_dir)
    manifest = json.loads((root / MANIFEST).read_text(encoding="utf-8"))
    bad = []
    for name, digest in manifest["files"].items():
        path = root / name
        if not path.is_file() or _sha(path.read_bytes()) != digest:
            bad.append(name)
    return bad


def run(command: str, cfg: ExperimentConfig | None, output_dir: Path, threads: int = 1) -> int:
    started = time.monotonic()
    out = RunWriter(output_dir, cfg.formats if cfg else ("csv", "json"))
    status, error = EXIT_OK, None
    try:
        status = COMMANDS[command](cfg, out, threads)
    except (ConfigError, AssumptionError, CFLError) as exc:
        status, error = EXIT_INVALID, exc
    except Inconclusive as exc:
        status, error = EXIT_INCONCLUSIVE, exc
    except (ParticleStateError, FPStateError, RuntimeError, FloatingPointError) as exc:
        status, error = EXIT_RUNTIME, exc
    except ValueError as exc:
        status, error = EXIT_INVALID, exc
    if error is not None:
        out.formats.add("json")
        payload = {"exit_code": status, "error": type(error).__name__, "message": str(error)}
        if isinstance(error, ConfigError):
            payload |= error.to_dict()
        out.json("error.json", payload)
    write_manifest(output_dir, command, cfg, out.files, time.monotonic() - started, threads, status)
    return status


# ---- plot data ------------------------------------------------------------

def emit_plot_data(run_dir, kind: str) -> Path:
    """Write a tidy long-format CSV for ``kind`` into the run directory."""
    root = Path(run_dir)
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {', '.join(PLOT_KINDS)}")
    mpath = root / MANIFEST
    if not mpath.is_file():
        raise FileNotFoundError(f"{root} has no {MANIFEST}")
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    out = RunWriter(root)
    name = f"plot_{kind}.csv"

    def need(fname):
        if fname not in manifest["files"]:
            raise FileNotFoundError(f"{kind} needs {fname} in {root}")
        return root / fname

    if kind == "density-evolution":
        if "fp_states.json" in manifest["files"]:
            idx = json.loads(need("fp_states.json").read_text(encoding="utf-8"))
            rows = []
            for st in idx["states"]:
                l = GridDensity.from_csv(need(st["file"]), check=False)
                rows += [(st["time"], x, v) for x, v in zip(l.axis(0), l.values)]
        else:
            rows = _particle_density_rows(root, manifest, need)
        out.rows(name, ["t", "x", "density"], rows)
    elif kind == "holder-fit":
        from mckv.diagnostics import holder_time_fit

        need("snapshots.csv")
        store = TrajectoryStore.load(root)
        rep = holder_time_fit(store, float(manifest["config"]["sim"]["p"]))
        d = rep.details
        out.rows(name, ["log_gap", "log_w"], zip(d.get("log_gap", []), d.get("log_w", [])),
                 comments=[f"slope={rep.exponent_fit!r}", f"intercept={d.get('intercept')!r}",
                           f"c2={rep.fitted_constant!r}"])
    elif kind == "convergence":
        rep = json.loads(need("convergence.json").read_text(encoding="utf-8"))
        n = rep["n_values"]
        out.rows(name, ["n_pair", "sup_w1", "mc_noise_floor"],
                 [(f"{a}-{b}", c, rep["noise_floor"])
                  for a, b, c in zip(n, n[1:], rep["cauchy_distances"])])
    else:
        rep = json.loads(need("stability.json").read_text(encoding="utf-8"))
        bound = rep["lambda_bound"] * rep["initial_wtv"]
        rows = [(t, "fp", w, w / bound if bound > 0 else "inf")
                for t, w in zip(rep["times"], rep["series"])]
        if rep.get("particle_series"):
            rows += [(t, "particle", w, w / bound if bound > 0 else "inf")
                     for t, w in zip(rep["times"], rep["particle_series"])]
        out.rows(name, ["t", "path", "weighted_tv", "ratio"], rows)
    manifest["files"] = dict(sorted((manifest["files"] | out.files).items()))
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return root / name


def _particle_density_rows(root, manifest, need):
    from mckv.diagnostics import density_snapshot
    from mckv.mollify import MollifierFamily

    need("snapshots.csv")
    store = TrajectoryStore.load(root)
    c = manifest["config"]
    i = c["initial"]
    n = int(c["sim"]["n_mollifier"])
    cells = max(int(i["cells"]), int(math.ceil(2.5 * n * (i["hi"] - i["lo"]))))
    grid = GridDensity([i["lo"]], [(i["hi"] - i["lo"]) / cells], np.zeros(cells))
    fam = MollifierFamily(n)
    rows = []
    for t, cloud in store.snapshots:
        l = density_snapshot(cloud, fam, grid)
        rows += [(t, x, v) for x, v in zip(l.axis(0), l.values)]
    return rows


# ---- entry point ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mckv", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"mckv {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=name != "transport-selftest")
        sp.add_argument("--output-dir")
        sp.add_argument("--threads", type=int, default=1)
    pp = sub.add_parser("plot-data", help="emit tidy CSV for plotting from a finished run")
    pp.add_argument("--run-dir", required=True)
    pp.add_argument("--kind", required=True, choices=PLOT_KINDS)
    vp = sub.add_parser("verify", help="re-hash the files listed in a run manifest")
    vp.add_argument("--run-dir", required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "plot-data":
        try:
            path = emit_plot_data(args.run_dir, args.kind)
        except (FileNotFoundError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
        print(path)
        return EXIT_OK
    if args.command == "verify":
        bad = verify_manifest(args.run_dir)
        for name in bad:
            print(f"modified or missing: {name}", file=sys.stderr)
        return EXIT_INVALID if bad else EXIT_OK
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    cfg = None
    try:
        if args.config:
            cfg = load_config(args.config)
            if cfg.command != args.command:
                raise ConfigError(f"config is for {cfg.command!r}, not {args.command!r}",
                                  "run", "command")
    except ConfigError as exc:
        out_dir = Path(args.output_dir or "runs/invalid")
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "error.json").write_text(json.dumps(
            {"exit_code": EXIT_INVALID, "error": "ConfigError", **exc.to_dict()}, indent=2) + "\n",
            encoding="utf-8")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out_dir = resolve_output_dir(cfg, args.output_dir) if cfg else Path(args.output_dir or "runs/selftest")
    status = run(args.command, cfg, out_dir, args.threads)
    print(f"{args.command}: exit {status}, output in {out_dir}")
    return status


if __name__ == "__main__":
    sys.exit(main())
