"""``beamlab`` command line: scenario runner and matrix export.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 assertion failure (``--assert``).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import ClassificationRules, decay_window, equivalence_harness, fit_decay
from .config import ConfigError, load_config
from .discretize import AssemblyError, assemble
from .model import HypothesisWarning, TipBody, law_name, validate_hypothesis
from .spectral import NearSingularError, SpectralError, spectrum, sweep_resolvent
from .timeint import FirstMode, FromFile, SmoothPolynomial, TimeIntegrationError, energy_drift, integrate

log = logging.getLogger("beamlab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ASSERT = 0, 1, 2, 3
NUMERICAL_ERRORS = (AssemblyError, SpectralError, TimeIntegrationError, NearSingularError, np.linalg.LinAlgError)
MAX_RECORDED_STATES = 2000


def fmt(x) -> str:
    return f"{x:.17g}"


def write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


class Runner:
    def __init__(self, cfg, outdir: Path, check: bool):
        self.cfg = cfg
        self.spec = cfg.model_spec()
        self.outdir = outdir
        self.check = check
        self.results: dict = {}
        self.assertions: list[dict] = []

    def expect(self, name, ok, detail):
        self.assertions.append({"name": name, "passed": bool(ok), "detail": detail})

    def system(self, n):
        return assemble(self.spec, n, **self.cfg.assemble_kwargs())

    def run_spectrum(self):
        n = self.cfg["discretization"]["n_elements"]
        rep = spectrum(self.system(n), method=self.cfg["spectrum"]["method"])
        ev = rep.eigenvalues
        write_atomic(self.outdir / "spectrum.csv", csv_text(["re", "im"], zip(ev.real, ev.imag)))
        up = rep.upper_branch()
        self.results["spectrum"] = {
            "n_elements": n,
            "n_eigenvalues": int(len(ev)),
            "abscissa": rep.abscissa,
            "validity_ceiling": rep.ceiling,
            "branch_exponent": None if rep.branch_fit is None else rep.branch_fit.exponent,
            "lowest_frequencies": up.imag[:10].tolist(),
            "max_residual": float(rep.residuals.max()),
        }
        limit = self.cfg["spectrum"]["expect_abscissa_max"]
        limit = 1e-8 if limit is None else limit
        self.expect("spectrum.abscissa", rep.abscissa <= limit, f"abscissa {rep.abscissa:.6g} <= {limit:g}")

    def run_resolvent(self):
        sec = self.cfg["resolvent"]
        sys_ = self.system(sec["n_elements"])
        rep = spectrum(sys_)
        up = rep.upper_branch()
        lam_min = sec["lam_min"] if sec["lam_min"] is not None else (float(up.imag[0]) if len(up) else 1.0)
        lam_max = sec["lam_max"] if sec["lam_max"] is not None else min(100 * lam_min, rep.ceiling)
        try:
            sw = sweep_resolvent(sys_, lam_min, lam_max, sec["points_per_decade"], report=rep)
        except ValueError as exc:
            raise ConfigError(f"[resolvent]: {exc}") from exc
        write_atomic(self.outdir / "resolvent.csv", csv_text(["lambda", "norm"], sw.samples))
        self.results["resolvent"] = {
            "n_elements": sec["n_elements"],
            "window": list(sw.fit_window),
            "fitted_slope": sw.fitted_slope,
            "refused": sw.refused,
            "n_samples": int(len(sw.samples)),
            "n_singular": int(len(sw.singular)),
            "envelope": sw.envelope.tolist(),
        }
        if sec["expect_slope"] is not None:
            target, tol = sec["expect_slope"], sec["slope_tol"]
            ok = sw.fitted_slope is not None and abs(sw.fitted_slope - target) <= tol
            self.expect("resolvent.slope", ok, f"slope {sw.fitted_slope} vs {target} +/- {tol}")

    def _initial(self, sec):
        if sec["initial"] == "file":
            if not sec["initial_file"]:
                raise ConfigError("[simulate] initial = file requires initial_file")
            return FromFile(sec["initial_file"])
        return FirstMode() if sec["initial"] == "first_mode" else SmoothPolynomial()

    def _energy_csv(self, name, traj):
        resid = np.concatenate([[0.0], traj.balance_residual])
        rows = zip(traj.step_times, traj.energies, traj.dissipation_integral, resid)
        write_atomic(self.outdir / name, csv_text(["t", "energy", "dissipation_cumulative", "balance_residual"], rows))

    def run_simulate(self):
        sec = self.cfg["simulate"]
        sys_ = self.system(self.cfg["discretization"]["n_elements"])
        nsteps = int(round(sec["t_final"] / sec["dt"]))
        every = sec["record_every"] or max(1, nsteps // MAX_RECORDED_STATES)
        try:
            traj = integrate(sys_, self._initial(sec), sec["dt"], sec["t_final"], record_every=every)
        except ValueError as exc:
            raise ConfigError(f"[simulate]: {exc}") from exc
        self._energy_csv("energy.csv", traj)
        ledger = float(traj.balance_residual.max())
        self.results["simulate"] = {
            "steps": int(len(traj.rates)),
            "energy_initial": float(traj.energies[0]),
            "energy_final": float(traj.energies[-1]),
            "relative_drift": energy_drift(traj),
            "max_balance_residual": ledger,
            "conservative": sys_.conservative,
        }
        tol = sec["max_balance_residual"]
        self.expect("simulate.ledger", ledger <= tol, f"balance residual {ledger:.3g} <= {tol:g}")
        if sys_.conservative:
            drift = energy_drift(traj)
            self.expect("simulate.conservation", drift <= 1e-10, f"drift {drift:.3g} <= 1e-10")

    def run_decay(self):
        sec = self.cfg["decay"]
        sys_ = self.system(sec["n_elements"])
        rep = spectrum(sys_)
        up = rep.upper_branch()
        if len(up) == 0:
            raise ConfigError("[decay]: model has no oscillatory modes to set the decay window")
        nsteps = int(round(sec["t_final"] / sec["dt"]))
        traj = integrate(sys_, SmoothPolynomial(), sec["dt"], sec["t_final"],
                         record_every=max(1, nsteps // MAX_RECORDED_STATES))
        self._energy_csv("decay_energy.csv", traj)
        t0, t1 = decay_window(float(up.imag[0]), rep.abscissa, sec["t_final"])
        t0 = sec["t0"] if sec["t0"] is not None else t0
        t1 = sec["t1"] if sec["t1"] is not None else t1
        try:
            fit = fit_decay(traj, (t0, t1), sec["model"])
        except ValueError as exc:
            raise ConfigError(f"[decay]: {exc}") from exc
        self.results["decay"] = {
            "n_elements": sec["n_elements"],
            "window": list(fit.window),
            "model": fit.model.value,
            "exponent": fit.exponent,
            "r_squared": fit.r_squared,
            "samples": fit.n_samples,
        }
        rng = sec["expect_exponent"]
        if rng:
            if len(rng) != 2:
                raise ConfigError("[decay] expect_exponent needs two numbers: low, high")
            ok = rng[0] <= fit.exponent <= rng[1]
            self.expect("decay.exponent", ok, f"exponent {fit.exponent:.4g} in [{rng[0]:g}, {rng[1]:g}]")

    def run_compare(self):
        sec = self.cfg["compare"]
        rules = ClassificationRules(shrink_factor=sec["shrink_factor"], max_variation=sec["max_variation"])
        tip = self.spec.tip or TipBody(**self.cfg["tip"])
        res = equivalence_harness(self.spec.law, tip, sec["levels"], self.spec.rho, self.spec.length,
                                  rules=rules, **self.cfg.assemble_kwargs())

        def summary(c):
            return {"levels": c.levels, "abscissas": c.abscissas, "verdict": c.verdict.value,
                    "delta": c.delta, "reason": c.reason}

        self.results["compare"] = {
            "law": law_name(self.spec.law),
            "plain": summary(res.plain),
            "hybrid": summary(res.hybrid),
            "match": res.match,
            "indeterminate": res.indeterminate,
        }
        self.expect("compare.match", res.match == sec["expect_match"],
                    f"match {res.match} (expected {sec['expect_match']})")

    def report(self) -> dict:
        tip = self.spec.tip
        hyp = None
        if tip is not None:
            h = validate_hypothesis(tip)
            hyp = {"holds": h.holds, "margin": h.margin}
        return _jsonable({
            "tool": "beamlab",
            "version": __version__,
            "config": self.cfg.source,
            "parameters": self.cfg.resolved(),
            "hypothesis": hyp,
            "results": self.results,
            "assertions": self.assertions if self.check else [],
        })


def cmd_run(args) -> int:
    cmd = None
    try:
        cfg = load_config(args.config)
        outdir = Path(args.out or cfg["output"]["dir"])
        runner = Runner(cfg, outdir, args.check)
        if runner.spec.tip is not None and not validate_hypothesis(runner.spec.tip).holds:
            log.warning("tip parameters violate d*gamma <= 2*gamma_star; running anyway")
        for cmd in cfg.commands:
            log.info("running %s", cmd)
            getattr(runner, f"run_{cmd}")()
    except ConfigError as exc:
        print(f"beamlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"beamlab: numerical failure in {cmd!r}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    write_atomic(outdir / "report.json", json.dumps(runner.report(), indent=2, sort_keys=True) + "\n")
    if args.check:
        failed = [a for a in runner.assertions if not a["passed"]]
        for a in runner.assertions:
            print(f"{'PASS' if a['passed'] else 'FAIL'} {a['name']}: {a['detail']}")
        if failed:
            return EXIT_ASSERT
    return EXIT_OK


def triplet_text(A, shape=None) -> str:
    A = np.asarray(A)
    rows, cols = np.nonzero(A)
    lines = [
        "# beamlab sparse triplet: row col value (0-based indices)",
        f"# shape {A.shape[0]} {A.shape[1]} nnz {len(rows)}",
    ]
    lines += [f"{r} {c} {fmt(A[r, c])}" for r, c in zip(rows, cols)]
    return "\n".join(lines) + "\n"


def read_triplets(path) -> np.ndarray:
    """Inverse of the export format; used to round-trip exported matrices."""
    shape = None
    entries = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("# shape"):
                parts = line.split()
                shape = (int(parts[2]), int(parts[3]))
            elif line.strip() and not line.startswith("#"):
                r, c, v = line.split()
                entries.append((int(r), int(c), float(v)))
    if shape is None:
        raise ValueError(f"{path}: missing '# shape' header")
    A = np.zeros(shape)
    for r, c, v in entries:
        A[r, c] = v
    return A


def cmd_export(args) -> int:
    try:
        cfg = load_config(args.config)
        spec = cfg.model_spec()
        outdir = Path(args.out or cfg["output"]["dir"])
        n = cfg["discretization"]["n_elements"]
        sys_ = assemble(spec, n, **cfg.assemble_kwargs())
    except ConfigError as exc:
        print(f"beamlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"beamlab: numerical failure in assembly: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    write_atomic(outdir / "E.txt", triplet_text(sys_.E))
    write_atomic(outdir / "S.txt", triplet_text(sys_.S))
    layout = {name: [blk.start, blk.stop] for name, blk in sys_.layout.blocks().items()}
    layout["tip_velocity"] = list(sys_.layout.tip_velocity)
    layout["n_elements"] = n
    write_atomic(outdir / "layout.json", json.dumps(layout, indent=2, sort_keys=True) + "\n")
    print(f"wrote E.txt, S.txt, layout.json to {outdir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="beamlab", description="Hybrid Euler-Bernoulli beam stability laboratory")
    p.add_argument("--version", action="version", version=f"beamlab {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the commands listed in a scenario config")
    run.add_argument("config")
    run.add_argument("--assert", dest="check", action="store_true",
                     help="evaluate scenario expectations; exit 3 if any fails")
    run.add_argument("--out", help="output directory (overrides [output] dir)")
    run.set_defaults(func=cmd_run)
    exp = sub.add_parser("export-matrices", help="write E and S as sparse triplet text")
    exp.add_argument("config")
    exp.add_argument("--out", help="output directory (overrides [output] dir)")
    exp.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    warnings.simplefilter("ignore", HypothesisWarning)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
