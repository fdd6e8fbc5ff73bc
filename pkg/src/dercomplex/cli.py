"""Command line: configuration, experiment dispatch and report files.

Config files are either JSON objects or ``key = value`` lines (``#`` starts
a comment, lists are comma separated).  See ``configs/example.conf``.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import json
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1.0"
EXPERIMENTS = ("complex-check", "harmonic", "constants", "divcurl", "all")
SUBCOMMANDS = {"check": "complex-check", "harmonic": "harmonic", "constants": "constants",
               "divcurl": "divcurl", "all": "all"}
DOMAINS = ("cube", "cavity", "torus")
FAMILIES = ("F1", "F2", "F3", "F4")
SIDES = ("x-", "x+", "y-", "y+", "z-", "z+")
DEFAULT_RESOLUTION = {"cube": [8], "cavity": [1, 2], "torus": [1, 2]}

# expected Dirichlet-Neumann dimensions on the preset fixtures
EXPECTED_DIMENSION = {("cube", "all-T"): 0, ("cube", "all-N"): 0, ("cavity", "all-T"): 1,
                      ("cavity", "all-N"): 0, ("torus", "all-N"): 1, ("torus", "all-T"): 0}
PI = math.pi
# limits of the unit-cube constants, with relative tolerances
EXPECTED_CONSTANTS = {
    ("friedrichs_poincare", "all-T"): (1 / (PI * math.sqrt(3)), 0.02),
    ("friedrichs_poincare", "all-N"): (1 / PI, 0.02),
    ("friedrichs_poincare", "T:x-"): (2 / PI, 0.03),
    ("maxwell", "all-T"): (1 / (PI * math.sqrt(2)), 0.03),
    ("maxwell", "all-N"): (1 / PI, 0.03),
    ("maxwell", "T:x-"): (2 / PI, 0.03),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything a run needs; defaults documented in the README."""

    domain: str = "cube"
    cells: str | None = None
    partitions: list = field(default_factory=lambda: ["all-T", "all-N", "T:x-"])
    resolution: list = field(default_factory=lambda: [8])
    experiment: str = "all"
    eig_tol: float = 1e-10
    cg_tol: float = 1e-12
    tol_rank: float = 1e-8
    ibp_trials: int = 100
    split_trials: int = 50
    estimate_trials: int = 200
    families: list = field(default_factory=lambda: list(FAMILIES))
    n_list: list = field(default_factory=lambda: [1, 2, 4, 8, 16, 32])
    grids: list = field(default_factory=lambda: [12, 24])
    divcurl_partitions: list = field(default_factory=lambda: ["all-N", "T:x-"])
    direction: list = field(default_factory=lambda: [0.6, 0.8, 0.0])
    cutoff_margin: float = 0.125
    dual_resolution: int = 64
    quadrature: bool = False
    output: str = "out"
    seed: int = 0


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_LIST_TYPES = {"partitions": str, "resolution": int, "families": str, "n_list": int, "grids": int,
               "divcurl_partitions": str, "direction": float}


def _check_rule(rule: str, key: str) -> str:
    rule = rule.strip()
    if rule in ("all-T", "all-N"):
        return rule
    tag, sep, rest = rule.partition(":")
    sides = [s.strip() for s in rest.split(",") if s.strip()]
    if not sep or tag not in ("T", "N") or not sides or any(s not in SIDES for s in sides):
        raise ConfigError(f"key {key!r}: invalid partition {rule!r} (use all-T, all-N, T:<sides> or N:<sides>)")
    return f"{tag}:{','.join(sides)}"


def _convert(key: str, raw, where: str):
    f = _FIELDS[key]
    try:
        if key in _LIST_TYPES:
            if isinstance(raw, str):
                items = [s for s in (t.strip() for t in raw.split(",")) if s]
                if key in ("partitions", "divcurl_partitions"):
                    items = _split_rules(raw)
            elif isinstance(raw, list):
                items = raw
            else:
                raise ValueError("expected a list")
            if not items:
                raise ValueError("empty list")
            return [_LIST_TYPES[key](v) for v in items]
        if f.type in ("bool", bool):
            if isinstance(raw, bool):
                return raw
            if str(raw).strip().lower() in ("1", "true", "yes", "on"):
                return True
            if str(raw).strip().lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if key == "cells":
            return None if raw in (None, "", "none") else str(raw)
        typ = {"int": int, "float": float, "str": str}.get(str(f.type).split(" ")[0], str)
        if typ is int and isinstance(raw, float) and not raw.is_integer():
            raise ValueError(f"not an integer: {raw!r}")
        return typ(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}key {key!r}: {exc}") from None


def _split_rules(raw: str) -> list:
    """Split ``all-T, T:x-,y+ , N:z-`` into rules; sides stay attached to their tag."""
    out: list[str] = []
    for token in (t.strip() for t in raw.split(",")):
        if not token:
            continue
        if token in SIDES and out and ":" in out[-1]:
            out[-1] += "," + token
        else:
            out.append(token)
    return out


def _validate(cfg: RunConfig, where: dict) -> RunConfig:
    def err(key, msg):
        raise ConfigError(f"{where.get(key, '')}key {key!r}: {msg}")

    if cfg.domain not in DOMAINS and cfg.cells is None:
        err("domain", f"unknown preset {cfg.domain!r}; choose from {DOMAINS} or give 'cells'")
    if cfg.experiment not in EXPERIMENTS:
        err("experiment", f"unknown experiment {cfg.experiment!r}; choose from {EXPERIMENTS}")
    cfg.partitions = [_check_rule(r, "partitions") for r in cfg.partitions]
    cfg.divcurl_partitions = [_check_rule(r, "divcurl_partitions") for r in cfg.divcurl_partitions]
    for fam in cfg.families:
        if fam not in FAMILIES:
            err("families", f"unknown family {fam!r}; choose from {FAMILIES}")
    for key in ("resolution", "n_list", "grids"):
        if any(v < 1 for v in getattr(cfg, key)):
            err(key, "entries must be positive")
    if len(cfg.direction) != 3 or not any(cfg.direction):
        err("direction", "need three components, not all zero")
    for key in ("eig_tol", "cg_tol", "tol_rank"):
        if not getattr(cfg, key) > 0:
            err(key, "must be positive")
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse JSON or ``key = value`` text into a validated :class:`RunConfig`."""
    where: dict[str, str] = {}
    values: dict = {}
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}: malformed JSON: {exc.msg}") from None
        for key, raw in data.items():
            if key not in _FIELDS:
                raise ConfigError(f"key {key!r}: unknown key")
            values[key] = _convert(key, raw, "")
    else:
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, raw = line.partition("=")
            key = key.strip()
            if not sep:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
            if key not in _FIELDS:
                raise ConfigError(f"line {lineno}: key {key!r}: unknown key")
            if key in values:
                raise ConfigError(f"line {lineno}: key {key!r}: given twice")
            where[key] = f"line {lineno}: "
            values[key] = _convert(key, raw.strip(), where[key])
    if "domain" not in values and "cells" not in values:
        raise ConfigError("key 'domain': missing domain (a preset name or 'cells = PATH')")
    if "resolution" not in values and values.get("domain") in DEFAULT_RESOLUTION:
        values["resolution"] = list(DEFAULT_RESOLUTION[values["domain"]])
    return _validate(RunConfig(**values), where)


def emit_config(cfg: RunConfig) -> str:
    """``key = value`` text that :func:`parse_config` reads back to ``cfg``."""
    lines = []
    for name in _FIELDS:
        value = getattr(cfg, name)
        if value is None:
            continue
        if isinstance(value, list):
            text = ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{name} = {text}")
    return "\n".join(lines) + "\n"


# --- experiments ---------------------------------------------------------------------

class Recorder:
    """Collects pass/fail checks; every value in the summary comes from here."""

    def __init__(self):
        self.checks: list[dict] = []

    def add(self, name: str, passed: bool, value=None, threshold=None, note: str | None = None):
        entry = {"name": name, "passed": bool(passed), "value": _num(value), "threshold": _num(threshold)}
        if note:
            entry["note"] = note
        self.checks.append(entry)
        return passed


def _num(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def _domain(cfg: RunConfig, resolution: int):
    from .grid import build_grid, read_cell_list
    from .presets import preset_domain

    if cfg.cells:
        mask = read_cell_list(cfg.cells)
        for ax in range(3):
            mask = np.repeat(mask, resolution, axis=ax)
        # the longest side of the bounding box has unit length
        return build_grid(mask.shape, mask, h=1.0 / max(mask.shape), name=Path(cfg.cells).stem)
    return preset_domain(cfg.domain, resolution)


def _label(cfg: RunConfig, res: int, rule: str) -> str:
    name = Path(cfg.cells).stem if cfg.cells else cfg.domain
    return f"{name}/r{res}/{rule}"


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_")


# errors a numerical run can raise; they fail the case instead of the run
NUMERICAL_ERRORS = (ArithmeticError, RuntimeError, AssertionError, np.linalg.LinAlgError)


def _cases(cfg: RunConfig, rec: Recorder, prefix: str, body) -> list[dict]:
    """Call ``body(index, res, rule, label)`` per resolution and partition, recording failures."""
    from .grid import enumerate_entities

    rows = []
    for res in cfg.resolution:
        index = enumerate_entities(_domain(cfg, res))
        for rule in cfg.partitions:
            label = _label(cfg, res, rule)
            try:
                rows.append(body(index, res, rule, label))
            except NUMERICAL_ERRORS as exc:
                rec.add(f"{prefix}/{label}/completed", False, note=f"{type(exc).__name__}: {exc}")
                rows.append({"case": label, "error": f"{type(exc).__name__}: {exc}"})
    return rows


def run_complex_check(cfg: RunConfig, rec: Recorder) -> list[dict]:
    from .grid import validate_admissible
    from .operators import adjoint_mismatch, assemble, check_complex_property, check_integration_by_parts

    def case(index, res, rule, label):
        cx = assemble(index, rule)
        adm = validate_admissible(cx.partition)
        exact = check_complex_property(cx.grad, cx.curl, cx.div)
        adj = adjoint_mismatch(cx)
        ibp = check_integration_by_parts(cx, trials=cfg.ibp_trials, seed=cfg.seed)
        rec.add(f"complex/{label}/curl_grad", exact["curl_grad"] == 0.0, exact["curl_grad"], 0.0)
        rec.add(f"complex/{label}/div_curl", exact["div_curl"] == 0.0, exact["div_curl"], 0.0)
        worst_adj = max(adj.values())
        rec.add(f"adjoint/{label}", worst_adj <= 1e-14, worst_adj, 1e-14)
        rec.add(f"ibp/{label}", ibp["max"] <= 1e-12, ibp["max"], 1e-12)
        return {"case": label, "cells": int(index.count("cell")), "h": index.h,
                "admissibility_warnings": adm.warnings, "complex": exact, "adjoint": adj,
                "integration_by_parts": ibp}

    return _cases(cfg, rec, "complex", case)


def run_harmonic(cfg: RunConfig, rec: Recorder, out: Path) -> list[dict]:
    from .decompose import harmonic_basis, refined_split
    from .operators import Field, assemble

    dims: dict[str, list] = {}

    def case(index, res, rule, label):
        cx = assemble(index, rule)
        basis = harmonic_basis(cx, tol_rank=cfg.tol_rank)
        dims.setdefault(rule, []).append(basis.dimension)
        expected = None if cfg.cells else EXPECTED_DIMENSION.get((cfg.domain, rule))
        if expected is not None:
            rec.add(f"harmonic/{label}/dimension", basis.dimension == expected, basis.dimension, expected)
        if basis.dimension:
            basis.to_csv(out / f"harmonic_{_slug(label)}.csv")
        rng = np.random.default_rng(cfg.seed)
        worst = {"reconstruction": 0.0, "orthogonality": 0.0, "div_residual": 0.0, "certification": 0.0}
        for _ in range(cfg.split_trials):
            X = Field("edge", rng.standard_normal(index.count("edge")))
            split = refined_split(X, cx, basis, tol=cfg.cg_tol)
            for k in worst:
                worst[k] = max(worst[k], split.diagnostics[k])
        for key, limit in (("reconstruction", 1e-10), ("orthogonality", 1e-10), ("div_residual", 1e-8),
                           ("certification", 1e-8)):
            rec.add(f"split/{label}/{key}", worst[key] <= limit, worst[key], limit)
        return {"case": label, "dimension": basis.dimension, "warning": basis.warning, "split": worst}

    rows = _cases(cfg, rec, "harmonic", case)
    if len(cfg.resolution) > 1:
        for rule, ds in dims.items():
            rec.add(f"harmonic/{rule}/stable_across_resolutions", len(set(ds)) == 1, max(ds) - min(ds), 0)
    return rows


def run_constants(cfg: RunConfig, rec: Recorder) -> list[dict]:
    from .constants import friedrichs_poincare_constant, maxwell_constant, verify_estimates
    from .decompose import harmonic_basis
    from .operators import assemble

    def case(index, res, rule, label):
        cx = assemble(index, rule)
        basis = harmonic_basis(cx, tol_rank=cfg.tol_rank)
        fp = friedrichs_poincare_constant(cx, tol=cfg.eig_tol, seed=cfg.seed)
        mx = maxwell_constant(cx, basis, tol=cfg.eig_tol, seed=cfg.seed)
        for rep in (fp, mx):
            rec.add(f"constants/{label}/{rep.name}/residual", rep.residual <= 10 * cfg.eig_tol,
                    rep.residual, 10 * cfg.eig_tol)
            expected = EXPECTED_CONSTANTS.get((rep.name, rule))
            if expected and not cfg.cells and cfg.domain == "cube" and res >= 8:
                value, rtol = expected
                gap = abs(rep.constant - value) / value
                rec.add(f"constants/{label}/{rep.name}/limit", gap <= rtol, rep.constant, value,
                        note=f"relative tolerance {rtol:g}")
        est = verify_estimates(cx, fp, mx, basis, trials=cfg.estimate_trials, seed=cfg.seed)
        rec.add(f"estimates/{label}/worst_fp", est.worst_fp <= 1.0, est.worst_fp, 1.0)
        rec.add(f"estimates/{label}/worst_maxwell", est.worst_maxwell <= 1.0, est.worst_maxwell, 1.0)
        for name, val in (("eigenfield_fp", est.eigenfield_fp), ("eigenfield_maxwell", est.eigenfield_maxwell)):
            rec.add(f"estimates/{label}/{name}", abs(val - 1.0) <= 1e-6, val, 1.0)
        return {"case": label, "friedrichs_poincare": fp.to_dict(), "maxwell": mx.to_dict(),
                "estimates": est.to_dict()}

    return _cases(cfg, rec, "constants", case)


def run_divcurl(cfg: RunConfig, rec: Recorder, out: Path) -> dict:
    from .divcurl import (HarnessConfig, HypothesisViolation, bump_cutoff, get_family, oscillation_dual_norms,
                          run_alternative, run_local, run_theorem1)

    hcfg = HarnessConfig(quadrature=cfg.quadrature, solver_tol=cfg.cg_tol, dictionary_seed=cfg.seed)
    result: dict = {"theorem1": [], "local": [], "alternative": [], "dual_norm_oscillation": None}
    tables: dict[str, list] = {"theorem1": [], "local": [], "alternative": []}
    cutoff = bump_cutoff(cfg.cutoff_margin)
    for name in cfg.families:
        fam = get_family(name, tuple(cfg.direction))
        for rule in cfg.divcurl_partitions:
            expect_violation = fam.counterexample or rule not in fam.compatible
            try:
                rep = run_theorem1(fam, cfg.n_list, cfg.grids, rule, hcfg)
                violated = False
            except HypothesisViolation as exc:
                rep = exc.report
                violated = True
            entry = rep.to_dict()
            entry["expected_violation"] = expect_violation
            result["theorem1"].append(entry)
            tables["theorem1"].extend(dict(r, partition=rule) for r in rep.rows())
            tag = f"divcurl/theorem1/{name}/{rule}"
            if expect_violation:
                rec.add(tag, violated, rep.verdict, "hypothesis violation")
            else:
                rec.add(tag, rep.verdict == "PASS", rep.verdict, "PASS")
                if not violated:
                    rec.add(f"{tag}/defect_slope", rep.slopes["defect"] <= -0.5, rep.slopes["defect"], -0.5)
                    rec.add(f"{tag}/terminal_defect", rep.checks["terminal_defect"] <= 1e-3,
                            rep.checks["terminal_defect"], 1e-3)
                    if "max_residual_increment" in rep.checks and name == "F3":
                        inc = rep.checks["max_residual_increment"]
                        rec.add(f"{tag}/residual_n_independent", inc <= 1e-6, inc, 1e-6)
        loc = run_local(fam, cutoff, cfg.n_list, hcfg)
        result["local"].append(loc.to_dict())
        tables["local"].extend(loc.rows())
        rec.add(f"divcurl/local/{name}", loc.verdict == "PASS", loc.checks["terminal_defect_error"], 1e-3)
        alt = run_alternative(fam, cfg.n_list, resolution=max(cfg.grids), config=hcfg)
        result["alternative"].append(alt.to_dict())
        tables["alternative"].extend(alt.rows())
        if fam.counterexample:
            ratio = alt.checks["div_dual_terminal_over_initial"]
            rec.add(f"divcurl/alternative/{name}/div_dual_non_decaying", ratio >= 0.5, ratio, 0.5,
                    note="demonstration, not certification")
    dual = oscillation_dual_norms(cfg.n_list, resolution=cfg.dual_resolution)
    result["dual_norm_oscillation"] = dual
    rec.add("divcurl/dual_norm_slope", abs(dual["slope"] + 1.0) <= 0.3, dual["slope"], -1.0,
            note="demonstration, not certification; tolerance 0.3")
    for key, rows in tables.items():
        _write_rows(out / f"divcurl_{key}.csv", rows)
    return result


def _write_rows(path: Path, rows: list[dict]) -> None:
    import csv

    keys: list[str] = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for r in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def _csv_cases(path: Path, rows: list[dict]) -> None:
    flat = []
    for r in rows:
        item = {}
        for k, v in r.items():
            if isinstance(v, dict):
                for kk, vv in v.items():
                    if not isinstance(vv, (dict, list)):
                        item[f"{k}.{kk}"] = vv
            elif not isinstance(v, list):
                item[k] = v
        flat.append(item)
    _write_rows(path, flat)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    obj = _num(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        # JSON has no NaN or infinity; keep them readable as strings
        return str(obj)
    return obj


def run(cfg: RunConfig, timestamp: str | None = None) -> tuple[int, dict]:
    """Run the selected experiments and write ``report.json``, CSVs and ``summary.txt``."""
    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    rec = Recorder()
    sel = cfg.experiment
    experiments: dict = {}
    if sel in ("complex-check", "all"):
        experiments["complex-check"] = run_complex_check(cfg, rec)
        _csv_cases(out / "complex_check.csv", experiments["complex-check"])
    if sel in ("harmonic", "all"):
        experiments["harmonic"] = run_harmonic(cfg, rec, out)
        _csv_cases(out / "harmonic.csv", experiments["harmonic"])
    if sel in ("constants", "all"):
        experiments["constants"] = run_constants(cfg, rec)
        _csv_cases(out / "constants.csv", experiments["constants"])
    if sel in ("divcurl", "all"):
        experiments["divcurl"] = run_divcurl(cfg, rec, out)
    failing = [c["name"] for c in rec.checks if not c["passed"]]
    report = {
        "schema_version": SCHEMA_VERSION,
        "timestamp": timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "config": dataclasses.asdict(cfg),
        "units": {"length": "unit bounding box side", "h": "voxel edge length",
                  "norms": "discrete L2 with lumped masses unless marked analytic"},
        "experiments": experiments,
        "checks": rec.checks,
        "status": "pass" if not failing else "fail",
        "failing": failing,
    }
    report = _jsonable(report)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n")
    (out / "summary.txt").write_text(summary_text(report))
    return (0 if not failing else 1), report


def summary_text(report: dict) -> str:
    """Human-readable view of ``report['checks']``; adds no numbers of its own."""
    lines = [f"status: {report['status']}  ({report['timestamp']})"]
    for c in report["checks"]:
        mark = "PASS" if c["passed"] else "FAIL"
        lines.append(f"{mark}  {c['name']}  value={c['value']!r}  threshold={c['threshold']!r}")
    if report["failing"]:
        lines.append("failing: " + ", ".join(report["failing"]))
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    epilog = "config keys and defaults:\n" + "".join(f"  {line}\n" for line in emit_config(RunConfig()).splitlines())
    p = argparse.ArgumentParser(prog="dercomplex", description=__doc__.splitlines()[0], epilog=epilog,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("command", choices=sorted(SUBCOMMANDS), help="experiment to run")
    p.add_argument("--config", type=Path, help="config file (JSON or key = value)")
    p.add_argument("--out", type=Path, help="output directory (overrides config 'output')")
    p.add_argument("--seed", type=int, help="random seed (overrides config 'seed')")
    p.add_argument("--resolution", help="comma-separated resolutions (overrides config)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text() if args.config else "domain = cube\n"
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
        if args.resolution:
            cfg.resolution = _convert("resolution", args.resolution, "--resolution: ")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    cfg.experiment = SUBCOMMANDS[args.command]
    if args.out:
        cfg.output = str(args.out)
    if args.seed is not None:
        cfg.seed = args.seed
    try:
        code, report = run(cfg)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(summary_text(report), end="")
    if code:
        print("failing checks: " + ", ".join(report["failing"]), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
