"""Command-line front end: ``cocyclelab COMMAND --config FILE``.

Every command reads one JSON configuration (validated against the shipped
``config.schema.json``), writes its results under the output directory and
finishes with ``manifest-COMMAND.json`` listing sha256 digests of everything it
wrote. Exit codes: 0 success, 2 configuration error, 3 violated
precondition, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import re
import sys
from importlib import resources
from pathlib import Path

import jsonschema

from . import diagnostics as dg
from .algebra import SU2
from .dynamics import BirkhoffSeries, Observable, default_checkpoints, iterate_orbit
from .errors import CocycleLabError, ConfigInvalid
from .normal_form import CocycleSpec, PlanParams, assemble, constant_spec, plan_levels, verify_level
from .torus import RotationSpec, TorusAngle

COMMANDS = ("plan", "verify", "orbit", "birkhoff", "conditions", "chain", "clusters", "coverage", "scan-phase")
GOLDEN_CONJUGATE = (math.sqrt(5.0) - 1.0) / 2.0


# --- configuration ------------------------------------------------------------------


def load_schema() -> dict:
    return json.loads(resources.files("cocyclelab").joinpath("config.schema.json").read_text())


def _defaults(schema: dict) -> dict:
    out = {}
    for key, sub in schema.get("properties", {}).items():
        if sub.get("type") == "object":
            out[key] = _defaults(sub)
        elif "default" in sub:
            out[key] = copy.deepcopy(sub["default"])
    return out


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(base[k], v) if isinstance(v, dict) and isinstance(base.get(k), dict) else v
    return out


def _error_path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        m = re.match(r"'(.+?)' is a required property", err.message)
        if m:
            parts.append(m.group(1))
    elif err.validator == "additionalProperties":
        m = re.search(r"\('(.+?)'", err.message)
        if m:
            parts.append(m.group(1))
    return ".".join(parts) or "<root>"


def validate_config(raw: dict) -> dict:
    """Validate against the schema and fill documented defaults."""
    schema = load_schema()
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(raw), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        err = errors[0]
        raise ConfigInvalid(_error_path(err), err.message)
    return _merge(_defaults(schema), raw)


def load_config(path: str | None) -> tuple[dict, Path]:
    if path is None:
        return validate_config({}), Path.cwd()
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigInvalid(str(p), "config file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(str(p), f"not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigInvalid("<root>", "config must be a JSON object")
    return validate_config(raw), p.resolve().parent


def _alpha(cfg: dict) -> RotationSpec:
    try:
        return RotationSpec.parse(cfg["alpha"], cfg["precision_bits"])
    except ValueError as exc:
        raise ConfigInvalid("alpha", str(exc)) from None


def plan_params(cfg: dict) -> PlanParams:
    p = cfg["plan"]
    return PlanParams(
        alpha=_alpha(cfg),
        depth=p["depth"],
        ks=tuple(p["ks"]) if p["ks"] is not None else None,
        cf_positions=tuple(p["cf_positions"]) if p["cf_positions"] is not None else None,
        first_position=p["first_position"],
        growth=tuple(p["growth"]) if p["growth"] is not None else None,
        theta=tuple(p["theta"]),
        phi=tuple(p["phi"]) if p["phi"] is not None else None,
        epsilon=cfg["probes"]["epsilon"],
        top_mode=p["top_mode"],
        top_magnitude=p["top_magnitude"],
        top_k=p["top_k"],
        top_offset=p["top_offset"],
        couple_fhat_to_next_iterate=p["couple_fhat_to_next_iterate"],
        scan_K=p["scan_K"],
    )


def obtain_spec(cfg: dict, base: Path) -> CocycleSpec:
    if cfg["spec"]:
        path = (base / cfg["spec"]).resolve()
        if not path.exists():
            raise ConfigInvalid("spec", f"spec file {cfg['spec']} does not exist")
        spec = CocycleSpec.from_json(path.read_text())
        if spec.precision_bits != cfg["precision_bits"]:
            raise ConfigInvalid("precision_bits", "differs from the precision recorded in the spec file")
        return spec
    try:
        return plan_levels(plan_params(cfg))
    except ValueError as exc:
        raise ConfigInvalid("plan", str(exc)) from None


# --- sequences for the clustering commands ----------------------------------------------


def theta_sequence(decay: str, horizon: int) -> list[float]:
    i = range(1, horizon + 1)
    if decay == "harmonic":
        return [1.0 / (j + 1) for j in i]
    if decay == "geometric":
        return [2.0 ** -j for j in i]
    if decay.startswith("power:"):
        p = float(decay.split(":", 1)[1])
        return [(j + 1) ** -p for j in i]
    raise ConfigInvalid("probes.theta_decay", f"unknown decay {decay!r}")


def phi_sequence(pattern: str, horizon: int) -> list[float]:
    i = range(1, horizon + 1)
    if pattern == "zero":
        return [0.0] * horizon
    if pattern == "alternating":
        return [0.5 * (j % 2) for j in i]
    if pattern.startswith("rotation:"):
        arg = pattern.split(":", 1)[1]
        beta = GOLDEN_CONJUGATE if arg == "golden" else float(arg)
        return [(j * beta) % 1.0 for j in i]
    raise ConfigInvalid("probes.phi_pattern", f"unknown phase pattern {pattern!r}")


# --- output -----------------------------------------------------------------------------


class Output:
    def __init__(self, directory: Path, formats):
        self.directory = directory
        self.formats = set(formats)
        self.files: dict[str, str] = {}
        directory.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> None:
        data = text.encode()
        (self.directory / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def copy_from(self, name: str, path: Path) -> None:
        self.write(name, path.read_text())

    def report(self, stem: str, report) -> None:
        if "json" in self.formats:
            self.write(f"{stem}.json", dg.to_json(report) if hasattr(report, "to_dict") else _dumps(report))
        if "text" in self.formats and hasattr(report, "to_text"):
            self.write(f"{stem}.txt", report.to_text())

    def manifest(self, command: str, status: int) -> None:
        body = {"command": command, "status": status, "files": dict(sorted(self.files.items()))}
        (self.directory / f"manifest-{command}.json").write_text(_dumps(body))


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class _Dict:
    def __init__(self, d, text=None):
        self._d = d
        self._text = text

    def to_dict(self):
        return self._d

    def to_text(self):
        return self._text or ""


# --- commands --------------------------------------------------------------------------


def cmd_plan(cfg, base, out: Output, args):
    spec = obtain_spec(cfg, base)
    out.write("spec.json", spec.to_json())
    if "text" in out.formats:
        rows = [[i, lv.k, lv.n, lv.tau_adjust, lv.theta, lv.phi, lv.a.to_float(), abs(lv.fhat)] for i, lv in enumerate(spec.levels, 1)]
        text = dg.format_table(["level", "k", "n", "tau", "theta", "phi", "a", "|fhat|"], rows)
        text += f"alpha {spec.alpha.text()}; a_top {spec.a_top.to_float()!r}; tau bound {spec.tau_bound:g}\n"
        out.write("plan.txt", text)


def cmd_verify(cfg, base, out, args):
    spec = obtain_spec(cfg, base)
    cocycle = assemble(spec)
    reports = [verify_level(cocycle, i, cfg["probes"]["grid"]) for i in range(1, spec.depth + 1)]
    rows = [[r.level, r.k, r.conjugacy_residual, r.forward_residual, r.sup_norm, r.dominant_frequency, r.frequency_ok, r.plan_mismatch] for r in reports]
    text = dg.format_table(["level", "k", "conj. resid", "fwd resid", "sup F", "dominant", "ok", "plan mismatch"], rows)
    out.report("verify", _Dict({"grid": cfg["probes"]["grid"], "levels": [r.to_dict() for r in reports]}, text))


def _start(cfg, spec) -> TorusAngle:
    return TorusAngle.from_float(cfg["run"]["x0"], spec.precision_bits)


def cmd_orbit(cfg, base, out, args):
    spec = obtain_spec(cfg, base)
    cocycle = assemble(spec)
    run = cfg["run"]
    sample = iterate_orbit(cocycle, _start(cfg, spec), SU2.identity(), run["n"], run["stride"])
    if "csv" in out.formats:
        path = out.directory / "orbit.csv"
        sample.to_csv(path)
        out.copy_from("orbit.csv", path)
    summary = {"n": run["n"], "stride": run["stride"], "points": len(sample.points),
               "max_unitarity_defect": sample.max_unitarity_defect()}
    out.report("orbit", _Dict(summary, "".join(f"{k} {v}\n" for k, v in sorted(summary.items()))))


def cmd_birkhoff(cfg, base, out, args):
    spec = obtain_spec(cfg, base)
    cocycle = assemble(spec)
    run = cfg["run"]
    n = max(1, run["n"])
    obs = _observable(run["observable"])
    cps = run["checkpoints"] or default_checkpoints(n, [lv.n for lv in spec.levels])
    if run["starts"] == 1:
        starts = [(_start(cfg, spec), SU2.identity())]
    else:
        starts = dg.haar_starts(run["starts"], args.seed, spec.precision_bits)
    report = dg.ue_probe(cocycle, obs, starts, n, cps, workers=args.workers)
    out.report("birkhoff", report)
    if "csv" in out.formats:
        for j, values in enumerate(report.per_start):
            path = out.directory / f"birkhoff_start{j}.csv"
            BirkhoffSeries(obs.text(), report.checkpoints, values).to_csv(path)
            out.copy_from(path.name, path)


def _observable(text: str) -> Observable:
    try:
        return Observable.parse(text)
    except ValueError as exc:
        raise ConfigInvalid("run.observable", str(exc)) from None


def cmd_conditions(cfg, base, out, args):
    spec = obtain_spec(cfg, base)
    out.report("conditions", dg.check_conditions(spec, cfg["probes"]["grid"]))


def cmd_chain(cfg, base, out, args):
    spec = obtain_spec(cfg, base)
    out.report("chain", dg.proof_chain_report(assemble(spec)))


def cmd_clusters(cfg, base, out, args):
    pr = cfg["probes"]
    h = pr["horizon"]
    report = dg.partial_product_clusters(
        theta_sequence(pr["theta_decay"], h), phi_sequence(pr["phi_pattern"], h), h, pr["cluster_radius"], pr["subsequence"]
    )
    out.report("clusters", report)


def cmd_coverage(cfg, base, out, args):
    spec = obtain_spec(cfg, base)
    pr, run = cfg["probes"], cfg["run"]
    net = tuple(pr["net"])
    try:
        report = dg.coverage_probe(assemble(spec), net, run["n"], run["stride"], run["checkpoints"])
        body = {"synthesized": report.to_dict()}
        text = "synthesized\n" + report.to_text()
        if pr["coverage_baseline"]:
            const = dg.coverage_probe(assemble(constant_spec(spec.alpha, spec.a_top)), net, run["n"], run["stride"], run["checkpoints"])
            body["constant"] = const.to_dict()
            ratio = report.fraction[-1] / const.fraction[-1]
            body["final_ratio"] = ratio
            text += "constant cocycle with the same top rotation\n" + const.to_text() + f"final coverage ratio {ratio:.6g}\n"
    except ValueError as exc:
        raise ConfigInvalid("probes.net", str(exc)) from None
    out.report("coverage", _Dict(body, text))


def cmd_scan_phase(cfg, base, out, args):
    pr = cfg["probes"]
    h, r = pr["horizon"], pr["cluster_radius"]
    rows = []
    for decay in pr["scan_theta_decays"]:
        theta = theta_sequence(decay, h)
        for pattern in pr["scan_phi_patterns"]:
            rep = dg.partial_product_clusters(theta, phi_sequence(pattern, h), h, r)
            rows.append({"theta_decay": decay, "phi_pattern": pattern, "n_clusters": rep.n_clusters,
                         "min_separation": rep.min_separation, "transient": rep.transient})
    head = ["theta_decay", "phi_pattern", "n_clusters", "min_separation", "transient"]
    text = dg.format_table(head, [[row[k] for k in head] for row in rows])
    out.report("scan_phase", _Dict({"horizon": h, "radius": r, "cells": rows}, text))
    if "csv" in out.formats:
        lines = [",".join(head)] + [",".join(_csv_cell(row[k]) for k in head) for row in rows]
        out.write("scan_phase.csv", "\n".join(lines) + "\n")


def _csv_cell(v) -> str:
    return "" if v is None else (repr(v) if isinstance(v, float) else str(v))


HANDLERS = {
    "plan": cmd_plan,
    "verify": cmd_verify,
    "orbit": cmd_orbit,
    "birkhoff": cmd_birkhoff,
    "conditions": cmd_conditions,
    "chain": cmd_chain,
    "clusters": cmd_clusters,
    "coverage": cmd_coverage,
    "scan-phase": cmd_scan_phase,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cocyclelab", description="Finite-depth KAM normal forms of SU(2) cocycles.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON configuration file")
    ap.add_argument("--out", help="output directory (overrides output.directory)")
    ap.add_argument("--precision-bits", type=int, help="fixed-point precision (overrides precision_bits)")
    ap.add_argument("--seed", type=int, default=0, help="seed for random starts")
    ap.add_argument("--workers", type=int, default=1, help="worker processes for independent starts")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = None
    try:
        cfg, base = load_config(args.config)
        if args.precision_bits is not None:
            cfg = validate_config({**cfg, "precision_bits": args.precision_bits})
        directory = Path(args.out) if args.out else base / cfg["output"]["directory"]
        out = Output(directory, cfg["output"]["formats"])
        HANDLERS[args.command](cfg, base, out, args)
        out.manifest(args.command, 0)
        return 0
    except CocycleLabError as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        if isinstance(exc, ConfigInvalid):
            record["path"] = exc.path
        print(_dumps(record), end="", file=sys.stderr)
        if out is not None:
            out.write("error.json", _dumps(record))
            out.manifest(args.command, exc.exit_code)
        return exc.exit_code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
