"""Command-line front end.

Config files are TOML with these sections::

    [system]    N, alpha, epsilon_override, mu_total, mu_list, regime, sigma_a2,
                nu_s2, gamma, delta, A_max, S_max
    [run]       seed, horizon, warmup, post_warmup, thin, ceiling, replications
    [policy]    name = "jsq" | "random" | "power_of_d" | "p_jsq" | "custom"; d, p, table
    [arrivals]  support, pmf      (optional explicit component pmf)
    [services]  support, pmf      (optional explicit per-server pmf)
    [sweep]     N_list, r
    [project]   vector, gamma

``--set section.key=value`` (or a bare key that is unambiguous) overrides a
value; the right-hand side is parsed as a TOML value. ``HTSLB_SEED`` in the
environment overrides ``run.seed``.

Exit codes: 0 success, 1 config or usage error, 2 divergence guard tripped,
3 policy not certified.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import analysis, engine, geometry
from .errors import DivergenceGuard, HtslbError
from .model import build_config
from .policies import certify_pi1, policy_from_mapping

SCHEMA_LINE = "# hts-lb schema v1"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_NOT_CERTIFIED = 3

SECTIONS = ("system", "run", "policy", "arrivals", "services", "sweep", "project")
RUN_ONLY = {"replications", "max_states"}
SECTION_KEYS = {
    "system": {"N", "alpha", "epsilon_override", "mu_total", "mu_list", "regime", "sigma_a2",
               "nu_s2", "gamma", "delta", "A_max", "S_max", "amax_ratio_min", "amax_ratio_max"},
    "run": {"seed", "horizon", "warmup", "post_warmup", "thin", "ceiling"} | RUN_ONLY,
    "policy": {"name", "d", "p", "table"},
    "arrivals": {"support", "pmf"},
    "services": {"support", "pmf"},
    "sweep": {"N_list", "r"},
    "project": {"vector", "gamma"},
}


class ConfigError(Exception):
    pass


@dataclass
class ExperimentManifest:
    command: str
    config_path: str = None
    output_dir: str = None
    overrides: list = field(default_factory=list)


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _resolve_key(key: str):
    if "." in key:
        section, name = key.split(".", 1)
        if section not in SECTION_KEYS or name not in SECTION_KEYS[section]:
            raise ConfigError(f"--set: unknown key {key!r}")
        return section, name
    owners = [s for s, keys in SECTION_KEYS.items() if key in keys]
    if len(owners) != 1:
        what = "unknown" if not owners else f"ambiguous ({', '.join(owners)})"
        raise ConfigError(f"--set: {what} key {key!r}; use section.key")
    return owners[0], key


def load_config(manifest: ExperimentManifest) -> dict:
    """Read the TOML file, apply HTSLB_SEED, then the ``--set`` overrides."""
    doc = {}
    if manifest.config_path is not None:
        path = Path(manifest.config_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
    for section, body in doc.items():
        if section not in SECTION_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        bad = set(body) - SECTION_KEYS[section]
        if bad:
            raise ConfigError(f"[{section}]: unknown key(s) {', '.join(sorted(bad))}")
    doc = {s: dict(doc.get(s, {})) for s in SECTIONS}
    env_seed = os.environ.get("HTSLB_SEED")
    if env_seed:
        try:
            doc["run"]["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"HTSLB_SEED: not an integer: {env_seed!r}") from None
    for item in manifest.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        section, name = _resolve_key(key.strip())
        doc[section][name] = _parse_value(value.strip())
    return doc


def system_params(doc: dict) -> dict:
    raw = dict(doc["system"])
    raw.update({k: v for k, v in doc["run"].items() if k not in RUN_ONLY})
    if doc["arrivals"]:
        raw["arrival_pmf"] = (doc["arrivals"].get("support"), doc["arrivals"].get("pmf"))
    if doc["services"]:
        raw["service_pmf"] = (doc["services"].get("support"), doc["services"].get("pmf"))
    return raw


def _policy(doc: dict):
    spec = dict(doc["policy"]) or {"name": "jsq"}
    return policy_from_mapping(spec)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _out_dir(manifest: ExperimentManifest) -> Path:
    if manifest.output_dir is None:
        raise ConfigError("--out is required for this command")
    out = Path(manifest.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else "nan"
    return str(x)


def write_sample_csv(path: Path, sample) -> None:
    with open(path, "w") as fh:
        fh.write(SCHEMA_LINE + "\n")
        fh.write("replication,seed,index,scaled_total\n")
        for i, (rep, part) in enumerate(zip(sample.replications, sample.per_replication())):
            lines = [f"{i},{rep.seed},{j},{v!r}" for j, v in enumerate(part.tolist())]
            if lines:
                fh.write("\n".join(lines) + "\n")


def write_report_csv(path: Path, report) -> None:
    with open(path, "w") as fh:
        fh.write(SCHEMA_LINE + "\n")
        fh.write(",".join(analysis.ROW_COLUMNS) + "\n")
        for row in report.rows:
            fh.write(",".join(_fmt(getattr(row, c)) for c in analysis.ROW_COLUMNS) + "\n")


def cmd_simulate(manifest: ExperimentManifest, jobs: int = 1, trace: bool = False) -> int:
    doc = load_config(manifest)
    config = build_config(system_params(doc))
    policy = _policy(doc)
    R = int(doc["run"].get("replications", 1))
    out = _out_dir(manifest)
    kwargs = {}
    if trace:
        kwargs["trace_path"] = str(out / "trace.csv")
    sample = engine.replicate(config, policy, R, jobs=jobs, **kwargs)
    ident = analysis.check_identities(sample, config)
    terms = analysis.estimate_cross_term(sample, config)
    write_sample_csv(out / "sample.csv", sample)
    (out / "identities.json").write_text(dump_json(
        {"config": config.as_dict(), "policy": policy.name, **ident.as_dict()}))
    (out / "error_terms.json").write_text(dump_json(
        {"config": config.as_dict(), "policy": policy.name, **terms.as_dict()}))
    print(f"simulate: N={config.N} policy={policy.name} replications={R} "
          f"observations={sample.size} mean_scaled={sample.scaled_totals.mean():.6g} "
          f"u_l1_mean={terms.u_l1_mean:.6g} (epsilon={config.epsilon:.6g}) "
          f"identities={ident.diagnosis}")
    return EXIT_OK


def cmd_sweep(manifest: ExperimentManifest, jobs: int = 1) -> int:
    doc = load_config(manifest)
    sweep = doc["sweep"]
    if "N_list" not in sweep:
        raise ConfigError("[sweep]: N_list is required")
    N_list = sweep["N_list"]
    if not isinstance(N_list, list) or not all(isinstance(n, int) for n in N_list):
        raise ConfigError("[sweep]: N_list must be a list of integers")
    base = build_config(system_params(doc))
    policy = _policy(doc)
    R = int(doc["run"].get("replications", 4))
    r = int(sweep.get("r", 2))
    out = _out_dir(manifest)

    def show(row):
        print(f"N={row.N} w1={row.w1:.6g}±{row.w1_se:.3g} ks={row.ks:.4g} "
              f"mean={row.sample_mean:.6g} (limit {row.exp_mean:.6g}) g={row.g_estimate:.4g} "
              f"identity={'pass' if row.identity_pass else 'FAIL'}")

    report = analysis.convergence_sweep(base, policy, N_list, r=r, R=R, jobs=jobs, progress=show)
    write_report_csv(out / "report.csv", report)
    (out / "report.json").write_text(dump_json(
        {"config": base.as_dict(), "policy": policy.name, "r": r, **report.as_dict()}))
    return EXIT_OK


def cmd_verify_policy(manifest: ExperimentManifest) -> int:
    doc = load_config(manifest)
    config = build_config(system_params(doc))
    policy = _policy(doc)
    cert = certify_pi1(policy, config)
    text = dump_json({"policy": policy.name, "N": config.N, "gamma": config.gamma,
                      "delta": config.delta, **cert.as_dict()})
    sys.stdout.write(text)
    if manifest.output_dir is not None:
        (_out_dir(manifest) / "certificate.json").write_text(text)
    return EXIT_OK if cert.satisfied else EXIT_NOT_CERTIFIED


def _parse_vector(value):
    if isinstance(value, str):
        parts = [p for p in value.replace(",", " ").split() if p]
        try:
            return [float(p) for p in parts]
        except ValueError:
            raise ConfigError(f"malformed vector {value!r}") from None
    if isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                       for v in value):
        return [float(v) for v in value]
    raise ConfigError(f"malformed vector {value!r}")


def cmd_project(manifest: ExperimentManifest, vector=None, gamma=None, self_check=False) -> int:
    doc = load_config(manifest)
    proj = doc["project"]
    raw = vector if vector is not None else proj.get("vector")
    if raw is None:
        raise ConfigError("project: a vector is required (--vector or [project] vector)")
    x = _parse_vector(raw)
    if not x or not all(math.isfinite(v) for v in x):
        raise ConfigError(f"malformed vector {raw!r}")
    g = gamma if gamma is not None else proj.get("gamma", doc["system"].get("gamma", 1.0))
    dec = geometry.project_to_cone(x, g)
    payload = {"gamma": float(g), "x": x, **dec.as_dict()}
    code = EXIT_OK
    if self_check:
        checks = geometry.decomposition_checks(x, dec, float(g))
        payload["self_check"] = checks
        if not all(checks.values()):
            code = EXIT_CONFIG
    sys.stdout.write(dump_json(payload))
    return code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="K=V", help="override a config value (repeatable)")
    p = _Parser(prog="htslb", description="Many-server heavy-traffic load balancing simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sim = sub.add_parser("simulate", parents=[common], help="replicated steady-state run")
    sim.add_argument("--jobs", type=int, default=1)
    sim.add_argument("--trace", action="store_true", help="write per-slot trace.csv")
    sw = sub.add_parser("sweep", parents=[common], help="convergence sweep over N_list")
    sw.add_argument("--jobs", type=int, default=1)
    sub.add_parser("verify-policy", parents=[common], help="certify class Pi_1 membership")
    pr = sub.add_parser("project", parents=[common], help="project a vector onto K_gamma")
    pr.add_argument("--vector", help="comma- or space-separated entries")
    pr.add_argument("--gamma", type=float)
    pr.add_argument("--self-check", action="store_true",
                    help="verify decomposition invariants; exit 1 if any fails")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        manifest = ExperimentManifest(args.command, args.config, args.out, args.overrides)
        if args.command == "simulate":
            return cmd_simulate(manifest, jobs=args.jobs, trace=args.trace)
        if args.command == "sweep":
            return cmd_sweep(manifest, jobs=args.jobs)
        if args.command == "verify-policy":
            return cmd_verify_policy(manifest)
        return cmd_project(manifest, args.vector, args.gamma, args.self_check)
    except DivergenceGuard as exc:
        print(f"htslb: divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, HtslbError, OSError) as exc:
        print(f"htslb: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
