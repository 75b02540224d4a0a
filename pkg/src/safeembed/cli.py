"""Command-line front end.

Verbs:
  run         simulate a scenario (or an inline builtin system from a JSON
              config) and write CSV tracks plus an assertion report
  check       run a scenario's assertion suite with seed 0
  synthesize  compute a gain for a scenario/builtin and emit K, the
              closed-loop spectrum, and the (Abar, Bbar) used, as CSV
  linearize   emit (Abar, Bbar) for a scenario/builtin as CSV

Exit status: 0 success, 1 assertion failure, 2 config error, 3 numerical
failure.  The default output root is $SAFE_EMBED_OUT, falling back to ./out.
No command mutates its inputs; all files are written atomically.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import scenarios as sc
from .analysis import simulate_closed_loop
from .embedding import consistent_xbar0
from .linearize import linearize_embedded
from .model import DisturbanceSignal, LinearFeedback
from .numkit import NumericsError, eigenvalues, is_hurwitz
from .synthesis import ackermann, assemble_pidb, closed_loop_matrix, lqr, PidbGains

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_NUMERICS = 3

BUILTIN_SYSTEMS = ("case_study", "linear2d", "acc", "robots2d")


class ConfigError(ValueError):
    pass


def _default_out() -> Path:
    return Path(os.environ.get("SAFE_EMBED_OUT", "out"))


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    version = cfg.get("schema_version", sc.SCHEMA_VERSION)
    if version != sc.SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}")
    allowed = {
        "schema_version", "scenario", "system", "overrides", "controller",
        "disturbance", "seed", "dt", "horizon", "out",
    }
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _build_inline(system_spec: dict):
    """Embedded system + default feedback + initial state for a builtin."""
    if not isinstance(system_spec, dict) or "builtin" not in system_spec:
        raise ConfigError("inline system spec needs a 'builtin' name")
    name = system_spec["builtin"]
    params = system_spec.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("system params must be an object")
    try:
        if name == "case_study":
            x0 = float(params.pop("x0", 1.6))
            embedded, feedback = sc.build_case_study(**params)
            xbar0 = consistent_xbar0(embedded, np.array([x0]))
        elif name == "linear2d":
            x0 = params.pop("x0", None)
            p = sc.scenario_params("linear_safe", params)
            embedded, feedback = sc.build_linear_safe(p)
            start = np.asarray(x0 if x0 is not None else p.initial_states[0], dtype=float)
            xbar0 = consistent_xbar0(embedded, start)
        elif name == "acc":
            p = sc.scenario_params("acc_pidb", params)
            embedded, feedback = sc.build_acc(p)
            xbar0 = consistent_xbar0(embedded, np.asarray(p.x0, dtype=float))
        elif name == "robots2d":
            p = sc.scenario_params("robots", params)
            embedded, feedback, _ = sc.build_robots(p)
            x0 = np.array([*p.start_i, *p.start_j])
            xbar0 = consistent_xbar0(embedded, x0)
        else:
            raise ConfigError(
                f"unknown builtin {name!r}; expected one of {BUILTIN_SYSTEMS}"
            )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad parameters for builtin {name!r}: {exc}") from exc
    return embedded, feedback, xbar0


def _make_controller(spec, embedded, default_feedback) -> LinearFeedback:
    if spec is None or spec == {"type": "paper_gain"} or spec == "paper_gain":
        return default_feedback
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError("controller spec needs a 'type'")
    kind = spec["type"]
    lin = linearize_embedded(embedded)
    if kind == "ackermann":
        poles = spec.get("poles")
        if not poles:
            raise ConfigError("ackermann controller needs 'poles'")
        K = ackermann(lin.Abar, lin.Bbar, [complex(p) if isinstance(p, str) else p for p in poles])
        return LinearFeedback(K=K, sign=-1, xref=embedded.xbar_eq)
    if kind == "lqr":
        nbar, m = lin.Abar.shape[0], lin.Bbar.shape[1]
        Q = np.asarray(spec.get("Q", np.eye(nbar).tolist()), dtype=float)
        R = np.asarray(spec.get("R", np.eye(m).tolist()), dtype=float)
        if Q.ndim == 0:
            Q = float(Q) * np.eye(nbar)
        if R.ndim == 0:
            R = float(R) * np.eye(m)
        K = lqr(lin.Abar, lin.Bbar, Q, R)
        return LinearFeedback(K=K, sign=-1, xref=embedded.xbar_eq)
    if kind == "pidb":
        try:
            gains = PidbGains(
                kp=float(spec["kp"]), ki=float(spec["ki"]),
                kd=float(spec["kd"]), kb=float(spec["kb"]),
            )
        except KeyError as exc:
            raise ConfigError(f"pidb controller missing gain {exc}") from exc
        fb = assemble_pidb(gains, nbar=embedded.nbar, xref=embedded.xbar_eq)
        if embedded.m > 1:
            K = np.vstack([fb.K, np.zeros((embedded.m - 1, embedded.nbar))])
            fb = LinearFeedback(K=K, sign=-1, xref=embedded.xbar_eq)
        return fb
    raise ConfigError(f"unknown controller type {kind!r}")


def _make_disturbance(spec) -> DisturbanceSignal | None:
    if spec is None:
        return None
    if not isinstance(spec, dict):
        raise ConfigError("disturbance spec must be an object")
    try:
        return DisturbanceSignal(
            kind=spec.get("kind", "zero"),
            bound=float(spec.get("bound", 0.0)),
            seed=int(spec.get("seed", 0)),
            decay=float(spec.get("decay", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad disturbance spec: {exc}") from exc


def _write_matrix_csv(path: Path, M: np.ndarray, header: str) -> None:
    M = np.atleast_2d(np.asarray(M))
    lines = [f"# schema_version={sc.SCHEMA_VERSION} {header}"]
    for row in M:
        lines.append(",".join(f"{v.real:.17g}" if np.iscomplexobj(M) and v.imag == 0
                              else (f"{v:.17g}" if not np.iscomplexobj(M)
                                    else f"{v.real:.17g}{v.imag:+.17g}j")
                              for v in row))
    sc._atomic_write(path, "\n".join(lines) + "\n")


def _resolve_target(args, cfg: dict):
    """(embedded, default feedback, xbar0 or None, label) from CLI/config."""
    scenario = args.scenario or cfg.get("scenario")
    system_spec = cfg.get("system")
    if scenario and system_spec:
        raise ConfigError("give either a scenario or an inline system, not both")
    if scenario:
        if scenario not in sc.SCENARIO_IDS:
            raise ConfigError(f"unknown scenario {scenario!r}; expected one of {sc.SCENARIO_IDS}")
        overrides = cfg.get("overrides") or {}
        params = sc.scenario_params(scenario, overrides)
        if scenario == "linear_safe":
            embedded, feedback = sc.build_linear_safe(params)
            xbar0 = consistent_xbar0(embedded, np.asarray(params.initial_states[0]))
        elif scenario == "input_constrained":
            embedded, feedback = sc.build_input_constrained(params)
            u0 = sc.balanced_initial_input(embedded, feedback, params.initial_state,
                                           params.u_limit)
            xbar0 = consistent_xbar0(
                embedded, np.concatenate([np.asarray(params.initial_state), [u0]])
            )
        elif scenario in ("acc_pidb", "acc_is3"):
            embedded, feedback = sc.build_acc(params)
            xbar0 = consistent_xbar0(embedded, np.asarray(params.x0))
        else:
            embedded, feedback, _ = sc.build_robots(params)
            xbar0 = consistent_xbar0(
                embedded, np.array([*params.start_i, *params.start_j])
            )
        return embedded, feedback, xbar0, scenario
    if system_spec:
        embedded, feedback, xbar0 = _build_inline(system_spec)
        return embedded, feedback, xbar0, system_spec["builtin"]
    raise ConfigError("nothing to do: give --scenario or a config with scenario/system")


def _cmd_run(args) -> int:
    cfg = _load_config(args.config) if args.config else {}
    out_dir = Path(args.out or cfg.get("out") or _default_out())
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    scenario = args.scenario or cfg.get("scenario")
    if scenario and not cfg.get("system"):
        overrides = dict(cfg.get("overrides") or {})
        if args.dt is not None:
            overrides["dt"] = args.dt
        if args.horizon is not None:
            overrides["T"] = args.horizon
        result = sc.run_scenario(scenario, overrides=overrides, seed=seed, out_dir=out_dir)
        for rec in result.assertions:
            print(f"[{rec.verdict.upper():10s}] {result.scenario}:{rec.id}  "
                  f"expected {rec.expected}; observed {rec.observed}")
        for f in result.files:
            print(f"wrote {f}")
        return EXIT_OK if result.passed else EXIT_ASSERTION
    # inline system run: no assertions requested, just tracks
    embedded, default_fb, xbar0, label = _resolve_target(args, cfg)
    feedback = _make_controller(cfg.get("controller"), embedded, default_fb)
    disturbance = _make_disturbance(cfg.get("disturbance"))
    if disturbance is not None:
        disturbance = disturbance.with_seed(seed if args.seed is not None else disturbance.seed)
    T = args.horizon if args.horizon is not None else float(cfg.get("horizon", 10.0))
    dt = args.dt if args.dt is not None else float(cfg.get("dt", 1e-3))
    traj = simulate_closed_loop(embedded, feedback, disturbance, xbar0, T, dt)
    path = out_dir / f"{label}_seed{seed}_run.csv"
    sc.write_trajectory_csv(path, traj)
    print(f"status: {traj.status}")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_check(args) -> int:
    ids = [args.scenario] if args.scenario else list(sc.SCENARIO_IDS)
    out_dir = Path(args.out) if args.out else _default_out()
    worst = EXIT_OK
    for sid in ids:
        if sid not in sc.SCENARIO_IDS:
            raise ConfigError(f"unknown scenario {sid!r}")
        result = sc.check_scenario(sid, out_dir=out_dir)
        for rec in result.assertions:
            print(f"[{rec.verdict.upper():10s}] {sid}:{rec.id}  "
                  f"expected {rec.expected}; observed {rec.observed}")
        if not result.passed:
            worst = EXIT_ASSERTION
    return worst


def _cmd_synthesize(args) -> int:
    cfg = _load_config(args.config) if args.config else {}
    out_dir = Path(args.out or cfg.get("out") or _default_out())
    embedded, default_fb, _, label = _resolve_target(args, cfg)
    feedback = _make_controller(cfg.get("controller"), embedded, default_fb)
    lin = linearize_embedded(embedded)
    spectrum = eigenvalues(closed_loop_matrix(lin, feedback))
    order = np.argsort(spectrum.real)
    spectrum = spectrum[order]
    _write_matrix_csv(out_dir / f"{label}_gain.csv", feedback.effective_gain(),
                      f"gain K, convention u = -K xbar, system {label}")
    _write_matrix_csv(out_dir / f"{label}_spectrum.csv",
                      np.column_stack([spectrum.real, spectrum.imag]),
                      "closed-loop spectrum (re, im)")
    _write_matrix_csv(out_dir / f"{label}_abar.csv", lin.Abar, "Abar")
    _write_matrix_csv(out_dir / f"{label}_bbar.csv", lin.Bbar, "Bbar")
    hur = is_hurwitz(closed_loop_matrix(lin, feedback))
    print(f"closed-loop Hurwitz: {hur}")
    print(f"wrote gain/spectrum/abar/bbar CSVs under {out_dir}")
    return EXIT_OK


def _cmd_linearize(args) -> int:
    cfg = _load_config(args.config) if args.config else {}
    out_dir = Path(args.out or cfg.get("out") or _default_out())
    embedded, _, _, label = _resolve_target(args, cfg)
    lin = linearize_embedded(embedded)
    _write_matrix_csv(out_dir / f"{label}_abar.csv", lin.Abar, "Abar")
    _write_matrix_csv(out_dir / f"{label}_bbar.csv", lin.Bbar, "Bbar")
    print(f"wrote Abar ({lin.Abar.shape[0]}x{lin.Abar.shape[1]}) and Bbar under {out_dir}")
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help=f"scenario id, one of {', '.join(sc.SCENARIO_IDS)}")
    p.add_argument("--config", help="JSON config file (see README for the schema)")
    p.add_argument("--out", help="output directory (default: $SAFE_EMBED_OUT or ./out)")
    p.add_argument("--seed", type=int, default=None, help="disturbance seed (default 0)")
    p.add_argument("--dt", type=float, default=None, help="integration step override")
    p.add_argument("--horizon", type=float, default=None, help="simulation horizon override")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="safeembed",
        description="Barrier-state safety embedding: run scenarios, "
                    "linearize embedded systems, synthesize safe gains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, doc in (
        ("run", _cmd_run, "simulate and write CSV tracks + assertion report"),
        ("check", _cmd_check, "run scenario assertions with seed 0"),
        ("synthesize", _cmd_synthesize, "compute a gain and emit K/spectrum/Abar/Bbar"),
        ("linearize", _cmd_linearize, "emit (Abar, Bbar) for a scenario or builtin"),
    ):
        p = sub.add_parser(name, help=doc, description=doc)
        _add_common(p)
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICS


if __name__ == "__main__":
    sys.exit(main())
