"""Command-line entry point: ``sumhess <subcommand> [config] [flags]``.

Exit codes: 0 success, 2 invalid input, 3 not converged or a check failed,
4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import expr as ex
from .config import flow_from_config, load_config, newton_from_config, problem_from_config
from .elliptic import (
    ProblemSpec,
    c0_bounds,
    classical_neumann,
    continuation_solve,
    gauge_error,
    translating_constant,
    validate_problem,
)
from .errors import DomainError, InvalidArgument, SumHessError, ValidationError
from .grid import Grid, _fmt, norms, write_field
from .parabolic import TRACE_COLUMNS, FlowTrace, fit_decay_rate, flow_run, translating_flow_run, ut_monitor
from .verify import run_all_suites

log = logging.getLogger("sumhess")

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_INTERNAL = 0, 2, 3, 4


class NotConverged(SumHessError):
    """Raised after outputs are written when a run did not reach its target."""


# --- persistence ----------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


class Outputs:
    """Writes into one directory; refuses to replace files unless allowed."""

    def __init__(self, directory: Path, overwrite: bool):
        self.dir = directory
        self.overwrite = overwrite

    def _target(self, name: str) -> Path:
        path = self.dir / name
        if path.exists() and not self.overwrite:
            raise ValidationError(f"{path} exists; pass --overwrite to replace it")
        return path

    def check(self, names) -> None:
        for name in names:
            self._target(name)
        self.dir.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, content: str) -> None:
        self._target(name).write_text(content, encoding="utf-8", newline="\n")

    def field(self, name: str, grid: Grid, values) -> None:
        write_field(self._target(name), grid, values)

    def csv(self, name: str, header, rows) -> None:
        lines = [",".join(header)]
        lines += [",".join(v if isinstance(v, str) else _fmt(v) for v in row) for row in rows]
        self.text(name, "\n".join(lines) + "\n")


def _outputs(cfg: dict, base: Path, args) -> Outputs:
    return Outputs((base / cfg["output"]["directory"]).resolve(), args.overwrite)


# --- helpers -----------------------------------------------------------------------


def _node_field(ps: ProblemSpec, text: str, name: str) -> np.ndarray:
    node = ex.parse(text)
    extra = ex.free_variables(node) - {"x", "y", "z"}
    if extra:
        raise ValidationError(f"problem.{name} may only use x, y, z; found {sorted(extra)}")
    g = ps.grid
    env = {a: g.coords[:, i] for i, a in enumerate("xyz"[: g.dim])}
    for a in "xyz"[g.dim:]:
        env[a] = np.zeros(g.n_nodes)
    return np.broadcast_to(np.asarray(ex.evaluate(node, env), dtype=float), (g.n_nodes,)).copy()


def _require(cfg: dict, key: str, command: str) -> str:
    if key not in cfg["problem"]:
        raise ValidationError(f"{command} needs problem.{key}")
    return cfg["problem"][key]


def _require_mode(ps: ProblemSpec, mode: str, command: str) -> None:
    if ps.mode != mode:
        raise ValidationError(f"{command} needs problem.mode = {mode!r}, got {ps.mode!r}")


def _y0(ps: ProblemSpec, cfg: dict):
    pt = cfg["solver"]["y0"]
    return None if pt is None else ps.grid.nearest_node(np.asarray(pt, dtype=float))


def _exact_errors(ps: ProblemSpec, cfg: dict, u: np.ndarray, gauge: bool) -> dict:
    if "exact" not in cfg["problem"]:
        return {}
    ref = _node_field(ps, cfg["problem"]["exact"], "exact")
    if gauge:
        return {"error_max_gauged": gauge_error(ps.grid, u, ref)}
    e_max, e_l2 = norms(ps.grid, u - ref)
    return {"error_max": e_max, "error_l2": e_l2}


def _write_trace(out: Outputs, trace: FlowTrace) -> None:
    out.csv("trace.csv", TRACE_COLUMNS, trace.samples)


def _flow_summary(trace: FlowTrace, c_f) -> dict:
    d = trace.to_dict()
    try:
        d["decay_rate"] = fit_decay_rate(trace)
    except SumHessError:
        d["decay_rate"] = None
    d["ut_violations"] = ut_monitor(trace, c_f=c_f)
    margins = trace.column("cone_margin")
    d["min_cone_margin"] = float(np.min(margins)) if margins.size else None
    return d


def _report(command: str, cfg: dict, body: dict, seed: int) -> dict:
    return {"command": command, "version": __version__, "seed": seed, "config": cfg, **body}


# --- subcommands -------------------------------------------------------------------


def cmd_check_config(args) -> int:
    cfg, _ = load_config(args.config)
    validate_problem(problem_from_config(cfg))
    sys.stdout.write(dumps(cfg))
    return EXIT_OK


def cmd_solve_elliptic(args) -> int:
    cfg, base = load_config(args.config)
    ps = problem_from_config(cfg)
    _require_mode(ps, "general", "solve-elliptic")
    out = _outputs(cfg, base, args)
    out.check(["report.json", "solution.dat"])
    u, rep = continuation_solve(ps, newton_from_config(cfg))
    body = {"solve": rep.to_dict(), "c0_bounds": list(c0_bounds(ps)), **_exact_errors(ps, cfg, u, gauge=False)}
    out.text("report.json", dumps(_report("solve-elliptic", cfg, body, args.seed)))
    out.field("solution.dat", ps.grid, u)
    if not rep.converged:
        raise NotConverged(rep.message or "continuation did not converge")
    return EXIT_OK


def cmd_solve_classical(args) -> int:
    cfg, base = load_config(args.config)
    ps = problem_from_config(cfg)
    _require_mode(ps, "classical", "solve-classical")
    out = _outputs(cfg, base, args)
    out.check(["report.json", "solution.dat"])
    res = classical_neumann(ps, newton_from_config(cfg), cfg["solver"]["eps_seq"])
    body = {"classical": res.to_dict(), **_exact_errors(ps, cfg, res.u, gauge=True)}
    out.text("report.json", dumps(_report("solve-classical", cfg, body, args.seed)))
    out.field("solution.dat", ps.grid, res.u)
    if not res.converged:
        raise NotConverged("an epsilon stage did not converge")
    return EXIT_OK


def _translating(ps: ProblemSpec, cfg: dict):
    u0 = _node_field(ps, cfg["problem"]["u0"], "u0") if "u0" in cfg["problem"] else None
    return translating_constant(ps, u0, _y0(ps, cfg), newton_from_config(cfg), cfg["solver"]["eps_seq"])


def cmd_solve_translating(args) -> int:
    cfg, base = load_config(args.config)
    ps = problem_from_config(cfg)
    _require_mode(ps, "translating", "solve-translating")
    out = _outputs(cfg, base, args)
    out.check(["report.json", "solution.dat"])
    res = _translating(ps, cfg)
    body = {"translating": res.to_dict(), **_exact_errors(ps, cfg, res.u_ell, gauge=True)}
    out.text("report.json", dumps(_report("solve-translating", cfg, body, args.seed)))
    out.field("solution.dat", ps.grid, res.u_ell)
    if not res.converged:
        raise NotConverged("an epsilon stage did not converge")
    return EXIT_OK


def cmd_flow(args) -> int:
    cfg, base = load_config(args.config)
    ps = problem_from_config(cfg)
    _require_mode(ps, "general", "flow")
    u0 = _node_field(ps, _require(cfg, "u0", "flow"), "u0")
    out = _outputs(cfg, base, args)
    out.check(["report.json", "solution.dat", "trace.csv"])
    u, trace = flow_run(ps, u0, flow_from_config(cfg, args.force))
    body = {"flow": _flow_summary(trace, ps.c_f), **_exact_errors(ps, cfg, u, gauge=False)}
    out.text("report.json", dumps(_report("flow", cfg, body, args.seed)))
    out.field("solution.dat", ps.grid, u)
    _write_trace(out, trace)
    if trace.outcome != "steady":
        raise NotConverged(f"flow ended with outcome {trace.outcome}")
    return EXIT_OK


def cmd_flow_translating(args) -> int:
    cfg, base = load_config(args.config)
    ps = problem_from_config(cfg)
    _require_mode(ps, "translating", "flow-translating")
    u0 = _node_field(ps, _require(cfg, "u0", "flow-translating"), "u0")
    out = _outputs(cfg, base, args)
    out.check(["report.json", "solution.dat", "trace.csv"])
    body: dict = {}
    reference = None
    if cfg["solver"]["cross_check"]:
        res = _translating(ps, cfg)
        body["translating"] = res.to_dict()
        if res.converged:
            reference = (res.u_ell, res.s)
    s_est, profile, trace = translating_flow_run(ps, u0, flow_from_config(cfg, args.force), reference)
    body["flow"] = _flow_summary(trace, None)
    if reference is not None:
        body["speed_difference"] = abs(s_est - reference[1])
    body.update(_exact_errors(ps, cfg, profile, gauge=True))
    out.text("report.json", dumps(_report("flow-translating", cfg, body, args.seed)))
    out.field("solution.dat", ps.grid, profile)
    _write_trace(out, trace)
    if trace.outcome != "translating":
        raise NotConverged(f"flow ended with outcome {trace.outcome}")
    return EXIT_OK


def cmd_verify_lemmas(args) -> int:
    reports = run_all_suites(args.seed, quick=args.quick)
    doc = {
        "command": "verify-lemmas",
        "version": __version__,
        "seed": args.seed,
        "failures": sum(r.failures for r in reports),
        "suites": [r.to_dict() for r in reports],
    }
    text = dumps(doc)
    if args.config is not None:
        cfg, base = load_config(args.config)
        out = _outputs(cfg, base, args)
        out.check(["report.json"])
        out.text("report.json", text)
    sys.stdout.write(text)
    for r in reports:
        log.info("%s", r.table())
    if doc["failures"]:
        raise NotConverged(f"{doc['failures']} property checks failed")
    return EXIT_OK


def study_slopes(hs, errs) -> list:
    """Observed orders ``log(e_i/e_{i+1}) / log(h_i/h_{i+1})``, first entry ``None``."""
    out = [None]
    for i in range(1, len(hs)):
        if errs[i] > 0 and errs[i - 1] > 0:
            out.append(math.log(errs[i - 1] / errs[i]) / math.log(hs[i - 1] / hs[i]))
        else:
            out.append(None)
    return out


def cmd_convergence_study(args) -> int:
    cfg, base = load_config(args.config)
    _require(cfg, "exact", "convergence-study")
    ps0 = problem_from_config(cfg)
    _require_mode(ps0, "general", "convergence-study")
    out = _outputs(cfg, base, args)
    out.check(["report.json", "study.csv"])
    ncfg = newton_from_config(cfg)
    hs, errs, l2s, runs = [], [], [], []
    ok = True
    for dims in cfg["study"]["grids"]:
        ps = problem_from_config(cfg, dims)
        u, rep = continuation_solve(ps, ncfg)
        e = _exact_errors(ps, cfg, u, gauge=False)
        hs.append(float(np.max(ps.grid.h)))
        errs.append(e["error_max"])
        l2s.append(e["error_l2"])
        runs.append({"dims": list(dims), "converged": rep.converged, "iterations": rep.iterations, **e})
        ok = ok and rep.converged
        log.info("grid %s: error %.3e", dims, e["error_max"])
    slopes = study_slopes(hs, errs)
    rows = [
        [_fmt(h), str(int(np.prod(d))), _fmt(e), _fmt(l2), "nan" if s is None else _fmt(s)]
        for h, d, e, l2, s in zip(hs, cfg["study"]["grids"], errs, l2s, slopes)
    ]
    out.csv("study.csv", ("h", "nodes", "error_max", "error_l2", "slope"), rows)
    body = {"runs": runs, "slopes": slopes}
    out.text("report.json", dumps(_report("convergence-study", cfg, body, args.seed)))
    if not ok:
        raise NotConverged("a refinement level did not converge")
    return EXIT_OK


COMMANDS = {
    "solve-elliptic": (cmd_solve_elliptic, "continuation solve of a general-mode problem"),
    "solve-classical": (cmd_solve_classical, "recover the classical Neumann constant by the epsilon scheme"),
    "solve-translating": (cmd_solve_translating, "translating speed by the epsilon scheme"),
    "flow": (cmd_flow, "run the parabolic flow to a steady state"),
    "flow-translating": (cmd_flow_translating, "run the translating flow and estimate its speed"),
    "verify-lemmas": (cmd_verify_lemmas, "run the seeded property suites"),
    "convergence-study": (cmd_convergence_study, "grid refinement study against problem.exact"),
    "check-config": (cmd_check_config, "validate a config and print it with defaults filled"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sumhess", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        if name == "verify-lemmas":
            p.add_argument("config", nargs="?", help="optional config; report.json goes to its output directory")
            p.add_argument("--quick", action="store_true", help="one tenth of the samples")
        else:
            p.add_argument("config", help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--overwrite", action="store_true", help="replace existing output files")
        p.add_argument("--force", action="store_true", help="skip the flow compatibility gate")
        p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def _resolve_seed(args) -> None:
    if args.seed is not None:
        return
    seed = 1
    if getattr(args, "config", None) is not None:
        try:
            seed = json.loads(Path(args.config).read_text(encoding="utf-8")).get("seed", 1)
        except (OSError, ValueError, AttributeError):
            pass
    args.seed = seed if isinstance(seed, int) else 1


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(f"sumhess: {message}\n")
    sys.stdout.write(dumps({"error": {"type": kind, "message": message, "exit_code": code}}))
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_OK if err.code in (0, None) else EXIT_INVALID
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s", stream=sys.stderr)
    _resolve_seed(args)
    handler = COMMANDS[args.command][0]
    try:
        return handler(args)
    except NotConverged as err:
        return _fail(EXIT_NOT_CONVERGED, "not_converged", str(err))
    except (ValidationError, InvalidArgument, DomainError) as err:
        return _fail(EXIT_INVALID, type(err).__name__, str(err))
    except Exception as err:  # noqa: BLE001 - last-resort mapping to exit 4
        log.debug("internal error", exc_info=True)
        return _fail(EXIT_INTERNAL, type(err).__name__, str(err))


if __name__ == "__main__":
    sys.exit(main())
