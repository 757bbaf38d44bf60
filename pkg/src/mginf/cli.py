"""Command-line entry point.

    mginf {simulate,fluid,diffusion,validate-fluid,validate-clt,selftest}
          [--config PATH] [--seed U64] [--out DIR] [--format {csv,json}]

Every output starts with a header carrying the sha256 of the canonical
config, the seed, and the canonical config itself (the ``output`` section
is not part of it). Exit codes: 0 ok, 2 config error, 3 numerical
nonconvergence, 4 acceptance failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import config as cfgmod
from .config import ConfigError
from .diffusion import BasisConditionError, CovarianceKernel, PreconditionError
from .quadrature import QuadratureError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPT = 0, 2, 3, 4

CLT_VAR_TOL = 0.10
CLT_SKEW_TOL = 0.15
CLT_KURT_TOL = 0.30
KS_LEVEL = 0.01


class AcceptanceFailure(Exception):
    pass


# -- output --------------------------------------------------------------------

def _experiment(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k != "output"}


def header(cmd: str, cfg: dict) -> dict:
    exp = _experiment(cfg)
    return {"command": cmd, "config_sha256": cfgmod.digest(exp), "seed": exp["master_seed"],
            "time_unit": "normalized seconds", "config": exp}


def header_lines(h: dict) -> list[str]:
    return [f"mginf {h['command']}", f"config_sha256: {h['config_sha256']}", f"seed: {h['seed']}",
            f"time_unit: {h['time_unit']}", f"config: {cfgmod.canonical(h['config'])}"]


def parse_header(text: str) -> dict:
    """Recover the header fields from a CSV output."""
    out = {}
    for line in text.splitlines():
        if not line.startswith("# "):
            break
        key, _, val = line[2:].partition(": ")
        if key == "config":
            out["config"] = json.loads(val)
        elif val:
            out[key] = val
    return out


def render(h: dict, columns: list, rows: list, fmt: str, extra: dict | None = None) -> str:
    if fmt == "json":
        body = {"header": h, "columns": columns, "rows": [dict(zip(columns, r)) for r in rows]}
        if extra:
            body["summary"] = extra
        return json.dumps(body, indent=2, sort_keys=True, default=_jsonable) + "\n"
    buf = io.StringIO()
    for line in header_lines(h):
        buf.write(f"# {line}\n")
    if extra:
        for k in sorted(extra):
            buf.write(f"# summary.{k}: {json.dumps(extra[k], sort_keys=True, default=_jsonable)}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow([_cell(v) for v in r])
    return buf.getvalue()


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v).__name__)


def emit(name: str, text: str, fmt: str, out_dir: str | None) -> None:
    if out_dir is None:
        sys.stdout.write(text)
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, f"{name}.{fmt}"), "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# -- builders ------------------------------------------------------------------

def _scheme(cfg):
    from .scaling import scheme_for_paper_example
    return scheme_for_paper_example(cfg["lambda"], cfgmod.build_law(cfg), cfgmod.build_initial(cfg),
                                    allow_atomic=True)


def _plan(cfg):
    from .montecarlo import ExperimentPlan
    return ExperimentPlan(_scheme(cfg), tuple(cfg["n_values"]), cfg["R"], tuple(cfg["t_grid"]),
                          tuple(cfgmod.build_functional(f) for f in cfg["functionals"]), cfg["master_seed"])


def _fluid_model(cfg):
    from .fluid import FluidModel
    return FluidModel(cfg["lambda"], cfgmod.build_law(cfg), cfgmod.build_initial(cfg))


# -- commands --------------------------------------------------------------------

def cmd_simulate(cfg: dict, fmt: str = "csv", out_dir: str | None = None) -> int:
    from .montecarlo import run_ensemble
    st = run_ensemble(_plan(cfg))
    h = header("simulate", cfg)
    ids = [f.id for f in st.plan.functionals]
    rows = []
    for n in st.plan.n_values:
        vals = st.values[n]
        for r in range(vals.shape[0]):
            for i, t in enumerate(st.plan.t_grid):
                for j, fid in enumerate(ids):
                    rows.append([n, t, fid, r, float(vals[r, i, j])])
    extra = {"pathwise_violations": {str(n): v for n, v in st.violations.items()}}
    emit("simulate", render(h, ["n", "t", "functional_id", "replication", "value"], rows, fmt, extra), fmt, out_dir)
    if any(st.violations.values()):
        raise AcceptanceFailure("pathwise conservation or jump bound violated")
    return EXIT_OK


def cmd_fluid(cfg: dict, fmt: str = "csv", out_dir: str | None = None) -> int:
    from .fluid import fluid_curves
    m = _fluid_model(cfg)
    rows = [list(map(float, r)) for r in fluid_curves(m, cfg["t_grid"])]
    emit("fluid", render(header("fluid", cfg), ["t", "X_star", "S_star", "W_star"], rows, fmt), fmt, out_dir)
    return EXIT_OK


def cmd_diffusion(cfg: dict, fmt: str = "csv", out_dir: str | None = None) -> int:
    from .diffusion import clt_variance, collapsed_variance, default_basis, sample_limit
    from .montecarlo import replication_rng
    law = cfgmod.build_law(cfg)
    d = cfg["diffusion"]
    K = d["K"]
    kernel = CovarianceKernel(cfg["lambda"], law)
    basis = default_basis(law, max(K - 1, 1))
    phis = [f if isinstance(f, str) else cfgmod.build_phi(f) for f in d["functionals"]]
    names = [f if isinstance(f, str) else f.name for f in phis]
    t_grid = [float(t) for t in cfg["t_grid"]]
    rng = replication_rng(cfg["master_seed"], 0, 0)
    samples = sample_limit(kernel, basis, None, phis, t_grid, K, rng, R=d["R"], steps=d["steps"])
    rows = []
    for i, t in enumerate(t_grid):
        for j, (phi, name) in enumerate(zip(phis, names)):
            q = np.quantile(samples[:, j, i], [0.05, 0.5, 0.95])
            rows.append([t, name, collapsed_variance(kernel, phi, t), clt_variance(kernel, basis, phi, t, K),
                         float(q[0]), float(q[1]), float(q[2])])
    cols = ["t", "functional", "variance_exact", f"variance_series_K{K}", "q05", "q50", "q95"]
    emit("diffusion", render(header("diffusion", cfg), cols, rows, fmt), fmt, out_dir)
    return EXIT_OK


def cmd_validate_fluid(cfg: dict, fmt: str = "csv", out_dir: str | None = None) -> int:
    from .montecarlo import fluid_error_report, run_ensemble
    st = run_ensemble(_plan(cfg))
    rep = fluid_error_report(st, _fluid_model(cfg))
    rep.summary["pathwise_violations"] = sum(st.violations.values())
    emit("validate_fluid", render(header("validate-fluid", cfg), rep.columns, rep.rows, fmt, rep.summary),
         fmt, out_dir)
    if rep.summary["flagged"] or rep.summary["pathwise_violations"]:
        raise AcceptanceFailure(f"{rep.summary['flagged']} fluid deviations beyond 4 SE")
    return EXIT_OK


def clt_predictions(cfg: dict) -> dict:
    from .diffusion import collapsed_variance
    kernel = CovarianceKernel(cfg["lambda"], cfgmod.build_law(cfg))
    preds = {}
    for spec in cfg["functionals"]:
        f = cfgmod.build_functional(spec)
        if f.kind in ("X", "S", "W"):
            preds[f.id] = (lambda t, k=f.kind: collapsed_variance(kernel, k, t))
        elif f.kind == "pair":
            preds[f.id] = (lambda t, p=f.phi: collapsed_variance(kernel, p, t))
    return preds


def cmd_validate_clt(cfg: dict, fmt: str = "csv", out_dir: str | None = None) -> int:
    from .montecarlo import clt_report, run_ensemble
    st = run_ensemble(_plan(cfg))
    rep = clt_report(st, _fluid_model(cfg), clt_predictions(cfg), KS_LEVEL)
    col = {c: i for i, c in enumerate(rep.columns)}
    failed = [r for r in rep.rows
              if r[col["predicted_variance"]] > 0 and (
                  abs(r[col["relative_error"]]) > CLT_VAR_TOL or abs(r[col["skewness"]]) > CLT_SKEW_TOL
                  or abs(r[col["excess_kurtosis"]]) > CLT_KURT_TOL or r[col["ks_fitted_p"]] < KS_LEVEL)]
    rep.summary["failed_rows"] = len(failed)
    emit("validate_clt", render(header("validate-clt", cfg), rep.columns, rep.rows, fmt, rep.summary), fmt, out_dir)
    if failed:
        raise AcceptanceFailure(f"{len(failed)} CLT rows outside tolerance")
    return EXIT_OK


# -- selftest ----------------------------------------------------------------

def selftest_checks():
    """Deterministic analytic/property battery: yields (name, ok, detail)."""
    from .diffusion import (clt_variance, collapsed_variance, gram_schmidt_basis, laguerre,
                            laguerre_basis, laguerre_rodrigues, orthonormality_error)
    from .fluid import FluidModel, fluid_congestion, fluid_pairing, fluid_service
    from .functions import gaussian_bump, hermite_weighted, sigmoid
    from .laws import Exponential, Uniform
    from .measure import PointMeasure, integrate, shift
    from .montecarlo import exact_mm_infinity_oracle
    from .scaling import scheme_for_paper_example, simulate_normalized
    from .simulator import inject_path, martingale_statistic
    from .transport import law_ramp, solve_transport, transport_residual, transport_solution

    exp1 = Exponential(1.0)
    ts = (0.5, 1.0, 2.0, 4.0)

    err = 0.0
    for lam in (1.0, 2.0):
        m = FluidModel(lam, exp1)
        k = CovarianceKernel(lam, exp1)
        for t in ts:
            o = exact_mm_infinity_oracle(lam, exp1, t, 1000)
            err = max(err, abs(fluid_congestion(m, t) - o.mean / 1000),
                      abs(collapsed_variance(k, "X", t) - o.variance / 1000))
    yield "oracle pinning (fluid mean, CLT variance)", err <= 1e-12, f"max error {err:.3g}"

    phis = (gaussian_bump(1.0, 0.5), sigmoid(0.5, 0.7), hermite_weighted([0.2, 1.0, 0.5]))
    ramp = law_ramp(exp1, 1.0)
    worst = 0.0
    for K, g in ((PointMeasure.dirac(1.0), None), (None, ramp), (PointMeasure.dirac(1.0), ramp)):
        X = transport_solution(K, g)
        for t in (0.25, 1.0, 2.0, 3.5, 5.0):
            for phi in phis:
                worst = max(worst, abs(transport_residual(X, K, g, t, phi)))
    m = FluidModel(1.0, exp1)
    ident = max(abs(solve_transport(None, ramp, t, phi) - fluid_pairing(m, t, phi)) for t in (0.5, 2.0) for phi in phis)
    yield "transport residual", worst <= 1e-6, f"max residual {worst:.3g}"
    yield "transport solution equals fluid pairing", ident <= 1e-6, f"max gap {ident:.3g}"

    lb = laguerre_basis(exp1, 64)
    orth = orthonormality_error(lb, 11)
    rod = max(abs(laguerre(i, x) - laguerre_rodrigues(i, x)) for i in range(9) for x in np.linspace(0, 20, 41))
    gs = gram_schmidt_basis(exp1, 10)
    xs = np.linspace(0.0, 20.0, 41)
    gsd = max(float(np.max(np.abs(np.abs(gs.h(i, xs)) - np.abs(laguerre(i, xs))))) for i in range(7))
    uni = abs(gram_schmidt_basis(Uniform(0.0, 1.0), 4).h(1, 0.3) - math.sqrt(3.0) * (2 * 0.3 - 1))
    yield "Laguerre orthonormality", orth <= 1e-8, f"{orth:.3g}"
    yield "recurrence vs Rodrigues", rod <= 1e-9, f"{rod:.3g}"
    yield "Gram-Schmidt vs Laguerre", gsd <= 1e-6, f"{gsd:.3g}"
    yield "Gram-Schmidt on uniform(0,1)", uni <= 1e-8, f"{uni:.3g}"

    k = CovarianceKernel(1.0, exp1)
    for name, phi in (("W", "W"), ("bump", phis[0])):
        a, b = clt_variance(k, lb, phi, 1.0, 32), collapsed_variance(k, phi, 1.0)
        yield f"Parseval K=32 ({name})", abs(a / b - 1) <= 0.01, f"relative gap {a / b - 1:.3g}"

    mu0 = PointMeasure([0.5, 2.0], [0.3, 0.7])
    mf = FluidModel(1.5, exp1, mu0)
    cons = max(abs(fluid_congestion(mf, t) + fluid_service(mf, t) - 1.5 * t - 1.0) for t in (0, 0.3, 1, 7))
    yield "fluid conservation", cons <= 1e-9, f"{cons:.3g}"

    bump = phis[0]
    path = inject_path([], [], PointMeasure.dirac(1.7), 3.0)
    mt = abs(martingale_statistic(path, bump, 0.0, exp1, 2.0))
    yield "zero-arrival martingale cancellation", mt <= 1e-8, f"{mt:.3g}"

    rng = np.random.default_rng(7)
    mu = PointMeasure(rng.normal(size=50), rng.uniform(0.1, 2.0, 50))
    dual = max(abs(integrate(shift(mu, t), bump) - integrate(mu, bump.shift(t))) for t in (0.0, 0.37, 2.5))
    yield "shift duality (exact)", dual == 0.0, f"{dual:.3g}"

    sch = scheme_for_paper_example(1.0, exp1)
    bad = 0
    from .montecarlo import pathwise_violations
    for r in range(20):
        p = simulate_normalized(sch, 50, 4.0, np.random.default_rng(r))
        bad += pathwise_violations(p, ts, (bump,))
    yield "pathwise conservation and jump bound", bad == 0, f"{bad} violations"

    tail_ok = max(abs(exp1.tail_excess(0.0) - exp1.mean), abs(Uniform(0, 2).tail_excess(1.0) - 0.25))
    yield "law closed forms", tail_ok <= 1e-12, f"{tail_ok:.3g}"


def cmd_selftest(fmt: str = "csv", out_dir: str | None = None) -> int:
    rows = [[name, bool(ok), detail] for name, ok, detail in selftest_checks()]
    h = {"command": "selftest", "config_sha256": "-", "seed": "fixed", "time_unit": "normalized seconds",
         "config": {}}
    emit("selftest", render(h, ["check", "ok", "detail"], rows, fmt), fmt, out_dir)
    if not all(r[1] for r in rows):
        raise AcceptanceFailure("selftest failed")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fluid": cmd_fluid,
    "diffusion": cmd_diffusion,
    "validate-fluid": cmd_validate_fluid,
    "validate-clt": cmd_validate_clt,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mginf", description="M/GI/inf profile simulator, fluid and diffusion limits")
    p.add_argument("command", choices=[*COMMANDS, "selftest"])
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit), overrides the config")
    p.add_argument("--out", help="output directory (default: stdout)")
    p.add_argument("--format", choices=["csv", "json"], help="output format (default: first configured, else csv)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            return cmd_selftest(args.format or "csv", args.out)
        if not args.config:
            raise ConfigError("--config is required")
        cfg = cfgmod.load(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg["master_seed"] = args.seed
        fmt = args.format or next((f for f in cfg["output"]["formats"] if f in ("csv", "json")), "csv")
        return COMMANDS[args.command](cfg, fmt, args.out or cfg["output"].get("dir"))
    except ConfigError as e:
        print(f"mginf: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuadratureError, BasisConditionError) as e:
        print(f"mginf: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except PreconditionError as e:
        print(f"mginf: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AcceptanceFailure as e:
        print(f"mginf: acceptance failure: {e}", file=sys.stderr)
        return EXIT_ACCEPT
    except ValueError as e:
        # parameter violations caught while building laws, schemes or plans
        print(f"mginf: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
