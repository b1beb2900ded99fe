"""Command-line driver: ``gmsep {separate,synth,phase,convergence,video}``.

Exit codes: 0 success, 2 usage error, 3 data or format error, 4 the outer
loop hit its iteration cap while ``--strict`` was given.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as gio
from .errors import ConvergenceError, GMSError
from .filters import DenseFilter
from .numerics import rel_err
from .separation import SolverConfig, gms, gts, pgms, pgts
from .synth import (
    SCENARIOS,
    ExperimentGrid,
    PHASE_CONFIG,
    SparseModel,
    gen_filter,
    gen_problem,
    run_convergence_experiment,
    run_phase_diagram,
    success_table,
    trial_rng,
)
from .video import BLURS, VIDEO_CONFIG, video_pipeline

BACKENDS = ("auto", "dense-svd", "cholesky", "circulant", "separable", "block", "block-circulant")
TRACE_COLUMNS = ["iter", "change", "residual", "relerr_s", "relerr_l", "inner_iters"]
RECORD_COLUMNS = ["algorithm", "cell_r", "cell_s", "trial", "seed", "relerr_s", "relerr_l", "iters", "success"]


def _common(p):
    p.add_argument("--config", type=Path, help="flat 'key = value' config file")
    p.add_argument("--seed", type=int, help="base seed (overrides the config)")
    p.add_argument("--precondition", choices=("on", "off"), default="on")
    p.add_argument("--backend", choices=BACKENDS, default="auto")
    p.add_argument("--strict", action="store_true",
                   help="exit with status 4 if the outer loop stops at its iteration cap")


def build_parser():
    parser = argparse.ArgumentParser(prog="gmsep", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("separate", help="split M0 into L + H S")
    _common(p)
    p.add_argument("input", type=Path, help="M0 as a tensor file (matrix or order-3)")
    p.add_argument("filter", type=Path, help="filter: .json descriptor or .gms dense matrix")
    p.add_argument("--outdir", type=Path, required=True)
    p.add_argument("--truth", type=Path, help="directory with L0.gms and S0.gms for error columns")

    p = sub.add_parser("synth", help="draw a synthetic problem")
    _common(p)
    p.add_argument("--outdir", type=Path, required=True)
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--rank-ratio", type=float)
    p.add_argument("--sparsity-ratio", type=float)
    p.add_argument("--sparse-model", choices=("gaussian", "uniform", "impulsive"))
    p.add_argument("--filter", dest="filter_kind", choices=("gaussian", "circulant_diff", "identity"))

    p = sub.add_parser("phase", help="success fractions over a rank/sparsity grid")
    _common(p)
    p.add_argument("--outdir", type=Path, required=True)
    p.add_argument("--size", type=int, help="square problem size (default from config m)")
    p.add_argument("--filter", dest="filter_kind", choices=("gaussian", "circulant_diff"))
    p.add_argument("--sparse-model", choices=("gaussian", "uniform", "impulsive"))
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("convergence", help="run a named convergence scenario")
    _common(p)
    p.add_argument("scenario", choices=sorted(SCENARIOS))
    p.add_argument("--outdir", type=Path, required=True)
    p.add_argument("--trials", type=int, default=1)

    p = sub.add_parser("video", help="background removal and deblurring of PGM frames")
    _common(p)
    p.add_argument("frames", type=Path, help="directory of equally sized P5 PGM frames")
    p.add_argument("--outdir", type=Path, required=True)
    p.add_argument("--blur", choices=BLURS)
    return parser


def _run_config(args):
    cfg = gio.load_config(args.config) if args.config else gio.RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _solver_config(rc: gio.RunConfig, args, explicit=None):
    kw = rc.solver_kwargs()
    cfg = SolverConfig(**kw, backend=args.backend)
    if explicit is not None and args.config is None:
        cfg = replace(explicit, backend=args.backend, lam=rc.lam)
    return cfg


def _check_strict(args, result):
    if args.strict and result.terminated_by == "max_iters":
        raise ConvergenceError(
            f"outer loop stopped at its cap of {result.iterations} iterations "
            f"(last change ratio {result.trace.change[-1]:.3e})"
        )


def cmd_separate(args):
    rc = _run_config(args)
    cfg = _solver_config(rc, args)
    M0 = gio.read_tensor(args.input)
    H = gio.load_filter(args.filter)
    truth = None
    if args.truth is not None:
        truth = (gio.read_tensor(args.truth / "L0.gms"), gio.read_tensor(args.truth / "S0.gms"))
    if M0.ndim == 3:
        solver = pgts if args.precondition == "on" else gts
    else:
        solver = pgms if args.precondition == "on" else gms
    res = solver(M0, H, cfg, truth=truth)
    gio.write_tensor(args.outdir / "S_hat.gms", res.S_hat)
    gio.write_tensor(args.outdir / "L_hat.gms", res.L_hat)
    gio.write_csv(args.outdir / "trace.csv", res.trace.rows(), TRACE_COLUMNS)
    summary = {"iterations": res.iterations, "terminated_by": res.terminated_by}
    if truth is not None:
        summary.update(relerr_s=rel_err(truth[1], res.S_hat), relerr_l=rel_err(truth[0], res.L_hat))
    gio.atomic_write_text(args.outdir / "summary.json", json.dumps(summary, indent=2))
    print(json.dumps(summary))
    _check_strict(args, res)


def cmd_synth(args):
    rc = _run_config(args)
    m = args.m or rc.m
    n = args.n or rc.n
    kind = args.filter_kind or rc.filter
    p = args.p or rc.p or m
    rank_ratio = args.rank_ratio if args.rank_ratio is not None else rc.rank_ratio
    sparsity = args.sparsity_ratio if args.sparsity_ratio is not None else rc.sparsity_ratio
    model = SparseModel(args.sparse_model or rc.sparse_model, sparsity)
    if kind == "gaussian":
        H = gen_filter(kind, trial_rng(rc.seed, 1), m=m, p=p)
    else:
        H = gen_filter(kind, n=m)
    L0, S0, M0 = gen_problem(m, n, H.shape[1], rank_ratio, model, H, trial_rng(rc.seed, 2))
    out = args.outdir
    gio.write_tensor(out / "L0.gms", L0)
    gio.write_tensor(out / "S0.gms", S0)
    gio.write_tensor(out / "M0.gms", M0)
    if isinstance(H, DenseFilter):
        gio.write_tensor(out / "H.gms", H.H)
    gio.atomic_write_text(out / "filter.json", json.dumps(gio.filter_to_json(H)))
    manifest = {
        "seed": rc.seed, "m": m, "n": n, "p": H.shape[1], "filter": kind,
        "rank_ratio": rank_ratio, "rank": int(np.linalg.matrix_rank(L0)),
        "sparsity_ratio": sparsity, "sparse_model": model.variant,
        "nonzeros": int(np.count_nonzero(S0)),
    }
    gio.atomic_write_text(out / "manifest.json", json.dumps(manifest, indent=2))
    print(json.dumps(manifest))


def cmd_phase(args):
    rc = _run_config(args)
    size = args.size or rc.m
    grid = ExperimentGrid(tuple(rc.rank_ratios), tuple(rc.sparsity_ratios),
                          trials=args.trials or rc.trials, eps=rc.eps, base_seed=rc.seed)
    cfg = _solver_config(rc, args, explicit=PHASE_CONFIG)
    records = run_phase_diagram(grid, args.filter_kind or rc.filter, args.sparse_model or rc.sparse_model,
                                cfg, shape=(size, size), workers=args.workers or rc.workers)
    gio.write_csv(args.outdir / "trials.csv", [r.row() for r in records], RECORD_COLUMNS)
    table = success_table(records, grid)
    rows = [{"rank_ratio": r, **{f"s={s}": table[i, j] for j, s in enumerate(grid.sparsity_ratios)}}
            for i, r in enumerate(grid.rank_ratios)]
    gio.write_csv(args.outdir / "success.csv", rows, list(rows[0]))
    summary = {"seed": rc.seed, "size": size, "trials": grid.trials,
               "rank_ratios": list(grid.rank_ratios), "sparsity_ratios": list(grid.sparsity_ratios),
               "success": table.tolist()}
    gio.atomic_write_text(args.outdir / "summary.json", json.dumps(summary, indent=2))
    print(json.dumps(summary))


def cmd_convergence(args):
    seed = args.seed if args.seed is not None else 0
    records, traces = run_convergence_experiment(args.scenario, seed, args.trials)
    gio.write_csv(args.outdir / "records.csv", [r.row() for r in records], RECORD_COLUMNS)
    rows = []
    for key, tr in traces.items():
        for row in tr.rows():
            rows.append({"key": "/".join(map(str, key)), **row})
    gio.write_csv(args.outdir / "traces.csv", rows, ["key", *TRACE_COLUMNS])
    summary = [r.row() for r in records]
    gio.atomic_write_text(args.outdir / "summary.json", json.dumps(summary, indent=2))
    for r in records:
        print(f"{r.algorithm} trial={r.trial} cell={r.cell} relerr_s={r.relerr_s:.3e} "
              f"relerr_l={r.relerr_l:.3e} iters={r.iters}")


def cmd_video(args):
    rc = _run_config(args)
    cfg = _solver_config(rc, args, explicit=VIDEO_CONFIG)
    V = gio.read_frames(args.frames)
    out = video_pipeline(V, args.blur or rc.blur, cfg, precondition=args.precondition == "on")
    gio.write_frames(args.outdir, out.foreground, "foreground")
    gio.write_frames(args.outdir, out.background, "background")
    summary = {"frames": V.shape[2], "iterations": out.result.iterations,
               "terminated_by": out.result.terminated_by}
    gio.atomic_write_text(args.outdir / "summary.json", json.dumps(summary, indent=2))
    print(json.dumps(summary))
    _check_strict(args, out.result)


COMMANDS = {"separate": cmd_separate, "synth": cmd_synth, "phase": cmd_phase,
            "convergence": cmd_convergence, "video": cmd_video}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # argparse exits with status 2 on usage errors
    try:
        COMMANDS[args.command](args)
    except GMSError as exc:
        print(f"gmsep: error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"gmsep: error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
