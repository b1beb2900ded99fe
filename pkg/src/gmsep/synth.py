"""Ground-truth generators, filters and experiment drivers.

Every trial draws from its own ``numpy.random.Generator`` (PCG64) seeded by a
``SeedSequence`` built from ``(base_seed, *indices)``.  Normal variates come
from numpy's ziggurat sampler.  Results therefore depend only on the indices,
never on execution order.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import InvalidParameterError, ShapeError
from .filters import BlockCirculantFilter, BlockFilter, CirculantFilter, DenseFilter, as_filter
from .numerics import rel_err
from .separation import SolverConfig, gms, pgms

__all__ = [
    "PAPER_E1",
    "PAPER_E2",
    "SparseModel",
    "ExperimentGrid",
    "TrialRecord",
    "trial_rng",
    "gen_low_rank",
    "gen_sparse",
    "gen_filter",
    "gen_problem",
    "rel_err",
    "run_convergence_experiment",
    "run_phase_diagram",
    "success_table",
    "SCENARIOS",
]

# blur kernels of the surveillance-video experiment; rows sum to one
PAPER_E1 = np.array([[0.4375, 0.5625], [0.5625, 0.4375]])
PAPER_E2 = np.array(
    [
        [0.1123, 0.3459, 0.3446, 0.1972],
        [0.1972, 0.1123, 0.3459, 0.3446],
        [0.3446, 0.1972, 0.1123, 0.3459],
        [0.3459, 0.3446, 0.1972, 0.1123],
    ]
)

SPARSE_VARIANTS = ("gaussian", "uniform", "impulsive")


def trial_rng(seed, *indices):
    """Independent generator for ``(seed, *indices)``; passes generators through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, indices)])))


@dataclass(frozen=True)
class SparseModel:
    variant: str = "gaussian"
    sparsity_ratio: float = 0.05

    def __post_init__(self):
        if self.variant not in SPARSE_VARIANTS:
            raise InvalidParameterError(f"unknown sparse model {self.variant!r}")
        if not 0 < self.sparsity_ratio < 1:
            raise InvalidParameterError("sparsity ratio must lie in (0, 1)")


@dataclass(frozen=True)
class ExperimentGrid:
    rank_ratios: tuple
    sparsity_ratios: tuple
    trials: int = 10
    eps: float = 1e-3
    base_seed: int = 0

    def __post_init__(self):
        for r in (*self.rank_ratios, *self.sparsity_ratios):
            if not 0 < r < 1:
                raise InvalidParameterError(f"grid ratio {r} outside (0, 1)")
        if self.trials < 1:
            raise InvalidParameterError("trials must be at least 1")


@dataclass
class TrialRecord:
    cell: tuple
    trial: int
    seed: int
    relerr_s: float
    relerr_l: float
    iters: int
    success: bool
    algorithm: str = "pgms"

    def row(self):
        d = asdict(self)
        r, s = d.pop("cell")
        return {"cell_r": r, "cell_s": s, **d}


def gen_low_rank(m, n, rank_ratio, seed):
    if not 0 < rank_ratio <= 1:
        raise InvalidParameterError("rank ratio must lie in (0, 1]")
    r = math.floor(rank_ratio * min(m, n))
    if r < 1:
        warnings.warn(f"rank ratio {rank_ratio} gives rank 0 for {m}x{n}; using rank 1", stacklevel=2)
        r = 1
    rng = trial_rng(seed)
    U = rng.standard_normal((m, r))
    V = rng.standard_normal((n, r))
    return U @ V.T


def gen_sparse(p, n, model: SparseModel, seed, L0_ref=None):
    """``floor(ratio * p * n)`` nonzeros at uniformly sampled positions."""
    k = math.floor(model.sparsity_ratio * p * n)
    if k < 1:
        warnings.warn("sparsity ratio yields no nonzeros; placing one", stacklevel=2)
        k = 1
    rng = trial_rng(seed)
    pos = rng.choice(p * n, size=k, replace=False)
    if model.variant == "gaussian":
        vals = rng.standard_normal(k)
    else:
        if L0_ref is None:
            raise InvalidParameterError(f"{model.variant} model needs the paired low-rank matrix")
        a = float(np.abs(L0_ref).max())
        if not a > 0:
            raise InvalidParameterError("paired low-rank matrix is zero")
        if model.variant == "uniform":
            vals = rng.uniform(-a, a, k)
        else:
            vals = a * np.sign(rng.standard_normal(k))
    S = np.zeros(p * n)
    S[pos] = vals
    return S.reshape((p, n), order="F")


def circulant_diff_column(n):
    c = np.zeros(n)
    c[0] = -1.0
    c[-1] = 1.0
    return c


def gen_filter(kind, seed=0, *, m=None, p=None, n=None, frame_shape=None):
    """Build a filter.

    ``gaussian`` needs ``m, p``; ``circulant_diff`` needs ``n``; ``paper_blur``
    needs the frame shape it will act on; ``identity`` needs ``n``.
    """
    if kind == "gaussian":
        if not (m and p):
            raise ShapeError("gaussian filter needs m and p")
        return DenseFilter(trial_rng(seed).standard_normal((m, p)))
    if kind == "circulant_diff":
        if not n:
            raise ShapeError("circulant filter needs n")
        return CirculantFilter(circulant_diff_column(n))
    if kind == "identity":
        if not n:
            raise ShapeError("identity filter needs n")
        return DenseFilter(np.eye(n))
    if kind == "paper_blur":
        if frame_shape is None:
            raise ShapeError("paper_blur needs the frame shape")
        return BlockFilter.for_frames(PAPER_E1, PAPER_E2, frame_shape)
    if kind == "paper_blur_fft":
        if frame_shape is None:
            raise ShapeError("paper_blur needs the frame shape")
        f = BlockFilter.for_frames(PAPER_E1, PAPER_E2, frame_shape)
        return BlockCirculantFilter(PAPER_E1, PAPER_E2, f.k1, f.k2)
    raise InvalidParameterError(f"unknown filter kind {kind!r}")


def gen_problem(m, n, p, rank_ratio, model: SparseModel, H, seed):
    """Draw ``(L0, S0, M0)`` with ``M0 = L0 + H S0`` from one generator."""
    rng = trial_rng(seed)
    H = as_filter(H)
    L0 = gen_low_rank(m, n, rank_ratio, rng)
    S0 = gen_sparse(p, n, model, rng, L0)
    return L0, S0, L0 + H.apply(S0)


# -- named convergence scenarios ------------------------------------------------

RHO_OUTER_GRID = (0.01, 0.05, 0.1, 1, 5, 10, 50, 100, 500)
RHO_INNER_GRID = (0.05, 0.1, 1, 5, 10, 50, 100)


@dataclass(frozen=True)
class Scenario:
    m: int
    n: int
    p: int
    rank_ratio: float
    sparsity_ratio: float
    filter_kind: str
    cfg: SolverConfig
    rho_grid: tuple = field(default=())


SCENARIOS = {
    # tolerances effectively off: both loops run their full budgets
    "fig1": Scenario(100, 100, 100, 0.05, 0.10, "gaussian",
                     SolverConfig(rho_outer=1, rho_inner=1, max_outer=60, max_inner=60,
                                  tol_outer=1e-16, tol_inner=1e-16)),
    "table2": Scenario(270, 300, 266, 0.05, 0.05, "gaussian",
                       SolverConfig(rho_outer=1, rho_inner=1, max_outer=500, max_inner=30,
                                    tol_outer=1e-7, tol_inner=1e-5)),
    "table3": Scenario(299, 300, 299, 0.05, 0.05, "circulant_diff",
                       SolverConfig(rho_outer=1, rho_inner=1, max_outer=500, max_inner=30,
                                    tol_outer=1e-7, tol_inner=1e-5)),
    "rho_sweep": Scenario(99, 100, 99, 0.05, 0.05, "circulant_diff",
                          SolverConfig(max_outer=100, max_inner=20, tol_outer=1e-7, tol_inner=1e-5),
                          rho_grid=tuple((a, b) for a in RHO_OUTER_GRID for b in RHO_INNER_GRID)),
}


def _scenario_filter(sc, seed):
    if sc.filter_kind == "gaussian":
        return gen_filter("gaussian", trial_rng(seed, 0xF1), m=sc.m, p=sc.p)
    return gen_filter(sc.filter_kind, n=sc.m)


def _record(cell, trial, seed, res, L0, S0, eps, algorithm):
    rs = rel_err(S0, res.S_hat)
    rl = rel_err(L0, res.L_hat)
    return TrialRecord(cell, trial, seed, rs, rl, res.iterations, bool(rs < eps and rl < eps), algorithm)


def run_convergence_experiment(scenario, seed=0, trials=1, algorithms=("gms", "pgms"), eps=1e-3):
    """Run a named scenario and return ``(records, traces)``.

    ``traces`` maps ``(algorithm, trial)`` (or ``(algorithm, trial, rho_outer,
    rho_inner)`` for ``rho_sweep``) to the :class:`ConvergenceTrace`.
    """
    if scenario not in SCENARIOS:
        raise InvalidParameterError(f"unknown scenario {scenario!r}; choose from {sorted(SCENARIOS)}")
    sc = SCENARIOS[scenario]
    solvers = {"gms": gms, "pgms": pgms}
    model = SparseModel("gaussian", sc.sparsity_ratio)
    records, traces = [], {}
    for t in range(trials):
        H = _scenario_filter(sc, trial_rng(seed, t, 1))
        L0, S0, M0 = gen_problem(sc.m, sc.n, sc.p, sc.rank_ratio, model, H, trial_rng(seed, t, 2))
        settings = [(None, sc.cfg)] if not sc.rho_grid else [
            ((ro, ri), replace(sc.cfg, rho_outer=ro, rho_inner=ri)) for ro, ri in sc.rho_grid
        ]
        for rhos, cfg in settings:
            for name in algorithms:
                res = solvers[name](M0, H, cfg, truth=(L0, S0))
                cell = rhos if rhos is not None else (sc.rank_ratio, sc.sparsity_ratio)
                records.append(_record(cell, t, seed, res, L0, S0, eps, name))
                traces[(name, t) if rhos is None else (name, t, *rhos)] = res.trace
    return records, traces


# -- phase diagrams -------------------------------------------------------------

PHASE_CONFIG = SolverConfig(rho_outer=0.5, rho_inner=1, tol_outer=1e-7, tol_inner=1e-7,
                            max_outer=50, max_inner=50)


def run_phase_diagram(grid: ExperimentGrid, filter_kind="gaussian", sparse_variant="gaussian",
                      cfg: SolverConfig = PHASE_CONFIG, shape=(100, 100), workers=1):
    """Success records for every ``(rank ratio, sparsity ratio)`` cell.

    The filter is drawn once from ``grid.base_seed`` and shared by all cells.
    Trial ``t`` of cell ``(i, j)`` uses the generator for ``(base_seed, i, j, t)``.
    """
    m, n = shape
    if filter_kind == "gaussian":
        H = gen_filter("gaussian", trial_rng(grid.base_seed, 0xF1), m=m, p=m)
    else:
        H = gen_filter(filter_kind, n=m)
    p = H.shape[1]

    def one(i, j, t):
        r, s = grid.rank_ratios[i], grid.sparsity_ratios[j]
        rng = trial_rng(grid.base_seed, i, j, t)
        L0, S0, M0 = gen_problem(m, n, p, r, SparseModel(sparse_variant, s), H, rng)
        res = pgms(M0, H, cfg)
        seed = int(np.random.SeedSequence([grid.base_seed, i, j, t]).generate_state(1)[0])
        return _record((r, s), t, seed, res, L0, S0, grid.eps, "pgms")

    jobs = [(i, j, t) for i in range(len(grid.rank_ratios))
            for j in range(len(grid.sparsity_ratios)) for t in range(grid.trials)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            records = list(ex.map(lambda a: one(*a), jobs))
    else:
        records = [one(*a) for a in jobs]
    return sorted(records, key=lambda rec: (rec.cell, rec.trial))


def success_table(records, grid: ExperimentGrid):
    """Success fraction, rows indexed by rank ratio and columns by sparsity ratio."""
    table = np.zeros((len(grid.rank_ratios), len(grid.sparsity_ratios)))
    for rec in records:
        i = grid.rank_ratios.index(rec.cell[0])
        j = grid.sparsity_ratios.index(rec.cell[1])
        table[i, j] += rec.success
    return table / grid.trials
