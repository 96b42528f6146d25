"""Experiment configuration, replication management, rate fitting, and report emission."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from .bias_potential import BiasModel, PotentialRep, entropy_gap_check, fit, sample_model
from .discrepancy import (
    OptimizerConfig,
    barron_gmmd_vs_gaussian,
    barron_grid_vs_gaussian_1d,
    expected_rate_bound,
    mmd_vs_gaussian,
)
from .measures import DistributionSpec, RngSeed, sample
from .mfg_lq import LqGameParams, nash_gap, solve_mfg_lq
from .particle_sde import (
    LinearMVParams,
    MeanFieldModel,
    gmmd_sup_over_time,
    modulus_batch,
    simulate_particles,
    simulate_reference,
)
from .test_classes import KernelSpec, NeuronParams, TestClassSpec

__all__ = [
    "ExperimentConfig",
    "RateFit",
    "ConcentrationConfig",
    "ResultTable",
    "run_experiment",
    "fit_rate",
    "emit",
    "gaussian_t1_kappa",
]

EXPERIMENTS = ("iid_rate", "dim_sweep", "mv_rate", "biaspot", "mfg_gap", "modulus", "tail")
_RATE_EXPERIMENTS = ("iid_rate", "mv_rate", "mfg_gap")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    class_name: str = "barron"
    lengthscale: float = 1.0
    n_list: tuple = ()
    d_list: tuple = (1,)
    reps: int = 8
    steps: int = 100
    out: str = "result"
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        ns = tuple(int(v) for v in self.n_list)
        object.__setattr__(self, "n_list", ns)
        object.__setattr__(self, "d_list", tuple(int(v) for v in self.d_list))
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("n list must be strictly increasing")
        if self.experiment in _RATE_EXPERIMENTS and len(ns) < 3:
            raise ValueError("rate experiments need at least three n values")

    @classmethod
    def from_toml(cls, path: str) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        known = {"experiment", "seed", "class_name", "lengthscale", "n_list", "d_list",
                 "reps", "steps", "out"}
        kw = {k: doc[k] for k in known if k in doc}
        kw["n_list"] = tuple(doc.get("n_list", ()))
        kw["d_list"] = tuple(doc.get("d_list", (1,)))
        kw["params"] = dict(doc.get("params", {}))
        kw["tolerances"] = dict(doc.get("tolerances", {}))
        return cls(**kw)

    def describe(self) -> dict:
        d = {
            "experiment": self.experiment,
            "seed": self.seed,
            "class": self.class_name,
            "lengthscale": self.lengthscale,
            "n_list": ",".join(map(str, self.n_list)),
            "d_list": ",".join(map(str, self.d_list)),
            "reps": self.reps,
            "steps": self.steps,
        }
        for k in sorted(self.params):
            d[f"param.{k}"] = self.params[k]
        return d


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    slope_se: float

    def __post_init__(self):
        if not (math.isnan(self.r2) or 0.0 <= self.r2 <= 1.0 + 1e-12):
            raise ValueError("r2 out of range")


@dataclass(frozen=True)
class ConcentrationConfig:
    """Transport-inequality constant and exceedance thresholds for tail checks."""

    kappa: float
    a_grid: tuple

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")


def gaussian_t1_kappa(spec: DistributionSpec) -> float:
    """Analytic transport constant used for Gaussian bases: sqrt(2) * max std."""
    if spec.kind != "gaussian":
        raise ValueError("analytic kappa available for gaussians only")
    return math.sqrt(2.0) * math.sqrt(float(spec.cov_diag.max()))


@dataclass
class ResultTable:
    columns: tuple
    rows: list
    meta: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(not r.get("error") for r in self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=np.float64)

    def to_csv(self) -> str:
        lines = [f"# {k}={self.meta[k]}" for k in self.meta]
        lines.append(",".join(self.columns))
        for r in self.rows:
            cells = []
            for c in self.columns:
                v = r.get(c, "")
                if isinstance(v, float):
                    cells.append(repr(v))
                else:
                    cells.append(str(v))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        meta = {}
        rows = []
        columns = None
        for ln in text.splitlines():
            if not ln:
                continue
            if ln.startswith("# "):
                k, _, v = ln[2:].partition("=")
                meta[k] = v
                continue
            parts = ln.split(",")
            if columns is None:
                columns = tuple(parts)
                continue
            row = {}
            for c, raw in zip(columns, parts):
                try:
                    row[c] = int(raw) if raw.lstrip("-").isdigit() else float(raw)
                except ValueError:
                    row[c] = raw
            rows.append(row)
        return cls(columns=columns or (), rows=rows, meta=meta)


def fit_rate(points) -> RateFit:
    """OLS of log(value) on log(n); non-positive values are dropped with a warning.

    points: iterable of (n, value, se) triples.
    """
    import warnings

    kept = [(n, v) for n, v, _ in points if v > 0]
    if len(kept) < len(list(points)):
        warnings.warn("dropped non-positive values from rate fit", stacklevel=2)
    if len(kept) < 3:
        raise ValueError("rate fit needs at least three positive points")
    x = np.log(np.array([n for n, _ in kept], dtype=np.float64))
    y = np.log(np.array([v for _, v in kept], dtype=np.float64))
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    dof = max(len(kept) - 2, 1)
    slope_se = math.sqrt(ss_res / dof / sxx)
    return RateFit(slope=slope, intercept=intercept, r2=max(min(r2, 1.0), 0.0),
                   slope_se=slope_se)


# ---------------------------------------------------------------------------
# Experiment drivers


def _opt_config(cfg: ExperimentConfig, seed: RngSeed) -> OptimizerConfig:
    return OptimizerConfig(
        restarts=int(cfg.params.get("restarts", 32)),
        steps=int(cfg.params.get("opt_steps", 200)),
        step_size=float(cfg.params.get("step_size", 0.1)),
        seed=seed,
    )


def _class_spec(cfg: ExperimentConfig, d: int) -> TestClassSpec:
    return TestClassSpec.parse(cfg.class_name, lengthscale=cfg.lengthscale, dim=d)


def _run_cells(cells, worker, threads: int | None):
    """Execute cells (in order) and return results in the same order."""
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(worker, cells))
    return [worker(c) for c in cells]


def _iid_like(cfg: ExperimentConfig, threads: int | None) -> ResultTable:
    base = RngSeed(cfg.seed)
    cells = [(i_d, d, i_n, n, rep)
             for i_d, d in enumerate(cfg.d_list)
             for i_n, n in enumerate(cfg.n_list)
             for rep in range(cfg.reps)]

    def worker(cell):
        i_d, d, i_n, n, rep = cell
        s = base.child(1, i_d, i_n, rep)
        gauss = DistributionSpec.gaussian(np.zeros(d), np.ones(d))
        try:
            X = sample(gauss, n, s.child(0))
            cls = _class_spec(cfg, d)
            if cls.tag == "barron_ball":
                val = barron_gmmd_vs_gaussian(gauss, X, _opt_config(cfg, s.child(1))).value
            elif cls.tag == "rkhs":
                val = mmd_vs_gaussian(cls.kernel, gauss, X)
            else:
                raise ValueError("iid experiments support the rkhs and barron classes")
            return val, ""
        except Exception as exc:  # cell failure is recorded, run continues
            return math.nan, f"{type(exc).__name__}: {exc}"

    results = _run_cells(cells, worker, threads)
    rows = []
    for i_d, d in enumerate(cfg.d_list):
        cls = _class_spec(cfg, d)
        for i_n, n in enumerate(cfg.n_list):
            vals = []
            errs = []
            for (ci_d, _, ci_n, _, _), (val, err) in zip(cells, results):
                if ci_d == i_d and ci_n == i_n:
                    if err:
                        errs.append(err)
                    else:
                        vals.append(val)
            arr = np.array(vals)
            mean = float(arr.mean()) if arr.size else math.nan
            se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
            bound = expected_rate_bound(cls.constants, float(d), n)
            rows.append({"d": d, "n": n, "reps": arr.size, "mean": mean, "se": se,
                         "bound": bound, "error": ";".join(errs)})
    return ResultTable(columns=("d", "n", "reps", "mean", "se", "bound", "error"),
                       rows=rows, meta=cfg.describe())


def _mv_rate(cfg: ExperimentConfig, threads: int | None) -> ResultTable:
    base = RngSeed(cfg.seed)
    p = LinearMVParams(
        a=float(cfg.params.get("a", 0.5)),
        b=float(cfg.params.get("b", -1.0)),
        sigma=float(cfg.params.get("sigma", 1.0)),
        x0=float(cfg.params.get("x0", 1.0)),
        T=float(cfg.params.get("T", 1.0)),
    )
    model = MeanFieldModel.linear(p)
    ref_factor = int(cfg.params.get("ref_factor", 16))
    stride = int(cfg.params.get("stride", 4))
    steps = cfg.steps
    times = np.linspace(0.0, p.T, steps + 1)
    flow = p.mean_at(times)[None, :]
    cells = [(i_n, n, rep) for i_n, n in enumerate(cfg.n_list) for rep in range(cfg.reps)]

    def worker(cell):
        i_n, n, rep = cell
        s = base.child(2, i_n, rep)
        try:
            ens = simulate_particles(model, n, steps, s.child(0))
            ref = simulate_reference(model, flow, ref_factor * n, steps, s.child(1))
            cls = _class_spec(cfg, 1)
            sup = gmmd_sup_over_time(ens, ref, cls, _opt_config(cfg, s.child(2)), stride=stride)
            return sup * sup, ""
        except Exception as exc:
            return math.nan, f"{type(exc).__name__}: {exc}"

    results = _run_cells(cells, worker, threads)
    rows = []
    for i_n, n in enumerate(cfg.n_list):
        vals = [v for (ci, _, _), (v, e) in zip(cells, results) if ci == i_n and not e]
        errs = [e for (ci, _, _), (_, e) in zip(cells, results) if ci == i_n and e]
        arr = np.array(vals)
        mean = float(arr.mean()) if arr.size else math.nan
        se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        rows.append({"n": n, "reps": arr.size, "mean": mean, "se": se,
                     "error": ";".join(errs)})
    return ResultTable(columns=("n", "reps", "mean", "se", "error"), rows=rows,
                       meta=cfg.describe())


def _default_target() -> PotentialRep:
    return PotentialRep.neuron_sum(
        coeffs=[1.0], neurons=[NeuronParams(omega=np.array([0.8]), b=0.6)], budget=1.0)


def target_from_params(params: dict) -> PotentialRep:
    spec = params.get("target")
    if spec is None:
        return _default_target()
    neurons = [NeuronParams(omega=np.array(at[1][:-1], dtype=float), b=float(at[1][-1]))
               for at in spec]
    coeffs = [float(at[0]) for at in spec]
    return PotentialRep.neuron_sum(coeffs=coeffs, neurons=neurons,
                                   budget=float(params.get("budget", 1.0)))


def _biaspot(cfg: ExperimentConfig, threads: int | None) -> ResultTable:
    base = RngSeed(cfg.seed)
    lo = float(cfg.params.get("lo", -1.0))
    hi = float(cfg.params.get("hi", 1.0))
    P = DistributionSpec.uniform_box([lo], [hi])
    true_V = target_from_params(cfg.params)
    n = int(cfg.params.get("n", 4096))
    slack = float(cfg.tolerances.get("slack", 0.02))
    true_model = BiasModel.build(P, true_V)

    def worker(rep):
        s = base.child(3, rep)
        try:
            nu = sample_model(true_model, n, s.child(0)).measure
            opt = _opt_config(cfg, s.child(1))
            model = fit(nu, P, true_V, opt)
            gap = entropy_gap_check(model, true_V, nu, TestClassSpec.barron_ball(),
                                    s.child(2), opt=opt)
            ok = gap.lhs <= gap.rhs + slack + 2 * gap.epsilon
            return {"rep": rep, "lhs": gap.lhs, "rhs": gap.rhs, "epsilon": gap.epsilon,
                    "dphi": gap.dphi, "pass": int(ok), "error": ""}
        except Exception as exc:
            return {"rep": rep, "lhs": math.nan, "rhs": math.nan, "epsilon": math.nan,
                    "dphi": math.nan, "pass": 0, "error": f"{type(exc).__name__}: {exc}"}

    rows = _run_cells(list(range(cfg.reps)), worker, threads)
    return ResultTable(columns=("rep", "lhs", "rhs", "epsilon", "dphi", "pass", "error"),
                       rows=rows, meta=cfg.describe())


def game_from_params(params: dict) -> LqGameParams:
    return LqGameParams(
        b1=float(params.get("b1", 0.0)),
        b2=float(params.get("b2", 1.0)),
        c=float(params.get("c", 0.5)),
        q=float(params.get("q", 1.0)),
        s=float(params.get("s", 0.5)),
        r=float(params.get("r", 1.0)),
        q_T=float(params.get("q_T", 1.0)),
        s_T=float(params.get("s_T", 0.5)),
        sigma=float(params.get("sigma", 1.0)),
        T=float(params.get("T", 1.0)),
        init_mean=float(params.get("init_mean", 1.0)),
        init_var=float(params.get("init_var", 1.0)),
        dim=int(params.get("dim", 1)),
    )


def _mfg_gap(cfg: ExperimentConfig, threads: int | None) -> ResultTable:
    base = RngSeed(cfg.seed)
    game = game_from_params(cfg.params)
    sol = solve_mfg_lq(game, steps=max(cfg.steps, 200))

    def worker(cell):
        i_n, n = cell
        s = base.child(4, i_n)
        try:
            res = nash_gap(game, sol, n, cfg.reps, s, steps=cfg.steps)
            return {"n": n, "reps": cfg.reps, "gap": res.gap_estimate, "se": res.se,
                    "cost": res.cost_mf_strategy, "error": ""}
        except Exception as exc:
            return {"n": n, "reps": cfg.reps, "gap": math.nan, "se": math.nan,
                    "cost": math.nan, "error": f"{type(exc).__name__}: {exc}"}

    rows = _run_cells(list(enumerate(cfg.n_list)), worker, threads)
    return ResultTable(columns=("n", "reps", "gap", "se", "cost", "error"), rows=rows,
                       meta=cfg.describe())


def _modulus(cfg: ExperimentConfig, threads: int | None) -> ResultTable:
    base = RngSeed(cfg.seed)
    T = float(cfg.params.get("T", 1.0))
    n_paths = int(cfg.params.get("n_paths", 1000))
    steps = cfg.steps
    ks = cfg.params.get("k_list", (2, 3, 4, 5, 6, 7))
    model = MeanFieldModel(
        drift=lambda t, x, m: np.zeros_like(x),
        features=(lambda pts: pts[:, 0],),
        sigma=float(cfg.params.get("sigma", 1.0)),
        horizon=T,
        init=DistributionSpec.dirac([0.0]),
        lipschitz=1e-12,
    )
    ens = simulate_reference(model, np.zeros((1, steps + 1)), n_paths, steps, base.child(5))
    dt = T / steps
    rows = []
    for k in ks:
        h = 2.0 ** (-int(k))
        if h < dt:
            rows.append({"k": int(k), "h": h, "mean_sq": math.nan, "ratio": math.nan,
                         "error": "window below grid resolution"})
            continue
        deltas = modulus_batch(ens.values, dt, h)
        mean_sq = float(np.mean(deltas**2))
        ratio = mean_sq / (h * math.log(2.0 * T / h))
        rows.append({"k": int(k), "h": h, "mean_sq": mean_sq, "ratio": ratio, "error": ""})
    return ResultTable(columns=("k", "h", "mean_sq", "ratio", "error"), rows=rows,
                       meta=cfg.describe())


def _tail(cfg: ExperimentConfig, threads: int | None) -> ResultTable:
    base = RngSeed(cfg.seed)
    n = int(cfg.params.get("n", 1024))
    reps = cfg.reps
    gauss = DistributionSpec.gaussian([0.0], [1.0])
    conc = ConcentrationConfig(
        kappa=float(cfg.params.get("kappa", gaussian_t1_kappa(gauss))),
        a_grid=tuple(cfg.params.get("a_grid", (0.02, 0.05, 0.1, 0.15, 0.2))),
    )
    rng = base.child(6).generator()
    pts = rng.standard_normal((reps, n))
    vals = barron_grid_vs_gaussian_1d(gauss, pts,
                                      resolution=int(cfg.params.get("resolution", 4096)))
    mean_hat = float(vals.mean())
    rows = []
    a1 = TestClassSpec.barron_ball().constants.a1
    for a in conc.a_grid:
        freq = float(np.mean(vals - mean_hat >= a))
        bound = math.exp(-n * a * a / (2.0 * a1 * a1 * conc.kappa**2))
        rows.append({"a": float(a), "freq": freq, "bound": bound, "error": ""})
    meta = cfg.describe()
    meta["mean_estimate"] = repr(mean_hat)
    meta["kappa"] = repr(conc.kappa)
    return ResultTable(columns=("a", "freq", "bound", "error"), rows=rows, meta=meta)


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> ResultTable:
    """Execute the configured replication grid; deterministic given the seed."""
    if cfg.experiment in ("iid_rate", "dim_sweep"):
        return _iid_like(cfg, threads)
    if cfg.experiment == "mv_rate":
        return _mv_rate(cfg, threads)
    if cfg.experiment == "biaspot":
        return _biaspot(cfg, threads)
    if cfg.experiment == "mfg_gap":
        return _mfg_gap(cfg, threads)
    if cfg.experiment == "modulus":
        return _modulus(cfg, threads)
    if cfg.experiment == "tail":
        return _tail(cfg, threads)
    raise ValueError(f"unknown experiment {cfg.experiment!r}")


# ---------------------------------------------------------------------------
# Emission


def emit(table: ResultTable, fmt: str, path: str, x_col: str = "n", y_col: str = "mean",
         group_col: str | None = None) -> str:
    """Write the table as CSV or as a self-contained log-log SVG scatter."""
    if fmt == "csv":
        text = table.to_csv()
    elif fmt == "svg":
        text = _render_svg(table, x_col, y_col, group_col)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _render_svg(table: ResultTable, x_col: str, y_col: str, group_col: str | None) -> str:
    groups: dict = {}
    for row in table.rows:
        if row.get("error"):
            continue
        key = row.get(group_col) if group_col else ""
        x, y = float(row[x_col]), float(row[y_col])
        if x > 0 and y > 0:
            groups.setdefault(key, []).append((math.log(x), math.log(y)))
    W, H, pad = 480, 360, 48
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
             f'viewBox="0 0 {W} {H}">',
             f'<rect width="{W}" height="{H}" fill="white"/>']
    all_pts = [p for pts in groups.values() for p in pts]
    if all_pts:
        xs = [p[0] for p in all_pts]
        ys = [p[1] for p in all_pts]
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        x1 = x1 if x1 > x0 else x0 + 1
        y1 = y1 if y1 > y0 else y0 + 1

        def sx(v):
            return pad + (v - x0) / (x1 - x0) * (W - 2 * pad)

        def sy(v):
            return H - pad - (v - y0) / (y1 - y0) * (H - 2 * pad)

        colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")
        for gi, (key, pts) in enumerate(sorted(groups.items(), key=lambda kv: str(kv[0]))):
            col = colors[gi % len(colors)]
            pts = sorted(pts)
            for px, py in pts:
                parts.append(f'<circle cx="{sx(px):.2f}" cy="{sy(py):.2f}" r="3" '
                             f'fill="{col}"/>')
            if len(pts) >= 3:
                f = fit_rate([(math.exp(px), math.exp(py), 0.0) for px, py in pts])
                xa, xb = pts[0][0], pts[-1][0]
                ya = f.intercept + f.slope * xa
                yb = f.intercept + f.slope * xb
                parts.append(f'<path d="M {sx(xa):.2f} {sy(ya):.2f} L {sx(xb):.2f} '
                             f'{sy(yb):.2f}" stroke="{col}" fill="none"/>')
                label = f"{key}: slope {f.slope:.3f}" if key != "" else f"slope {f.slope:.3f}"
                parts.append(f'<text x="{pad + 4}" y="{pad + 14 * (gi + 1)}" '
                             f'font-size="11" fill="{col}">{label}</text>')
    parts.append(f'<text x="{pad}" y="{H - 10}" font-size="11">log {x_col}</text>')
    parts.append(f'<text x="10" y="{pad - 10}" font-size="11">log {y_col}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
