"""Seeded simulation grid: data generation, fitting, scoring and summaries.

Seed layout. Every ``(cell, replication)`` pair gets an integer seed drawn
from ``SeedSequence(master, spawn_key=(cell, rep))``. From that seed:

* data draw: stream ``(4, 0, 0, 0, 0)``
* missingness: stream ``(4, 1, 0, 0, 0)``
* validation sample: stream ``(4, 2, 0, 0, 0)``
* method fits and tuning use the seed directly with the keys documented in
  :mod:`rkpod.methods` and :mod:`rkpod.tuning`.

Surrogate truths use ``SeedSequence(master, spawn_key=(10**6, setting))``.
Results never depend on the worker count: tasks are independent and rows
are sorted before writing.
"""

from __future__ import annotations

import hashlib
import json
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import csvio, methods, metrics
from . import synthdata as sd
from . import tuning
from .initialization import InitStrategy, restart_rng

PRESETS = {
    "p10": lambda n: sd.low_dim_spec(n),
    "p100a0.8": lambda n: sd.high_dim_spec(n, 0.8),
    "p100a1": lambda n: sd.high_dim_spec(n, 1.0),
}
TRUTH_TAG = 10**6
TIMING_FIELDS = ("wall_time",)


def package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


@dataclass(frozen=True)
class Setting:
    name: str
    spec: sd.MixtureSpec


@dataclass
class ExperimentConfig:
    settings: list
    mechanisms: list
    methods: list = field(default_factory=lambda: ["kpod", "rkpod-l0"])
    replications: int = 1
    seed: int = 0
    k: int = 4
    init: str | list = "impt"
    restarts: int = 100
    weights: str = "adaptive"
    gl_variant: str = "ridge"
    lambdas: dict = field(default_factory=dict)
    lambda_scale: str = "per_sample"
    tuning: dict = field(default_factory=dict)
    truth: dict = field(default_factory=lambda: {"kind": "surrogate", "N": 100_000, "restarts": 10})
    validation_n: int = 400
    logistic_params: str = "table"

    def __post_init__(self):
        if int(self.replications) < 1:
            raise ValueError("replications must be >= 1")
        if not self.settings or not self.mechanisms or not self.methods:
            raise ValueError("settings, mechanisms and methods must be nonempty")
        for meth in self.methods:
            if meth not in methods.METHODS:
                raise ValueError(f"unknown method {meth!r}")
        for mech in self.mechanisms:
            if mech["name"] not in sd.MECHANISMS:
                raise ValueError(f"unknown mechanism {mech['name']!r}")
        for kind in self.inits:
            InitStrategy(kind)
        if self.logistic_params not in ("table", "calibrate"):
            raise ValueError("logistic_params must be 'table' or 'calibrate'")
        self.resolved_settings()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def resolved_settings(self) -> list[Setting]:
        out = []
        for s in self.settings:
            s = dict(s)
            name = s.pop("name", None) or s.get("preset")
            if "preset" in s:
                preset = s.pop("preset")
                if preset not in PRESETS:
                    raise ValueError(f"unknown preset {preset!r}")
                spec = PRESETS[preset](int(s.pop("n", 3000)))
                if s:
                    raise ValueError(f"presets only accept n, got {sorted(s)}")
            else:
                spec = sd.MixtureSpec(**s)
            out.append(Setting(str(name), spec))
        return out

    def cells(self) -> list[tuple]:
        """``(cell index, setting index, mechanism, proportion)`` in a fixed order."""
        cells = []
        for si, _ in enumerate(self.settings):
            for mech in self.mechanisms:
                for prop in mech["proportions"]:
                    cells.append((len(cells), si, mech["name"], float(prop)))
        return cells

    @property
    def inits(self) -> list[str]:
        """Init strategies to run; a list runs every method once per strategy."""
        return [self.init] if isinstance(self.init, str) else list(self.init)

    def fit_options(self, init: str | None = None) -> methods.FitOptions:
        return methods.FitOptions(
            k=self.k,
            init=InitStrategy(init or self.inits[0], self.restarts),
            weights=self.weights,
            gl_variant=self.gl_variant,
        )


def replication_seed(master: int, cell: int, rep: int) -> int:
    words = np.random.SeedSequence(master, spawn_key=(cell, rep)).generate_state(2, np.uint32)
    return int(words[0]) << 32 | int(words[1])


def logistic_params(cfg: ExperimentConfig, setting: Setting, mech: str, prop: float):
    if mech not in ("mar", "mnar1") or cfg.logistic_params == "calibrate":
        return None
    entry = sd.LOGISTIC_TABLE.get((setting.name, round(prop, 6)))
    if entry is None:
        return None
    return entry[0] if mech == "mar" else entry[1]


def make_dataset(cfg: ExperimentConfig, cell: tuple, rep: int):
    """Draw ``(masked matrix, labels, true centers, validation)`` for one replication."""
    _, si, mech, prop = cell
    setting = cfg.resolved_settings()[si]
    seed = replication_seed(cfg.seed, cell[0], rep)
    X, labels, centers = sd.gen_mixture(setting.spec, restart_rng(seed, 4, 0, 0, 0, 0))
    m = sd.apply_missingness(
        X, mech, prop, restart_rng(seed, 4, 1, 0, 0, 0), logistic_params(cfg, setting, mech, prop)
    )
    val = None
    if cfg.validation_n:
        Xv, lv, _ = sd.gen_mixture(setting.spec.with_n(cfg.validation_n), restart_rng(seed, 4, 2, 0, 0, 0))
        val = (Xv, lv)
    return m, labels, centers, val


def truth_centers(cfg: ExperimentConfig) -> list[np.ndarray]:
    out = []
    kind = cfg.truth.get("kind", "surrogate")
    for si, setting in enumerate(cfg.resolved_settings()):
        if kind == "analytic":
            out.append(setting.spec.true_centers())
        elif kind == "surrogate":
            rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(TRUTH_TAG, si)))
            out.append(
                metrics.surrogate_truth(
                    setting.spec, rng, int(cfg.truth.get("N", 100_000)), int(cfg.truth.get("restarts", 10))
                )
            )
        else:
            raise ValueError(f"unknown truth kind {kind!r}")
    return out


def _lambda_for(cfg, method, m, seed, kpod, init=None):
    """Raw penalty and the per-sample/grid value reported for it."""
    spec = cfg.lambdas.get(method, "tune")
    if spec != "tune":
        return tuning.raw_lambda(float(spec), m.n, cfg.lambda_scale), float(spec), None
    t = cfg.tuning
    opts = cfg.fit_options(init).with_restarts(int(t.get("restarts", cfg.restarts)))
    arm = cfg.fit_options(init).with_restarts(int(t.get("arm_restarts", opts.init.restarts)))
    res = tuning.select_lambda(
        m,
        method,
        grid=t.get("grid"),
        criterion=t.get("criterion", "instability"),
        opts=opts,
        seed=seed,
        B=int(t.get("B", tuning.DEFAULT_SPLITS)),
        split=t.get("split", "tripartite"),
        scale=cfg.lambda_scale,
        arm_opts=arm,
        kpod=kpod,
    )
    return tuning.raw_lambda(res.chosen_lambda, m.n, cfg.lambda_scale), res.chosen_lambda, res


def run_replication(cfg: ExperimentConfig, cell: tuple, rep: int, truth) -> list[dict]:
    idx, si, mech, prop = cell
    setting = cfg.resolved_settings()[si]
    base = {"cell": idx, "setting": setting.name, "mechanism": mech, "proportion": prop, "replication": rep}
    try:
        m, labels, _, val = make_dataset(cfg, cell, rep)
    except Exception as exc:  # recorded, the grid continues
        return [
            dict(base, method=meth, init=init, status="error: " + _short(exc))
            for init in cfg.inits
            for meth in cfg.methods
        ]
    seed = replication_seed(cfg.seed, idx, rep)
    rows = []
    for init in cfg.inits:
        rows += _fit_all(cfg, base, m, labels, val, truth[si], seed, init)
    return rows


def _fit_all(cfg, base, m, labels, val, truth, seed, init) -> list[dict]:
    opts = cfg.fit_options(init)
    rows = []
    kpod = None
    for meth in cfg.methods:
        row = dict(base, method=meth, init=init)
        t0 = time.perf_counter()
        try:
            if kpod is None and methods.needs_kpod(meth, opts):
                kpod = methods.fit_kpod(m, opts, seed)
            lam_raw, lam = 0.0, 0.0
            if meth.startswith("rkpod"):
                lam_raw, lam, _ = _lambda_for(cfg, meth, m, seed, kpod, init)
            fit = methods.fit_method(meth, m, opts, seed, lam_raw, kpod=kpod)
            wall = time.perf_counter() - t0
            rep_ = metrics.evaluate(fit, truth, labels, val, wall)
            row.update(
                status="ok",
                lam=lam,
                mse=rep_.mse,
                cer=rep_.cer,
                predictive_cer=rep_.predictive_cer if rep_.predictive_cer is not None else "",
                active_features=rep_.active_features,
                loss=fit.loss,
                wall_time=wall,
            )
        except Exception as exc:
            row.update(status="error: " + _short(exc), wall_time=time.perf_counter() - t0)
        rows.append(row)
    return rows


def _short(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}".replace("\n", " ")[:200]


RESULT_FIELDS = [
    "cell", "setting", "mechanism", "proportion", "replication", "method", "init", "status",
    "lam", "mse", "cer", "predictive_cer", "active_features", "loss", "wall_time",
]
SUMMARY_METRICS = ("mse", "cer", "predictive_cer", "active_features", "wall_time")


def _task(args):
    cfg_dict, cell, rep, truth = args
    return run_replication(ExperimentConfig.from_dict(cfg_dict), cell, rep, truth)


def run_bench(cfg: ExperimentConfig, workers: int = 1, truth=None) -> list[dict]:
    truth = truth_centers(cfg) if truth is None else truth
    tasks = [(cfg.to_dict(), cell, rep, truth) for cell in cfg.cells() for rep in range(cfg.replications)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            chunks = list(ex.map(_task, tasks))
    else:
        chunks = [_task(t) for t in tasks]
    order = {m: i for i, m in enumerate(cfg.methods)}
    iorder = {k: i for i, k in enumerate(cfg.inits)}
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r["cell"], r["replication"], iorder[r["init"]], order[r["method"]]))
    return rows


def summarize(rows: list[dict]) -> list[dict]:
    """Mean and sample sd of each metric per (cell, method, init) over successful replications."""
    groups: dict[tuple, list] = {}
    for r in rows:
        key = (int(r["cell"]), r["setting"], r["mechanism"], float(r["proportion"]), r["method"], r["init"])
        groups.setdefault(key, []).append(r)
    out = []
    for key in groups:
        grp = groups[key]
        ok = [r for r in grp if r["status"] == "ok"]
        s = {"cell": key[0], "setting": key[1], "mechanism": key[2], "proportion": key[3], "method": key[4],
             "init": key[5], "n_ok": len(ok), "n_failed": len(grp) - len(ok)}
        for name in SUMMARY_METRICS:
            vals = [float(r[name]) for r in ok if r.get(name, "") != ""]
            s[name + "_mean"] = math.fsum(vals) / len(vals) if vals else ""
            s[name + "_sd"] = statistics.stdev(vals) if len(vals) > 1 else ""
        out.append(s)
    order = {}
    for r in rows:
        order.setdefault((r["init"], r["method"]), len(order))
    out.sort(key=lambda s: (s["cell"], order[s["init"], s["method"]]))
    return out


def summary_fields() -> list[str]:
    head = ["cell", "setting", "mechanism", "proportion", "method", "init", "n_ok", "n_failed"]
    return head + [f"{m}_{s}" for m in SUMMARY_METRICS for s in ("mean", "sd")]


def manifest(cfg: ExperimentConfig, extra: dict | None = None) -> dict:
    items = {
        "config_sha256": cfg.digest(),
        "master_seed": cfg.seed,
        "software_version": package_version(),
        "seed_scheme": "replication seed = SeedSequence(master, spawn_key=(cell, rep)); "
        "data (4,0,0,0,0) missingness (4,1,0,0,0) validation (4,2,0,0,0); "
        "fits (3,0,0,0,restart); truth SeedSequence(master, spawn_key=(1000000, setting))",
    }
    for cell in cfg.cells():
        for rep in range(cfg.replications):
            items[f"seed.cell{cell[0]}.rep{rep}"] = replication_seed(cfg.seed, cell[0], rep)
    items.update(extra or {})
    return items


def write_bench(cfg: ExperimentConfig, out, workers: int = 1, truth=None) -> tuple[list, list]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_bench(cfg, workers, truth)
    summary = summarize(rows)
    csvio.write_records(out / "results.csv", rows, RESULT_FIELDS)
    csvio.write_records(out / "summary.csv", summary, summary_fields())
    csvio.write_keyvalue(out / "manifest.txt", manifest(cfg))
    return rows, summary


def write_generate(cfg: ExperimentConfig, out, na_token: str = csvio.NA_TOKEN) -> list[Path]:
    """Write values (NA tokens), mask and label CSVs for every (cell, replication)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    settings = cfg.resolved_settings()
    for cell in cfg.cells():
        idx, si, mech, prop = cell
        for rep in range(cfg.replications):
            m, labels, centers, _ = make_dataset(cfg, cell, rep)
            stem = f"{settings[si].name}_{mech}_{int(round(prop * 100)):02d}_rep{rep}"
            paths = [out / f"{stem}_values.csv", out / f"{stem}_mask.csv", out / f"{stem}_labels.csv"]
            csvio.write_matrix(paths[0], m, na_token)
            csvio.write_mask(paths[1], m.mask)
            csvio.write_vector(paths[2], labels)
            written += paths
    csvio.write_keyvalue(out / "manifest.txt", manifest(cfg))
    return written


def strip_timing(rows: list[dict]) -> list[dict]:
    return [{k: v for k, v in r.items() if k not in TIMING_FIELDS} for r in rows]
