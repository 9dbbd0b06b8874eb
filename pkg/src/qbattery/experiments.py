"""Experiment jobs: configuration, row generation, CSV and manifest output.

Every job is a pure function of its ``ExperimentConfig``; the CSV is written
by one writer in row-index order, so a rerun of the recorded config produces
the same bytes whatever the worker count.
"""

import csv
import hashlib
import io
import json
import time
from dataclasses import asdict, dataclass, fields
from itertools import combinations
from math import comb
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import bound_band
from .core import BatteryHamiltonian
from .dynamics import CavityBatteryConfig, evolve, jc_analytic_ergotropy
from .metrics import evaluate_batch
from .sampling import SamplerSpec, draw, hamiltonian_for
from .validation import ValidationError

SCHEMA_VERSION = 1
SCATTER_KINDS = ("scatter-coherent", "scatter-incoherent", "scatter-purity", "locked-vs-pr")
EXPERIMENTS = ("surface", *SCATTER_KINDS, "bounds-band", "dynamics")
# sampler and Hamiltonian family used by each scatter experiment unless overridden
SCATTER_DEFAULTS = {
    "scatter-coherent": ("HSRS", "gue"),
    "scatter-incoherent": ("FERS", "equal"),
    "scatter-purity": ("FPRS", "gue"),
    "locked-vs-pr": ("FERS", "equal"),
}
METRIC_COLUMNS = (
    "stored_energy",
    "ergotropy",
    "incoherent_ergotropy",
    "coherent_ergotropy",
    "locked_energy",
    "dephased_locked_energy",
    "efficiency",
    "coherence",
    "diag_entropy",
    "vn_entropy",
    "participation_ratio",
    "purity",
)


@dataclass
class ExperimentConfig:
    experiment: str = "scatter-coherent"
    dim: int = 3
    samples: int = 100_000
    seed: int | None = None
    sampler: str | None = None
    hamiltonian: str | None = None
    weights: tuple = (0.2, 0.5, 0.3)
    fers_ratio: str = "3/2"
    workers: int = 1
    grid: int = 101
    model: str = "JC"
    nb: int = 1
    nc: float = 4
    n_max: int | None = None
    charger: str = "coherent"
    g: float = 0.1
    omega: float = 1.0
    kappa: float = 0.0
    tmax: float = 100.0
    points: int = 1001
    dt: float = 1e-3
    out: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValidationError(f"experiment: must be one of {EXPERIMENTS}")
        self.weights = tuple(float(x) for x in self.weights)
        if self.samples < 1:
            raise ValidationError("samples: must be >= 1")
        if self.dim < 2:
            raise ValidationError("dim: must be >= 2")
        if self.workers < 1:
            raise ValidationError("workers: must be >= 1")
        if self.experiment in SCATTER_KINDS:
            if self.seed is None:
                raise ValidationError("seed: required for scatter jobs")
            sampler, ham = SCATTER_DEFAULTS[self.experiment]
            self.sampler = self.sampler or sampler
            self.hamiltonian = self.hamiltonian or ham
            if self.sampler not in ("HSRS", "FERS", "FPRS"):
                raise ValidationError("sampler: scatter jobs take HSRS, FERS or FPRS")
        if self.hamiltonian not in (None, "gue", "equal"):
            raise ValidationError("hamiltonian: must be 'gue' or 'equal'")
        if self.experiment in ("surface", "bounds-band") and self.grid < 2:
            raise ValidationError("grid: need at least 2 points per axis")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        out = asdict(self)
        out["weights"] = list(self.weights)
        return out

    def cavity(self):
        return CavityBatteryConfig(
            model=self.model,
            n_atoms=self.nb,
            omega=self.omega,
            g=self.g,
            charger=self.charger,
            n_photons=self.nc,
            n_max=self.n_max,
            kappa=self.kappa,
            tmax=self.tmax,
            points=self.points,
            dt=self.dt,
        )


@dataclass
class Table:
    columns: list
    data: dict  # column -> array (float, int or str)

    @property
    def n_rows(self):
        return len(next(iter(self.data.values()))) if self.data else 0


def _population_columns(d):
    return [f"p_{n}" for n in range(1, d + 1)]


def _metric_table(m, extra_front=(), extra_back=()):
    p = m["populations"]
    cols, data = [], {}
    for name, arr in extra_front:
        cols.append(name)
        data[name] = arr
    for k, name in enumerate(_population_columns(p.shape[1])):
        cols.append(name)
        data[name] = p[:, k]
    for name in METRIC_COLUMNS:
        cols.append(name)
        data[name] = m[name]
    cols.append("stage")
    data["stage"] = m["stage"]
    for name, arr in extra_back:
        cols.append(name)
        data[name] = arr
    return Table(cols, data)


# ---------------------------------------------------------------------------
# jobs


def simplex_lattice(d, grid):
    """All ``p`` with entries in ``{0, 1/(grid-1), ..., 1}`` summing to one, in lexicographic order of ``(p_2, .., p_d)``."""
    if grid < 2:
        raise ValidationError("grid: need at least 2 points per axis")
    m = grid - 1
    rows = []
    # stars and bars: bar positions enumerate compositions of m into d parts
    for bars in combinations(range(m + d - 1), d - 1):
        edges = (-1, *bars, m + d - 1)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(d)])
    counts = np.array(rows, dtype=float)
    assert counts.shape[0] == comb(m + d - 1, d - 1)
    order = np.lexsort(counts[:, ::-1][:, :-1].T)
    return counts[order] / m


def run_surface(cfg):
    """Incoherent ergotropy and stored energy over the population simplex (normalised equal spacing)."""
    h = BatteryHamiltonian.equally_spaced(cfg.dim)
    p = simplex_lattice(cfg.dim, cfg.grid)
    m = evaluate_batch(p, h, populations_only=True)
    table = Table(
        [*_population_columns(cfg.dim), "incoherent_ergotropy", "stored_energy", "ergotropy_lower", "ergotropy_upper", "stage"],
        {},
    )
    for k, name in enumerate(_population_columns(cfg.dim)):
        table.data[name] = p[:, k]
    table.data["incoherent_ergotropy"] = m["incoherent_ergotropy"]
    table.data["stored_energy"] = m["stored_energy"]
    # over all states with these populations, ergotropy spans [E_i, E - e_1]
    table.data["ergotropy_lower"] = m["incoherent_ergotropy"]
    table.data["ergotropy_upper"] = m["stored_energy"]
    table.data["stage"] = m["stage"]
    return table, {"energies": h.energies.tolist()}


def run_scatter(cfg):
    spec = SamplerSpec(cfg.sampler, cfg.dim, cfg.seed, fers_ratio=_fraction(cfg.fers_ratio), fprs_weights=cfg.weights)
    h = hamiltonian_for(cfg.seed, cfg.dim, cfg.hamiltonian)
    draws = draw(spec, cfg.samples, workers=cfg.workers)
    idx = np.arange(cfg.samples)
    back = []
    if cfg.sampler == "FERS":
        # FERS draws are dephased states, i.e. populations in the eigenbasis of h
        m = evaluate_batch(draws.populations, h, populations_only=True)
        back.append(("source", draws.extras["source"]))
    else:
        m = evaluate_batch(draws.states, h, validate=False)
        if cfg.sampler == "FPRS":
            back += [("delta_r1", draws.extras["delta_r1"]), ("region", draws.extras["region"])]
    return _metric_table(m, [("index", idx)], back), {"energies": h.energies.tolist()}


def run_bounds(cfg):
    kind = cfg.hamiltonian or "equal"
    h = BatteryHamiltonian.equally_spaced(cfg.dim) if kind == "equal" else hamiltonian_for(cfg.seed or 0, cfg.dim, kind)
    band = bound_band(h, cfg.grid)
    table = Table(["coherence", "lower", "upper"], {"coherence": band.coherence, "lower": band.lower, "upper": band.upper})
    return table, {"energies": h.energies.tolist()}


def run_dynamics(cfg):
    cav = cfg.cavity()
    ts = evolve(cav)
    back = [("photon_number", ts.photon_number), ("trace", ts.trace)]
    if cav.model == "JC" and cav.kappa == 0:
        back.append(("analytic_ergotropy", jc_analytic_ergotropy(cav, ts.times)))
    return _metric_table(ts.metrics, [("time", ts.times)], back), {"n_max": cav.n_max}


def run(cfg):
    if cfg.experiment == "surface":
        return run_surface(cfg)
    if cfg.experiment in SCATTER_KINDS:
        return run_scatter(cfg)
    if cfg.experiment == "bounds-band":
        return run_bounds(cfg)
    return run_dynamics(cfg)


def _fraction(text):
    from fractions import Fraction

    try:
        return Fraction(str(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"fers_ratio: cannot parse {text!r}") from exc


# ---------------------------------------------------------------------------
# output


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return "" if np.isnan(x) else format(float(x) + 0.0, ".17g")
    if isinstance(x, (np.integer, int)):
        return str(int(x))
    return str(x)


def table_to_csv(table):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    cols = [table.data[c] for c in table.columns]
    for i in range(table.n_rows):
        w.writerow([_fmt(c[i]) for c in cols])
    return buf.getvalue()


def _schema(table):
    out = []
    for c in table.columns:
        a = np.asarray(table.data[c])
        kind = "float" if a.dtype.kind == "f" else "int" if a.dtype.kind in "iu" else "str"
        out.append({"name": c, "type": kind})
    return out


def manifest_path(out):
    return Path(str(out) + ".manifest.json")


def execute(cfg, out=None):
    """Run ``cfg``, write the CSV and its manifest; returns the manifest dict."""
    out = Path(out or cfg.out or f"{cfg.experiment}.csv")
    t0 = time.perf_counter()
    table, info = run(cfg)
    text = table_to_csv(table)
    wall = time.perf_counter() - t0
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "tool": "qbattery",
        "version": __version__,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "wall_clock_seconds": wall,
        "created_unix": time.time(),
        "info": info,
        "files": [
            {
                "path": out.name,
                "rows": table.n_rows,
                "columns": _schema(table),
                "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
            }
        ],
    }
    manifest_path(out).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def load_manifest(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_csv(path):
    """Columns of a data file as arrays (float where possible, empty field -> NaN)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in body]
        try:
            out[name] = np.array([float(x) if x != "" else np.nan for x in col])
        except ValueError:
            out[name] = np.array(col, dtype=str)
    return header, out


# ---------------------------------------------------------------------------
# re-validation of written files


def verify_file(path, tol=1e-10):
    """Re-check every row of a data file against the module invariants.

    Returns a list of human-readable failures (empty when the file is clean).
    """
    from .metrics import incoherent_ergotropy_from_populations, stage_labels

    man = load_manifest(manifest_path(path))
    cfg = man["config"]
    header, cols = read_csv(path)
    schema = [c["name"] for c in man["files"][0]["columns"]]
    fails = []
    if header != schema:
        fails.append("columns differ from the manifest schema")
    if len(next(iter(cols.values()), [])) != man["files"][0]["rows"]:
        fails.append("row count differs from the manifest")

    def check(mask, what):
        bad = np.flatnonzero(~mask)
        if bad.size:
            fails.append(f"{what}: {bad.size} rows fail (first row {int(bad[0])})")

    exp = cfg["experiment"]
    if exp == "bounds-band":
        check(cols["lower"] <= cols["upper"] + tol, "lower <= upper")
        check(np.diff(cols["lower"]) >= -tol, "lower envelope non-decreasing")
        if not (cols["coherence"][0] == 0 and cols["lower"][0] == 0 and cols["upper"][0] == 0):
            fails.append("band does not start at (0, 0)")
        return fails

    pcols = [c for c in header if c.startswith("p_")]
    p = np.column_stack([cols[c] for c in pcols])
    d = p.shape[1]
    check(np.abs(p.sum(axis=1) - 1) <= 1e-9, "populations sum to one")
    check(p.min(axis=1) >= -1e-12, "populations non-negative")
    check(stage_labels(p) == cols["stage"], "stage matches recomputation")
    inc = cols["incoherent_ergotropy"]
    check(inc >= -tol, "incoherent ergotropy >= 0")
    check((cols["stage"] != "I") | (np.abs(inc) <= 1e-12), "stage I has zero incoherent ergotropy")
    if exp == "surface":
        e = np.linspace(-1.0, 1.0, d)
        ref = np.array([incoherent_ergotropy_from_populations(row, e) for row in p])
        check(np.abs(ref - inc) <= 1e-12, "incoherent ergotropy recomputation")
        check(inc <= cols["stored_energy"] + tol, "incoherent ergotropy <= stored energy")
        return fails
    erg, coh = cols["ergotropy"], cols["coherent_ergotropy"]
    stored = cols["stored_energy"]
    check(np.abs(erg - inc - coh) <= tol, "ergotropy = incoherent + coherent")
    check(inc <= erg + tol, "incoherent ergotropy <= ergotropy")
    check(erg <= stored + tol, "ergotropy <= energy above ground")
    check(cols["purity"] >= 1.0 / d - tol, "purity >= 1/d")
    check(cols["purity"] <= 1 + tol, "purity <= 1")
    check(cols["coherence"] >= -tol, "coherence >= 0")
    eff = cols["efficiency"]
    undefined = np.abs(stored) <= 1e-12
    check(np.isnan(eff) == undefined, "efficiency empty exactly when stored energy vanishes")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = erg / stored
    check(undefined | (np.abs(eff - ratio) <= 1e-9 * np.maximum(1, np.abs(ratio))), "efficiency = ergotropy / stored energy")
    if exp == "dynamics":
        check(np.abs(cols["trace"] - 1) <= 1e-9, "total-state trace")
        if "analytic_ergotropy" in cols:
            check(np.abs(cols["analytic_ergotropy"] - erg) <= 1e-6, "closed-form ergotropy agreement")
    return fails
