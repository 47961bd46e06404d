"""Command line front end: ``shrinklda {simulate,classify,regions,shrink-compare}``.

Every run writes ``manifest.json`` into its output directory, also when the
run fails, recording the seed, the resolved configuration and its hash,
wall time and the files produced.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import time
import traceback
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .classifier import LabeledDataset, fit_precision, loocv_grid, whiten
from .exceptions import IngestError, InvalidInput
from .precision import GLASSO, IR, LAM, ORACLE, GlassoConfig, LamConfig
from .shrinkage import HARD, NPEB, NPMLE, SM, shrink
from .simlab import COLUMN_LABELS, HARD_ROWS, TABLE_ROWS, MethodGrid, get_setting, run_setting
from .theory import SignalConfig, region_grid, region_grid_csv, v_scan, v_scan_csv

SUBCOMMANDS = ("simulate", "classify", "regions", "shrink-compare")
ROW_SPECS = {label: (mm, v) for label, mm, v in TABLE_ROWS + HARD_ROWS}
DEFAULT_ROWS = tuple(r[0] for r in TABLE_ROWS)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    """Resolved settings of one invocation; serializes to a single JSON object."""

    subcommand: str = "simulate"
    seed: int = 0
    threads: int = 1
    output_dir: str = "."
    # method selections
    precision_methods: list = field(default_factory=lambda: [ORACLE, GLASSO, LAM, IR])
    rows: list = field(default_factory=lambda: list(DEFAULT_ROWS))
    glasso_rho: float | None = None
    lam_split: float = 0.5
    lam_num_splits: int = 1
    # simulate
    settings: list = field(default_factory=lambda: ["1-1"])
    reps: int = 100
    # classify / shrink-compare
    data: str | None = None
    label_col: str = "0"
    delimiter: str = ","
    has_header: bool = True
    fast: bool = False
    # regions
    grid_step: float = 0.01
    scan: bool = False
    scan_points: list = field(default_factory=lambda: [[0.2, 0.1], [0.75, -0.1]])
    scan_p: list = field(default_factory=lambda: [512, 4096])
    scan_methods: list = field(default_factory=lambda: [SM, NPEB, NPMLE])
    draws: int = 100

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise InvalidInput(f"unknown subcommand {self.subcommand!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise InvalidInput("seed must be an integer in [0, 2^64)")
        if self.threads < 0:
            raise InvalidInput("threads must be >= 0 (0 = all cores)")
        for m in self.precision_methods:
            if m.upper() not in (ORACLE, GLASSO, LAM, IR):
                raise InvalidInput(f"unknown precision method {m!r}")
        for r in self.rows:
            if r.upper() not in ROW_SPECS:
                raise InvalidInput(f"unknown rule {r!r}; expected one of {sorted(ROW_SPECS)}")
        for m in self.scan_methods:
            if m.upper() not in (SM, NPEB, NPMLE, HARD):
                raise InvalidInput(f"unknown mean method {m!r}")
        if self.reps < 2:
            raise InvalidInput("reps must be at least 2")
        for s in self.settings:
            get_setting(s)
        if self.glasso_rho is not None and not self.glasso_rho > 0:
            raise InvalidInput("glasso_rho must be positive")
        if len(self.delimiter) != 1:
            raise InvalidInput("delimiter must be a single character")

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise InvalidInput("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise InvalidInput(f"unknown config keys: {', '.join(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(doc)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @property
    def n_jobs(self) -> int:
        return -1 if self.threads == 0 else self.threads

    def glasso_config(self) -> GlassoConfig:
        return GlassoConfig(rho=self.glasso_rho, seed=self.seed)

    def lam_config(self) -> LamConfig:
        return LamConfig(self.lam_split, self.lam_num_splits, self.seed)

    def precision_config(self, method: str):
        method = method.upper()
        if method == GLASSO:
            return self.glasso_config()
        if method == LAM:
            return self.lam_config()
        return None


# ---------------------------------------------------------------------------
# dataset ingestion


@dataclass(frozen=True)
class DatasetFile:
    path: str
    label_column: str | int = 0
    delimiter: str = ","
    has_header: bool = True


def _label_index(label_column, header, ncol):
    if header is not None and isinstance(label_column, str) and label_column in header:
        return header.index(label_column)
    try:
        idx = int(label_column)
    except (TypeError, ValueError):
        raise IngestError(f"label column {label_column!r} not found in header") from None
    if not -ncol <= idx < ncol:
        raise IngestError(f"label column index {idx} out of range for {ncol} columns")
    return idx % ncol


def read_dataset(file: DatasetFile) -> tuple[LabeledDataset, list]:
    """Parse a CSV into a two-group dataset.

    Returns
    -------
    (LabeledDataset, list)
        The dataset and the original label values; ``names[0]`` became
        group 1 and ``names[1]`` group 2 (first-appearance order).
    """
    if not os.path.isfile(file.path):
        raise IngestError(f"no such file: {file.path}")
    with open(file.path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh, delimiter=file.delimiter) if r]
    if not rows:
        raise IngestError("file is empty")
    header = None
    if file.has_header:
        header = [h.strip() for h in rows[0]]
        rows = rows[1:]
    if not rows:
        raise IngestError("file has no data rows")
    ncol = len(header) if header is not None else len(rows[0])
    if ncol < 2:
        raise IngestError("need a label column and at least one feature column")
    li = _label_index(file.label_column, header, ncol)
    names = []
    labels = []
    feats = np.empty((len(rows), ncol - 1))
    line0 = 2 if file.has_header else 1
    for r, row in enumerate(rows):
        line = line0 + r
        if len(row) != ncol:
            raise IngestError(f"line {line}: expected {ncol} fields, found {len(row)}")
        lab = row[li].strip()
        if lab == "":
            raise IngestError(f"line {line}, column {li + 1}: missing label")
        if lab not in names:
            names.append(lab)
            if len(names) > 2:
                raise IngestError(f"line {line}: third label value {lab!r}; only two groups supported")
        labels.append(names.index(lab) + 1)
        k = 0
        for c, cell in enumerate(row):
            if c == li:
                continue
            cell = cell.strip()
            col = header[c] if header is not None else str(c + 1)
            if cell == "" or cell.lower() in ("na", "nan"):
                raise IngestError(f"line {line}, column {col!r}: missing value")
            try:
                feats[r, k] = float(cell)
            except ValueError:
                raise IngestError(f"line {line}, column {col!r}: non-numeric value {cell!r}") from None
            k += 1
    if len(names) != 2:
        raise IngestError(f"need exactly two label values, found {len(names)}")
    if not np.all(np.isfinite(feats)):
        raise IngestError("features contain non-finite values")
    return LabeledDataset(feats, np.asarray(labels)), names


def ingest_csv(file: DatasetFile) -> LabeledDataset:
    return read_dataset(file)[0]


def _dataset_file(cfg: RunConfig) -> DatasetFile:
    if not cfg.data:
        raise InvalidInput("--data is required")
    return DatasetFile(cfg.data, cfg.label_col, cfg.delimiter, cfg.has_header)


# ---------------------------------------------------------------------------
# output helpers


class Outputs:
    """Collects the files a run writes, in order."""

    def __init__(self, root: str):
        self.root = root
        self.paths: list[str] = []

    def write(self, name: str, text: str) -> str:
        os.makedirs(self.root, exist_ok=True)
        path = os.path.join(self.root, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.paths.append(path)
        return path


def _fmt(x: float) -> str:
    # 17 significant digits round-trip a double exactly
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: RunConfig, out: Outputs) -> dict:
    rows = tuple((r, *ROW_SPECS[r.upper()]) for r in (x.upper() for x in cfg.rows))
    grid = MethodGrid(tuple(m.upper() for m in cfg.precision_methods), rows,
                      cfg.glasso_config(), LamConfig(cfg.lam_split, cfg.lam_num_splits))
    info = {}
    for name in cfg.settings:
        setting = get_setting(name).replace(replications=cfg.reps, seed=cfg.seed)
        table = run_setting(setting, grid, n_jobs=cfg.n_jobs)
        out.write(f"setting_{name}.csv", table.to_long_csv())
        out.write(f"setting_{name}_table.csv", table.to_table_csv())
        out.write(f"setting_{name}.json", table.to_json())
        info[name] = {"elapsed_s": table.elapsed_s, **table.params}
        print(f"setting {name}: {table.elapsed_s:.1f}s", file=sys.stderr)
        print(table.to_table_csv())
    return info


def cmd_classify(cfg: RunConfig, out: Outputs) -> dict:
    data, names = read_dataset(_dataset_file(cfg))
    rows = [r.upper() for r in cfg.rows]
    cells = [ROW_SPECS[r] for r in rows]
    precs = [m.upper() for m in cfg.precision_methods if m.upper() != ORACLE]
    if not precs:
        raise InvalidInput("classify needs at least one estimated precision method")
    reports = {}
    for m in precs:
        rep = loocv_grid(data, m, cells, cfg.precision_config(m), seed=cfg.seed,
                         fast=cfg.fast, n_jobs=cfg.n_jobs)
        for r, cell in zip(rows, cells):
            reports[(r, m)] = rep[cell]

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rule"] + [COLUMN_LABELS.get(m, m) for m in precs])
    for r in rows:
        w.writerow([r] + [f"{reports[(r, m)].errors}/{reports[(r, m)].n}" for m in precs])
    table = buf.getvalue()
    out.write("classify_table.csv", table)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = [(r, m) for m in precs for r in rows]
    w.writerow(["row", "label", "group"] + [f"{r}.{m}" for r, m in keys])
    for i in range(data.n):
        w.writerow([i, names[data.labels[i] - 1], int(data.labels[i])]
                   + [int(reports[k].predicted[i]) for k in keys])
    out.write("classify_predictions.csv", buf.getvalue())
    print(table)
    return {"label_mapping": {names[0]: 1, names[1]: 2}, "n": data.n, "p": data.p}


def cmd_regions(cfg: RunConfig, out: Outputs) -> dict:
    reports = region_grid(cfg.grid_step)
    out.write("regions.csv", region_grid_csv(reports))
    info = {"grid_points": len(reports)}
    if cfg.scan:
        parts = []
        for k, (a, b) in enumerate(cfg.scan_points):
            sc = SignalConfig(float(a), float(b), int(cfg.scan_p[0]))
            rows = v_scan(sc, cfg.scan_p, tuple(m.upper() for m in cfg.scan_methods), cfg.draws,
                          cfg.seed)
            text = v_scan_csv(rows, sc)
            parts.append(text if k == 0 else text.split("\n", 1)[1])
        out.write("vscan.csv", "".join(parts))
    return info


def cmd_shrink_compare(cfg: RunConfig, out: Outputs) -> dict:
    data, names = read_dataset(_dataset_file(cfg))
    method = cfg.precision_methods[0].upper() if len(cfg.precision_methods) == 1 else IR
    prec = fit_precision(data, method, cfg.precision_config(method))
    z1 = whiten(data.group(1), prec).mean(axis=0)
    z2 = whiten(data.group(2), prec).mean(axis=0)
    d = z1 - z2
    sd = math.sqrt(1.0 / data.n1 + 1.0 / data.n2)
    cols = {m: shrink(d, sd, m).estimates for m in (SM, NPEB, NPMLE)}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["component", "SM", "NPEB", "NPMLE"])
    for j in range(d.size):
        w.writerow([j, _fmt(cols[SM][j]), _fmt(cols[NPEB][j]), _fmt(cols[NPMLE][j])])
    out.write("shrink_compare.csv", buf.getvalue())
    return {"precision_method": method, "label_mapping": {names[0]: 1, names[1]: 2}}


COMMANDS = {
    "simulate": cmd_simulate,
    "classify": cmd_classify,
    "regions": cmd_regions,
    "shrink-compare": cmd_shrink_compare,
}


# ---------------------------------------------------------------------------
# argument parsing


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _add_common(sp):
    sp.add_argument("--config", help="JSON config file; command-line flags override it")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--threads", type=int, help="parallel workers (0 = all cores)")
    sp.add_argument("--out", dest="output_dir", help="output directory")


def _add_methods(sp):
    sp.add_argument("--methods", dest="precision_methods", type=_csv_list,
                    help="precision estimators, e.g. glasso,lam,ir")
    sp.add_argument("--rules", dest="rows", type=_csv_list,
                    help="rules, e.g. NPEB1,NPEB2,NPMLE1,NPMLE2,SM,HARD1")
    sp.add_argument("--glasso-rho", type=float)
    sp.add_argument("--lam-split", type=float)
    sp.add_argument("--lam-num-splits", type=int)


def _add_data(sp):
    sp.add_argument("--data", required=True, help="CSV file")
    sp.add_argument("--label-col", help="label column name or 0-based index (default 0)")
    sp.add_argument("--delimiter")
    sp.add_argument("--no-header", dest="has_header", action="store_const", const=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shrinklda",
        description="Whitened LDA with empirical-Bayes shrinkage of the mean difference.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("simulate", help="replicate the simulation settings")
    _add_common(sp)
    _add_methods(sp)
    sp.add_argument("--settings", type=_csv_list, help="e.g. 1-1,3-2")
    sp.add_argument("--reps", type=int)

    sp = sub.add_parser("classify", help="LOOCV error table on a CSV dataset")
    _add_common(sp)
    _add_methods(sp)
    _add_data(sp)
    sp.add_argument("--fast", action="store_const", const=True,
                    help="reuse the full-data precision estimate in every fold")

    sp = sub.add_parser("regions", help="region membership grid and V-statistic scan")
    _add_common(sp)
    sp.add_argument("--grid-step", type=float)
    sp.add_argument("--scan", action="store_const", const=True)
    sp.add_argument("--scan-p", type=lambda s: [int(x) for x in _csv_list(s)])
    sp.add_argument("--draws", type=int)

    sp = sub.add_parser("shrink-compare", help="per-component SM/NPEB/NPMLE estimates")
    _add_common(sp)
    _add_data(sp)
    sp.add_argument("--method", dest="precision_methods", type=lambda s: [s],
                    help="precision estimator used for whitening (default ir)")
    sp.add_argument("--glasso-rho", type=float)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    doc = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise InvalidInput(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"config is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise InvalidInput("config must be a JSON object")
    doc["subcommand"] = args.subcommand
    if args.subcommand == "shrink-compare" and "precision_methods" not in doc:
        doc["precision_methods"] = [IR]
    known = {f.name for f in fields(RunConfig)}
    for key, val in vars(args).items():
        if key in known and val is not None and key != "subcommand":
            doc[key] = val
    return RunConfig.from_dict(doc)


def _write_manifest(out_dir, cfg_doc, seed, started, t0, outputs, status, error, extra):
    manifest = {
        "seed": seed,
        "config": cfg_doc,
        "config_hash": hashlib.sha256(json.dumps(cfg_doc, sort_keys=True).encode()).hexdigest()
        if cfg_doc is not None else None,
        "started_at": started,
        "elapsed_s": round(time.perf_counter() - t0, 3),
        "tool_version": __version__,
        "versions": {"python": platform.python_version(), "numpy": np.__version__},
        "outputs": outputs,
        "status": status,
        "error": error,
        "details": extra,
    }
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
    return path


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    out_dir = args.output_dir or "."
    cfg_doc, seed, outputs, extra = None, args.seed, [], {}
    try:
        cfg = resolve_config(args)
    except InvalidInput as exc:
        _write_manifest(out_dir, cfg_doc, seed, started, t0, outputs, "usage-error", str(exc), extra)
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    cfg_doc, seed, out_dir = asdict(cfg), cfg.seed, cfg.output_dir
    out = Outputs(out_dir)
    status, error, code = "ok", None, 0
    try:
        extra = COMMANDS[cfg.subcommand](cfg, out) or {}
    except (InvalidInput, IngestError, OSError) as exc:
        status, error, code = "error", f"{type(exc).__name__}: {exc}", 1
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
    except Exception as exc:  # recorded, then re-raised for a traceback
        status, error = "error", "".join(traceback.format_exception_only(type(exc), exc)).strip()
        _write_manifest(out_dir, cfg_doc, seed, started, t0, out.paths, status, error, extra)
        raise
    _write_manifest(out_dir, cfg_doc, seed, started, t0, out.paths, status, error, extra)
    return code


if __name__ == "__main__":
    sys.exit(main())
